//! Run orchestration: cohort loading, splitting, training, prediction and
//! evaluation wired into file-based reports with a checksummed manifest.

mod config;
mod output;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agreement::{bland_altman, confusion, error_histogram, BlandAltmanSummary, ConfusionMatrix, ErrorHistogram};
use crate::calibration::{brier, calibration_table, probability_surfaces, BrierVariant, CalibrationBin, ProbabilitySurfaces};
use crate::cohort::{
    ingest_cohort, stratified_split, synthesize_cohort, Cohort, CohortError, LabelSystem, MarginalSpec, StratumSelector,
    N_CLASSES,
};
use crate::features::{fit_schema, EncoderSchema, FeatureError, InputVariant};
use crate::gold_standard::{apply_consensus, read_reviewer_labels, ConsensusError};
use crate::metrics::{
    composite_ranking, metric_report, read_predictions, write_predictions, CompositeScore, MetricError, MetricOptions,
    MetricReport, PredictionSet, ProcessMetricsRow, RocAnalysis,
};
use crate::models::{
    permutation_importance, predict_proba, train_boosted, train_feedforward, train_jepa, tune_thresholds, BoostedConfig,
    ClassThreshold, Dataset, FeedForwardConfig, GroupImportance, JepaConfig, LearningCurve, ModelBundle, ModelError,
    TrainedModel,
};

pub use config::{DataConfig, MetricConfig, RunConfig, BOOSTED, FEEDFORWARD, JEPA, MODEL_PROCESSES, NURSE};
pub use output::{manifest_name, num, opt, sha256_hex, write_atomic, Artifacts, RunManifest, StageTime, Table, MANIFEST_FILE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub struct RunError {
    pub stage: String,
    pub kind: ErrorKind,
    pub message: String,
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.stage, self.message)
    }
}

impl RunError {
    pub fn new(stage: &str, kind: ErrorKind, message: impl Into<String>) -> Self {
        Self { stage: stage.to_string(), kind, message: message.into() }
    }

    /// Process exit status: 2 config, 3 data, 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Numeric => 4,
        }
    }
}

pub type Result<T, E = RunError> = std::result::Result<T, E>;

/// Module errors know which exit category they belong to.
pub trait Classify: fmt::Display {
    fn kind(&self) -> ErrorKind;
}

impl Classify for CohortError {
    fn kind(&self) -> ErrorKind {
        match self {
            CohortError::InvalidSpec(_) | CohortError::InvalidFraction(_) => ErrorKind::Config,
            _ => ErrorKind::Data,
        }
    }
}

impl Classify for ModelError {
    fn kind(&self) -> ErrorKind {
        match self {
            ModelError::NonFiniteLoss(_) => ErrorKind::Numeric,
            ModelError::InvalidConfig(_) => ErrorKind::Config,
            _ => ErrorKind::Data,
        }
    }
}

impl Classify for MetricError {
    fn kind(&self) -> ErrorKind {
        if self.is_numeric() {
            ErrorKind::Numeric
        } else if matches!(self, MetricError::InvalidLevel(_)) {
            ErrorKind::Config
        } else {
            ErrorKind::Data
        }
    }
}

impl Classify for FeatureError {
    fn kind(&self) -> ErrorKind {
        match self {
            FeatureError::ZeroTextDim => ErrorKind::Config,
            _ => ErrorKind::Data,
        }
    }
}

impl Classify for ConsensusError {
    fn kind(&self) -> ErrorKind {
        ErrorKind::Data
    }
}

impl Classify for std::io::Error {
    fn kind(&self) -> ErrorKind {
        ErrorKind::Data
    }
}

pub trait StageExt<T> {
    fn at(self, stage: &str) -> Result<T>;
}

impl<T, E: Classify> StageExt<T> for std::result::Result<T, E> {
    fn at(self, stage: &str) -> Result<T> {
        self.map_err(|e| RunError::new(stage, e.kind(), e.to_string()))
    }
}

fn open(stage: &str, path: &Path) -> Result<File> {
    File::open(path).map_err(|e| RunError::new(stage, ErrorKind::Data, format!("{}: {e}", path.display())))
}

/// The configured cohort file, or a synthetic cohort from the built-in
/// marginals; reviewer consensus is applied when configured.
pub fn load_cohort(cfg: &RunConfig) -> Result<Cohort> {
    let mut cohort = match &cfg.data.cohort {
        Some(path) => ingest_cohort(open("load", path)?, cfg.cohort_format()).at("load")?,
        None => synthesize(cfg)?,
    };
    if let Some(path) = &cfg.data.reviewer_labels {
        let labels = read_reviewer_labels(open("consensus", path)?).at("consensus")?;
        apply_consensus(&mut cohort, &labels).at("consensus")?;
    }
    Ok(cohort)
}

pub fn synthesize(cfg: &RunConfig) -> Result<Cohort> {
    synthesize_cohort(&MarginalSpec::table1(), cfg.data.synthetic_cases, cfg.sub_seed(config::seeds::SYNTH)).at("generate")
}

pub fn stratum(label_system: LabelSystem) -> StratumSelector {
    match label_system {
        LabelSystem::French => StratumSelector::GoldTriage,
        LabelSystem::Gemsa => StratumSelector::Gemsa,
    }
}

/// Train and evaluation parts, stratified on the configured label system.
pub fn split(cfg: &RunConfig, cohort: &Cohort) -> Result<(Cohort, Cohort)> {
    stratified_split(cohort, cfg.data.split_fraction, stratum(cfg.label_system), cfg.sub_seed(config::seeds::SPLIT))
        .at("split")
}

/// `(case_id, rank)` for records whose gold label is defined.
pub fn gold_list(cohort: &Cohort, label_system: LabelSystem) -> Vec<(String, u8)> {
    cohort
        .records
        .iter()
        .filter_map(|r| label_system.gold_rank(r).map(|g| (r.case_id.clone(), g)))
        .collect()
}

/// Hard nurse labels under the FRENCH scale.
pub fn nurse_predictions(cohort: &Cohort) -> Result<PredictionSet> {
    let rows = cohort.records.iter().filter_map(|r| r.nurse_triage.map(|l| (r.case_id.clone(), l.rank()))).collect();
    PredictionSet::from_labels(NURSE, rows).at("predict")
}

#[derive(Debug, Clone)]
pub struct TrainedProcess {
    pub name: String,
    pub bundle: ModelBundle,
    pub curve: LearningCurve,
    pub importance: Vec<GroupImportance>,
}

fn dataset(variant: InputVariant, schema: &EncoderSchema, cohort: &Cohort, ls: LabelSystem) -> Result<Dataset> {
    let labelled: Vec<_> = cohort.records.iter().filter_map(|r| ls.gold_rank(r).map(|g| (r, g))).collect();
    let vectors: Vec<_> = labelled.iter().map(|(r, _)| variant.encode(r, schema)).collect();
    let ranks: Vec<u8> = labelled.iter().map(|(_, g)| *g).collect();
    if vectors.is_empty() {
        return Dataset::new(Vec::new(), Vec::new(), variant.schema_id(schema)).at("features");
    }
    Dataset::from_vectors(&vectors, &ranks).at("features")
}

/// Trains every built-in model named in `cfg.processes`, validating on `val`.
pub fn train_processes(cfg: &RunConfig, train: &Cohort, val: &Cohort) -> Result<Vec<TrainedProcess>> {
    let schema = fit_schema(train, cfg.data.text_dim, cfg.sub_seed(config::seeds::TEXT)).at("features")?;
    let variant = cfg.input_variant;
    let train_set = dataset(variant, &schema, train, cfg.label_system)?;
    let val_set = dataset(variant, &schema, val, cfg.label_system)?;
    if train_set.is_empty() {
        return Err(RunError::new("train", ErrorKind::Data, "no labelled training cases"));
    }
    let groups = variant.groups(&schema);
    let mut out = Vec::new();
    for name in cfg.processes.iter().filter(|p| MODEL_PROCESSES.contains(&p.as_str())) {
        let (model, curve) = match name.as_str() {
            FEEDFORWARD => {
                let c = FeedForwardConfig { seed: cfg.sub_seed(config::seeds::FEEDFORWARD), ..cfg.feedforward.clone() };
                let (m, curve) = train_feedforward(&train_set, &val_set, &c).at("train")?;
                (TrainedModel::FeedForward(m), curve)
            }
            BOOSTED => {
                let c = BoostedConfig { seed: cfg.sub_seed(config::seeds::BOOSTED), ..cfg.boosted.clone() };
                let (m, curve) = train_boosted(&train_set, &val_set, &c).at("train")?;
                (TrainedModel::Boosted(m), curve)
            }
            _ => {
                let c = JepaConfig { seed: cfg.sub_seed(config::seeds::JEPA), ..cfg.jepa.clone() };
                let (m, curve) = train_jepa(&train_set, &val_set, &c).at("train")?;
                (TrainedModel::Jepa(m), curve)
            }
        };
        let importance = if val_set.is_empty() {
            Vec::new()
        } else {
            permutation_importance(
                |x| model.predict_row(x),
                &val_set,
                &groups,
                cfg.metrics.importance_repeats,
                cfg.sub_seed(config::seeds::IMPORTANCE),
            )
        };
        let bundle = ModelBundle::new(cfg.label_system, variant, schema.clone(), model);
        out.push(TrainedProcess { name: name.clone(), bundle, curve, importance });
    }
    Ok(out)
}

/// Probabilities of a saved model for every record of `cohort`.
pub fn predict_bundle(name: &str, bundle: &ModelBundle, cohort: &Cohort) -> Result<PredictionSet> {
    let rows = cohort
        .records
        .iter()
        .map(|r| {
            let fv = bundle.input_variant.encode(r, &bundle.schema);
            predict_proba(&bundle.model, &fv).map(|p| (r.case_id.clone(), p))
        })
        .collect::<std::result::Result<Vec<_>, _>>()
        .at("predict")?;
    PredictionSet::from_probs(name, rows).at("predict")
}

/// Collects the prediction sets named in `cfg.processes`, in that order,
/// from trained models, nurse labels and the external predictions file.
pub fn gather_predictions(cfg: &RunConfig, trained: &[(String, ModelBundle)], cohort: &Cohort) -> Result<Vec<PredictionSet>> {
    let external = match &cfg.data.predictions {
        Some(path) => read_predictions(open("predict", path)?).at("predict")?,
        None => Vec::new(),
    };
    cfg.processes
        .iter()
        .map(|name| {
            if let Some((_, b)) = trained.iter().find(|(n, _)| n == name) {
                predict_bundle(name, b, cohort)
            } else if name == NURSE {
                nurse_predictions(cohort)
            } else if let Some(set) = external.iter().find(|s| &s.process == name) {
                Ok(set.clone())
            } else {
                Err(RunError::new("predict", ErrorKind::Config, format!("no predictions for process `{name}`")))
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlandAltmanStats {
    pub bias: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Every analysis of one process.
#[derive(Debug, Clone)]
pub struct ProcessEvaluation {
    pub report: MetricReport,
    pub roc: RocAnalysis,
    pub brier: f64,
    pub thresholds: Vec<ClassThreshold>,
    pub calibration: Vec<CalibrationBin>,
    pub surfaces: ProbabilitySurfaces,
    pub confusion: ConfusionMatrix,
    pub bland_altman: BlandAltmanSummary,
    pub errors: ErrorHistogram,
    pub case_ids: Vec<String>,
    pub gold: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub label_system: LabelSystem,
    pub processes: Vec<ProcessEvaluation>,
    pub ranking: Vec<CompositeScore>,
}

/// Evaluates each prediction set against `gold`, then ranks them.
pub fn evaluate_sets(cfg: &RunConfig, sets: &[PredictionSet], gold: &[(String, u8)]) -> Result<Evaluation> {
    let opts = MetricOptions { kappa: cfg.metrics.kappa, ci_level: cfg.metrics.ci_level };
    let ls = cfg.label_system.name();
    let mut processes = Vec::with_capacity(sets.len());
    for set in sets {
        let stage = format!("evaluate:{}", set.process);
        let data = set.align(gold).at(&stage)?;
        let (report, roc) = metric_report(&set.process, ls, set.hard_labels, &data, &opts).at(&stage)?;
        let pred = data.pred_ranks();
        let calibration = (1..=N_CLASSES as u8)
            .map(|c| calibration_table(&data.probs, &data.gold, c, cfg.metrics.bins))
            .collect::<std::result::Result<Vec<_>, _>>()
            .at(&stage)?
            .concat();
        processes.push(ProcessEvaluation {
            brier: brier(&data.probs, &data.gold, cfg.metrics.brier).at(&stage)?,
            thresholds: tune_thresholds(&data.probs, &data.gold),
            calibration,
            surfaces: probability_surfaces(&data.probs, &data.gold).at(&stage)?,
            confusion: confusion(&pred, &data.gold).at(&stage)?,
            bland_altman: bland_altman(&pred, &data.gold).at(&stage)?,
            errors: error_histogram(&pred, &data.gold).at(&stage)?,
            case_ids: data.case_ids,
            gold: data.gold,
            report,
            roc,
        });
    }
    let rows: Vec<ProcessMetricsRow> = processes.iter().map(|p| p.report.row()).collect();
    let ranking = composite_ranking(&rows, cfg.metrics.include_gold_row).at("rank")?;
    for (p, score) in processes.iter_mut().zip(&ranking) {
        p.report.composite = Some(score.composite);
    }
    Ok(Evaluation { label_system: cfg.label_system, processes, ranking })
}

/// Gold labels of `cohort` for cases predicted by at least one set.
pub fn gold_for(cohort: &Cohort, label_system: LabelSystem, sets: &[PredictionSet]) -> Vec<(String, u8)> {
    let predicted: BTreeSet<&str> = sets.iter().flat_map(|s| s.case_ids.iter().map(String::as_str)).collect();
    gold_list(cohort, label_system).into_iter().filter(|(id, _)| predicted.contains(id.as_str())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct ProcessSummary<'a> {
    metrics: &'a MetricReport,
    brier: f64,
    brier_variant: BrierVariant,
    bland_altman: BlandAltmanStats,
    thresholds: &'a [ClassThreshold],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct ReportDocument<'a> {
    label_system: &'static str,
    input_variant: &'static str,
    seed: u64,
    n_evaluated: usize,
    processes: Vec<ProcessSummary<'a>>,
    ranking: &'a [CompositeScore],
}

/// Ranking table in the column order of the published comparison tables.
pub fn ranking_table(eval: &Evaluation) -> Table {
    let mut t = Table::new(&[
        "process", "mae", "rmse", "kappa", "spearman", "f1_micro", "f1_macro", "exact_agreement", "near_agreement",
        "composite", "auc_macro", "brier",
    ]);
    for score in &eval.ranking {
        match eval.processes.iter().find(|p| p.report.process == score.process) {
            Some(p) => {
                let r = &p.report;
                t.push(vec![
                    r.process.clone(),
                    num(r.mae),
                    num(r.rmse),
                    num(r.weighted_kappa),
                    num(r.spearman),
                    num(r.f1_micro),
                    num(r.f1_macro),
                    num(r.exact_agreement),
                    num(r.near_agreement),
                    num(score.composite),
                    opt(r.auc_macro),
                    num(p.brier),
                ]);
            }
            None => {
                let g = ProcessMetricsRow::gold();
                let mut row = vec![score.process.clone(), num(g.mae), num(g.rmse), num(g.kappa), num(g.spearman)];
                row.extend(["", "", "", ""].map(String::from));
                row.extend([num(score.composite), String::new(), String::new()]);
                t.push(row);
            }
        }
    }
    t
}

/// Writes the metrics report and every metric/agreement table.
pub fn write_evaluation(art: &mut Artifacts, cfg: &RunConfig, eval: &Evaluation) -> Result<()> {
    let doc = ReportDocument {
        label_system: eval.label_system.name(),
        input_variant: cfg.input_variant.name(),
        seed: cfg.seed,
        n_evaluated: eval.processes.first().map_or(0, |p| p.report.n),
        processes: eval
            .processes
            .iter()
            .map(|p| ProcessSummary {
                metrics: &p.report,
                brier: p.brier,
                brier_variant: cfg.metrics.brier,
                bland_altman: BlandAltmanStats {
                    bias: p.bland_altman.bias,
                    sd: p.bland_altman.sd,
                    lower: p.bland_altman.lower,
                    upper: p.bland_altman.upper,
                },
                thresholds: &p.thresholds,
            })
            .collect(),
        ranking: &eval.ranking,
    };
    art.write_json("report.json", &doc)?;
    art.write_table("tables/ranking.csv", &ranking_table(eval))?;

    let mut per_class = Table::new(&[
        "process", "class", "f1", "auc", "auc_variance", "auc_lower", "auc_upper", "threshold", "threshold_f1",
    ]);
    let mut points = Table::new(&["process", "class", "threshold", "fpr", "tpr"]);
    let mut mean = Table::new(&["process", "fpr", "tpr"]);
    let mut conf = Table::new(&["process", "gold", "pred", "count"]);
    let mut ba = Table::new(&["process", "case_id", "mean", "difference"]);
    let mut hist = Table::new(&["process", "difference", "count"]);
    for p in &eval.processes {
        let name = &p.report.process;
        for c in 0..N_CLASSES {
            let auc = p.report.auc_per_class[c];
            let th = p.thresholds[c];
            per_class.push(vec![
                name.clone(),
                (c + 1).to_string(),
                opt(p.report.per_class_f1[c]),
                opt(auc.map(|a| a.auc)),
                opt(auc.map(|a| a.variance)),
                opt(auc.map(|a| a.lower)),
                opt(auc.map(|a| a.upper)),
                opt(th.threshold),
                opt(th.f1),
            ]);
        }
        for class in &p.roc.per_class {
            for pt in &class.points {
                points.push(vec![name.clone(), class.rank.to_string(), num(pt.threshold), num(pt.fpr), num(pt.tpr)]);
            }
        }
        for (f, t) in &p.roc.mean_curve {
            mean.push(vec![name.clone(), num(*f), num(*t)]);
        }
        for g in 1..=N_CLASSES as u8 {
            for q in 1..=N_CLASSES as u8 {
                conf.push(vec![name.clone(), g.to_string(), q.to_string(), p.confusion.get(g, q).to_string()]);
            }
        }
        for (id, (m, d)) in p.case_ids.iter().zip(&p.bland_altman.pairs) {
            ba.push(vec![name.clone(), id.clone(), num(*m), num(*d)]);
        }
        for (d, c) in p.errors.bins() {
            hist.push(vec![name.clone(), d.to_string(), c.to_string()]);
        }
    }
    art.write_table("tables/per_class.csv", &per_class)?;
    art.write_table("tables/roc_points.csv", &points)?;
    art.write_table("tables/roc_mean.csv", &mean)?;
    art.write_table("tables/confusion.csv", &conf)?;
    art.write_table("tables/bland_altman.csv", &ba)?;
    art.write_table("tables/error_histogram.csv", &hist)?;
    Ok(())
}

/// Writes reliability tables, the mean-probability heatmap and ridge data.
pub fn write_calibration(art: &mut Artifacts, cfg: &RunConfig, eval: &Evaluation) -> Result<()> {
    let mut cal = Table::new(&[
        "process", "class", "bin", "lower", "upper", "count", "positives", "mean_predicted", "observed", "gap",
    ]);
    let mut heat = Table::new(&["process", "true_class", "pred_class", "mean_probability", "defined"]);
    let mut ridge = Table::new(&["process", "true_class", "pred_class", "case_id", "probability"]);
    let mut brier_doc = BTreeMap::new();
    for p in &eval.processes {
        let name = &p.report.process;
        brier_doc.insert(name.clone(), p.brier);
        for b in &p.calibration {
            cal.push(vec![
                name.clone(),
                b.class.to_string(),
                b.bin.to_string(),
                num(b.lower),
                num(b.upper),
                b.count.to_string(),
                b.positives.to_string(),
                num(b.mean_predicted),
                num(b.observed),
                num(b.gap),
            ]);
        }
        for (t, row) in p.surfaces.heatmap.iter().enumerate() {
            for c in 0..N_CLASSES {
                heat.push(vec![
                    name.clone(),
                    (t + 1).to_string(),
                    (c + 1).to_string(),
                    opt(row.map(|r| r[c])),
                    row.is_some().to_string(),
                ]);
            }
        }
        // ridge values are stored in case order within each gold class
        let mut by_class: Vec<Vec<&str>> = vec![Vec::new(); N_CLASSES];
        for (id, &g) in p.case_ids.iter().zip(&p.gold) {
            by_class[g as usize - 1].push(id);
        }
        for s in &p.surfaces.ridges {
            for (id, v) in by_class[s.true_class as usize - 1].iter().zip(&s.values) {
                ridge.push(vec![name.clone(), s.true_class.to_string(), s.pred_class.to_string(), id.to_string(), num(*v)]);
            }
        }
    }
    art.write_table("tables/calibration.csv", &cal)?;
    art.write_table("tables/heatmap.csv", &heat)?;
    art.write_table("tables/ridges.csv", &ridge)?;
    art.write_json(
        "calibration.json",
        &serde_json::json!({ "brier_variant": cfg.metrics.brier, "bins": cfg.metrics.bins, "brier": brier_doc }),
    )?;
    Ok(())
}

/// Saves model bundles, learning curves and permutation importances.
pub fn write_training(art: &mut Artifacts, trained: &[TrainedProcess]) -> Result<()> {
    let mut curves = Table::new(&["process", "epoch", "train_accuracy", "train_log_loss", "val_accuracy", "val_log_loss"]);
    let mut imp = Table::new(&["process", "group", "importance"]);
    for t in trained {
        let mut bytes = Vec::new();
        t.bundle.save(&mut bytes).at("train")?;
        art.write(&format!("models/{}.json", t.name), &bytes)?;
        for e in &t.curve.epochs {
            curves.push(vec![
                t.name.clone(),
                e.epoch.to_string(),
                num(e.train_accuracy),
                num(e.train_log_loss),
                opt(e.val_accuracy),
                opt(e.val_log_loss),
            ]);
        }
        for g in &t.importance {
            imp.push(vec![t.name.clone(), g.group.clone(), num(g.importance)]);
        }
    }
    art.write_table("tables/learning_curves.csv", &curves)?;
    art.write_table("tables/importance.csv", &imp)?;
    Ok(())
}

pub fn write_prediction_file(art: &mut Artifacts, sets: &[PredictionSet]) -> Result<()> {
    let mut bytes = Vec::new();
    write_predictions(sets, &mut bytes).at("predict")?;
    art.write("predictions.jsonl", &bytes)?;
    Ok(())
}

pub fn load_bundle(path: &Path) -> Result<ModelBundle> {
    ModelBundle::load(std::io::BufReader::new(open("predict", path)?)).at("predict")
}

/// End-to-end run: load or generate the cohort, split, train, predict,
/// evaluate, calibrate and rank, writing every artifact under `cfg.out`.
pub fn evaluate_run(cfg: &RunConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let mut art = Artifacts::new(&cfg.out);
    art.stage("load");
    let cohort = load_cohort(cfg)?;
    art.stage("split");
    let (train, test) = split(cfg, &cohort)?;
    let mut parts = Table::new(&["case_id", "part"]);
    for (part, c) in [("train", &train), ("test", &test)] {
        for r in &c.records {
            parts.push(vec![r.case_id.clone(), part.into()]);
        }
    }
    art.write_table("split.csv", &parts)?;
    art.stage("train");
    let trained = train_processes(cfg, &train, &test)?;
    write_training(&mut art, &trained)?;
    art.stage("predict");
    let bundles: Vec<(String, ModelBundle)> = trained.into_iter().map(|t| (t.name, t.bundle)).collect();
    let sets = gather_predictions(cfg, &bundles, &test)?;
    write_prediction_file(&mut art, &sets)?;
    art.stage("evaluate");
    let gold = gold_list(&test, cfg.label_system);
    if gold.is_empty() {
        return Err(RunError::new("evaluate", ErrorKind::Data, "no evaluation cases with a defined gold label"));
    }
    let eval = evaluate_sets(cfg, &sets, &gold)?;
    write_evaluation(&mut art, cfg, &eval)?;
    art.stage("calibrate");
    write_calibration(&mut art, cfg, &eval)?;
    art.finish("report", cfg)
}
