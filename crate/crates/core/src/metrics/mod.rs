//! Ordinal agreement metrics, one-vs-rest ROC analysis with DeLong intervals,
//! and the composite Z-score ranking of triage processes.
//!
//! Ranks are ordinal positions `1..=6` (1 = most acute) under either label
//! system. Cases whose gold label is undefined must be dropped before they
//! reach this module.

mod io;
mod ranking;
mod roc;

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::N_CLASSES;
use crate::models::{argmax, Probs};

pub use io::{read_predictions, write_predictions, PredictionRecord};
pub use ranking::{composite_ranking, CompositeScore, ProcessMetricsRow, GOLD_PROCESS};
pub use roc::{
    auc_delong, mean_curve, roc_analysis, roc_curve, AucEstimate, ClassRoc, RocAnalysis, RocPoint, FPR_GRID_POINTS,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("empty input")]
    EmptyInput,
    #[error("length mismatch: {pred} predictions vs {gold} gold labels")]
    LengthMismatch { pred: usize, gold: usize },
    #[error("rank {0} outside 1..=6")]
    RankOutOfRange(u8),
    #[error("weighted kappa undefined: degenerate marginals")]
    DegenerateMarginals,
    #[error("rank correlation undefined: constant {0} ranks")]
    ConstantInput(Side),
    #[error("class {0} has no positives or no negatives")]
    ClassNotComputable(u8),
    #[error("metric `{0}` has zero spread across processes")]
    ZeroSpread(String),
    #[error("need at least two processes, got {0}")]
    TooFewProcesses(usize),
    #[error("single case: limits of agreement undefined")]
    SingleCase,
    #[error("case {case_id}: {reason}")]
    InvalidPrediction { case_id: String, reason: String },
    #[error("no prediction for case {0}")]
    MissingPrediction(String),
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("significance level must be in (0, 1), got {0}")]
    InvalidLevel(f64),
    #[error("io: {0}")]
    Io(String),
}

impl MetricError {
    /// True for failures caused by degenerate numbers rather than bad data.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            MetricError::DegenerateMarginals
                | MetricError::ConstantInput(_)
                | MetricError::ClassNotComputable(_)
                | MetricError::ZeroSpread(_)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Pred,
    Gold,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Pred => "predicted",
            Side::Gold => "gold",
        })
    }
}

pub type Result<T, E = MetricError> = std::result::Result<T, E>;

/// Largest deviation from 1 of a normalized probability vector's sum.
pub const SUM_TOLERANCE: f64 = 1e-6;

/// Per-case class probabilities of one named process, either genuine
/// distributions or one-hot encoded hard labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub process: String,
    pub case_ids: Vec<String>,
    pub probs: Vec<Probs>,
    /// Set when the vectors are one-hot conversions of hard labels.
    pub hard_labels: bool,
}

/// Predictions and gold ranks in the same case order.
#[derive(Debug, Clone, PartialEq)]
pub struct Aligned {
    pub case_ids: Vec<String>,
    pub probs: Vec<Probs>,
    pub gold: Vec<u8>,
}

impl Aligned {
    /// Predicted rank per case: the most probable class, ties to the most acute.
    pub fn pred_ranks(&self) -> Vec<u8> {
        self.probs.iter().map(|p| argmax(p) as u8 + 1).collect()
    }

    pub fn len(&self) -> usize {
        self.gold.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gold.is_empty()
    }
}

pub fn one_hot(rank: u8) -> Result<Probs> {
    check_rank(rank)?;
    let mut p = [0.0; N_CLASSES];
    p[rank as usize - 1] = 1.0;
    Ok(p)
}

fn normalize(case_id: &str, p: Probs) -> Result<Probs> {
    let bad = |reason: &str| MetricError::InvalidPrediction { case_id: case_id.to_string(), reason: reason.into() };
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(bad("probabilities must be finite and non-negative"));
    }
    let s: f64 = p.iter().sum();
    if !(s > 0.0) {
        return Err(bad("probabilities sum to zero"));
    }
    if (s - 1.0).abs() <= f64::EPSILON * N_CLASSES as f64 {
        return Ok(p);
    }
    Ok(p.map(|v| v / s))
}

impl PredictionSet {
    /// Probability vectors, rescaled to sum to one.
    pub fn from_probs(process: impl Into<String>, rows: Vec<(String, Probs)>) -> Result<Self> {
        let mut case_ids = Vec::with_capacity(rows.len());
        let mut probs = Vec::with_capacity(rows.len());
        for (id, p) in rows {
            probs.push(normalize(&id, p)?);
            case_ids.push(id);
        }
        let set = Self { process: process.into(), case_ids, probs, hard_labels: false };
        set.check_unique()?;
        Ok(set)
    }

    /// Hard ranks converted to one-hot vectors.
    pub fn from_labels(process: impl Into<String>, rows: Vec<(String, u8)>) -> Result<Self> {
        let mut case_ids = Vec::with_capacity(rows.len());
        let mut probs = Vec::with_capacity(rows.len());
        for (id, r) in rows {
            probs.push(one_hot(r).map_err(|e| MetricError::InvalidPrediction { case_id: id.clone(), reason: e.to_string() })?);
            case_ids.push(id);
        }
        let set = Self { process: process.into(), case_ids, probs, hard_labels: true };
        set.check_unique()?;
        Ok(set)
    }

    fn check_unique(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for id in &self.case_ids {
            if !seen.insert(id.as_str()) {
                return Err(MetricError::InvalidPrediction { case_id: id.clone(), reason: "duplicate case".into() });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.case_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.case_ids.is_empty()
    }

    /// Orders predictions by the gold list. Every gold case needs a
    /// prediction; predictions for other cases are ignored.
    pub fn align(&self, gold: &[(String, u8)]) -> Result<Aligned> {
        if gold.is_empty() {
            return Err(MetricError::EmptyInput);
        }
        let index: HashMap<&str, usize> = self.case_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let mut out = Aligned { case_ids: Vec::new(), probs: Vec::new(), gold: Vec::new() };
        for (id, rank) in gold {
            check_rank(*rank)?;
            let i = *index.get(id.as_str()).ok_or_else(|| MetricError::MissingPrediction(id.clone()))?;
            out.case_ids.push(id.clone());
            out.probs.push(self.probs[i]);
            out.gold.push(*rank);
        }
        Ok(out)
    }
}

pub(crate) fn check_rank(r: u8) -> Result<()> {
    if (1..=N_CLASSES as u8).contains(&r) {
        Ok(())
    } else {
        Err(MetricError::RankOutOfRange(r))
    }
}

pub(crate) fn check_pair(pred: &[u8], gold: &[u8]) -> Result<()> {
    if pred.len() != gold.len() {
        return Err(MetricError::LengthMismatch { pred: pred.len(), gold: gold.len() });
    }
    if gold.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    pred.iter().chain(gold).try_for_each(|&r| check_rank(r))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrdinalError {
    pub mae: f64,
    pub rmse: f64,
}

pub fn ordinal_error(pred: &[u8], gold: &[u8]) -> Result<OrdinalError> {
    check_pair(pred, gold)?;
    let n = gold.len() as f64;
    let (mut abs, mut sq) = (0.0, 0.0);
    for (&p, &g) in pred.iter().zip(gold) {
        let d = p as f64 - g as f64;
        abs += d.abs();
        sq += d * d;
    }
    Ok(OrdinalError { mae: abs / n, rmse: (sq / n).sqrt() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KappaWeighting {
    #[default]
    Quadratic,
    Linear,
}

impl std::str::FromStr for KappaWeighting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "quadratic" => Ok(KappaWeighting::Quadratic),
            "linear" => Ok(KappaWeighting::Linear),
            other => Err(format!("unknown kappa weighting `{other}`")),
        }
    }
}

/// Weighted Cohen kappa over the fixed six-level scale.
pub fn weighted_kappa(pred: &[u8], gold: &[u8], weighting: KappaWeighting) -> Result<f64> {
    check_pair(pred, gold)?;
    let k = N_CLASSES;
    let n = gold.len() as f64;
    let mut counts = [[0u32; N_CLASSES]; N_CLASSES];
    let mut row = [0u32; N_CLASSES];
    let mut col = [0u32; N_CLASSES];
    for (&p, &g) in pred.iter().zip(gold) {
        let (i, j) = (g as usize - 1, p as usize - 1);
        counts[i][j] += 1;
        row[i] += 1;
        col[j] += 1;
    }
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..k {
        for j in 0..k {
            let d = (i as f64 - j as f64).abs() / (k - 1) as f64;
            let w = match weighting {
                KappaWeighting::Quadratic => d * d,
                KappaWeighting::Linear => d,
            };
            num += w * counts[i][j] as f64 / n;
            den += w * (row[i] as f64 / n) * (col[j] as f64 / n);
        }
    }
    if den <= 0.0 {
        return Err(MetricError::DegenerateMarginals);
    }
    Ok(1.0 - num / den)
}

/// Fractional ranks (1-based) with ties sharing their average position.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

/// Spearman correlation: Pearson correlation of midranks.
pub fn rank_correlation(pred: &[u8], gold: &[u8]) -> Result<f64> {
    check_pair(pred, gold)?;
    for (side, v) in [(Side::Pred, pred), (Side::Gold, gold)] {
        if v.iter().all(|&r| r == v[0]) {
            return Err(MetricError::ConstantInput(side));
        }
    }
    let rp = midranks(&pred.iter().map(|&r| r as f64).collect::<Vec<_>>());
    let rg = midranks(&gold.iter().map(|&r| r as f64).collect::<Vec<_>>());
    Ok(pearson(&rp, &rg))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Scores {
    pub micro: f64,
    pub macro_: f64,
    /// `None` for classes absent from both predictions and gold.
    pub per_class: [Option<f64>; N_CLASSES],
}

pub fn f1_suite(pred: &[u8], gold: &[u8]) -> Result<F1Scores> {
    check_pair(pred, gold)?;
    let mut tp = [0usize; N_CLASSES];
    let mut fp = [0usize; N_CLASSES];
    let mut fn_ = [0usize; N_CLASSES];
    for (&p, &g) in pred.iter().zip(gold) {
        if p == g {
            tp[g as usize - 1] += 1;
        } else {
            fp[p as usize - 1] += 1;
            fn_[g as usize - 1] += 1;
        }
    }
    let f1 = |tp: usize, fp: usize, fn_: usize| tp as f64 / (tp as f64 + 0.5 * (fp + fn_) as f64);
    let mut per_class = [None; N_CLASSES];
    for c in 0..N_CLASSES {
        if tp[c] + fp[c] + fn_[c] > 0 {
            per_class[c] = Some(f1(tp[c], fp[c], fn_[c]));
        }
    }
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    let macro_ = defined.iter().sum::<f64>() / defined.len() as f64;
    let micro = f1(tp.iter().sum(), fp.iter().sum(), fn_.iter().sum());
    Ok(F1Scores { micro, macro_, per_class })
}

/// (exact, near): fractions with |pred - gold| of 0 and at most 1.
pub fn agreement_rates(pred: &[u8], gold: &[u8]) -> Result<(f64, f64)> {
    check_pair(pred, gold)?;
    let n = gold.len() as f64;
    let exact = pred.iter().zip(gold).filter(|(p, g)| p == g).count() as f64;
    let near = pred.iter().zip(gold).filter(|(p, g)| p.abs_diff(**g) <= 1).count() as f64;
    Ok((exact / n, near / n))
}

/// Options shared by report-level metric computations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricOptions {
    pub kappa: KappaWeighting,
    /// Confidence level of the DeLong intervals.
    pub ci_level: f64,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self { kappa: KappaWeighting::Quadratic, ci_level: 0.95 }
    }
}

/// Every evaluation metric for one process under one label system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub process: String,
    pub label_system: String,
    pub n: usize,
    pub mae: f64,
    pub rmse: f64,
    pub weighted_kappa: f64,
    pub spearman: f64,
    pub f1_micro: f64,
    pub f1_macro: f64,
    pub per_class_f1: [Option<f64>; N_CLASSES],
    pub exact_agreement: f64,
    pub near_agreement: f64,
    pub auc_per_class: Vec<Option<AucEstimate>>,
    pub auc_macro: Option<f64>,
    /// One-hot hard labels give a single-threshold (degenerate) ROC.
    pub degenerate_roc: bool,
    pub warnings: Vec<String>,
    pub composite: Option<f64>,
}

impl MetricReport {
    pub fn row(&self) -> ProcessMetricsRow {
        ProcessMetricsRow {
            process: self.process.clone(),
            mae: self.mae,
            rmse: self.rmse,
            kappa: self.weighted_kappa,
            spearman: self.spearman,
        }
    }
}

/// Computes the report for aligned predictions; `composite` is left empty
/// until [`composite_ranking`] runs over all processes.
pub fn metric_report(
    process: &str,
    label_system: &str,
    hard_labels: bool,
    data: &Aligned,
    opts: &MetricOptions,
) -> Result<(MetricReport, RocAnalysis)> {
    let pred = data.pred_ranks();
    let err = ordinal_error(&pred, &data.gold)?;
    let kappa = weighted_kappa(&pred, &data.gold, opts.kappa)?;
    let spearman = rank_correlation(&pred, &data.gold)?;
    let f1 = f1_suite(&pred, &data.gold)?;
    let (exact, near) = agreement_rates(&pred, &data.gold)?;
    let roc = roc_analysis(&data.probs, &data.gold, 1.0 - opts.ci_level)?;
    let report = MetricReport {
        process: process.to_string(),
        label_system: label_system.to_string(),
        n: data.len(),
        mae: err.mae,
        rmse: err.rmse,
        weighted_kappa: kappa,
        spearman,
        f1_micro: f1.micro,
        f1_macro: f1.macro_,
        per_class_f1: f1.per_class,
        exact_agreement: exact,
        near_agreement: near,
        auc_per_class: roc.per_class.iter().map(|c| c.auc).collect(),
        auc_macro: roc.macro_auc,
        degenerate_roc: hard_labels,
        warnings: roc.warnings.clone(),
        composite: None,
    };
    Ok((report, roc))
}
