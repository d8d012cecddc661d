use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use triage_core::cohort::{write_cohort, Cohort, CohortFormat, LabelSystem};
use triage_core::features::InputVariant;
use triage_core::metrics::{composite_ranking, read_predictions, ProcessMetricsRow};
use triage_core::run::{
    self, evaluate_run, gather_predictions, gold_for, load_bundle, load_cohort, num, split, train_processes,
    write_calibration, write_evaluation, write_prediction_file, write_training, Artifacts, ErrorKind, RunConfig,
    RunError, StageExt, Table, MODEL_PROCESSES,
};

#[derive(Parser)]
#[command(name = "triage", version, about = "Synthetic triage cohorts, toy classifiers and ordinal evaluation reports")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse::<LabelSystem>)]
    label_system: Option<LabelSystem>,
    #[arg(long, global = true, value_parser = parse::<InputVariant>)]
    input_variant: Option<InputVariant>,
    /// Comma-separated process names
    #[arg(long, global = true, value_delimiter = ',')]
    processes: Option<Vec<String>>,
    /// Cohort file (overrides the config)
    #[arg(long, global = true)]
    cohort: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic cohort
    Generate {
        #[arg(long)]
        cases: Option<usize>,
        #[arg(long, default_value = "csv", value_parser = parse::<CohortFormat>)]
        format: CohortFormat,
    },
    /// Stratified train/test split of the cohort
    Split,
    /// Train the built-in models on the train split
    Train,
    /// Predict the test split with saved models (and nurse labels if selected)
    Predict {
        /// Directory holding `<process>.json` bundles (default: OUT/models)
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Metrics, ROC, agreement tables and ranking for a predictions file
    Evaluate {
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Calibration tables, heatmaps and ridge data for a predictions file
    Calibrate {
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Composite Z-score ranking from a metrics table or a predictions file
    Rank {
        /// CSV with columns process,mae,rmse,kappa,spearman
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Full run: generate/load, split, train, predict, evaluate, calibrate, rank
    Report,
}

fn parse<T: std::str::FromStr<Err = String>>(s: &str) -> Result<T, String> {
    s.parse()
}

fn config(g: &Global) -> run::Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(o) = &g.out {
        cfg.out = o.clone();
    }
    if let Some(l) = g.label_system {
        cfg.label_system = l;
    }
    if let Some(v) = g.input_variant {
        cfg.input_variant = v;
    }
    if let Some(p) = &g.processes {
        cfg.processes = p.iter().map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    }
    if let Some(c) = &g.cohort {
        cfg.data.cohort = Some(c.clone());
    }
    Ok(cfg)
}

fn cohort_bytes(c: &Cohort, format: CohortFormat) -> run::Result<Vec<u8>> {
    let mut bytes = Vec::new();
    write_cohort(c, format, &mut bytes).at("write")?;
    Ok(bytes)
}

fn predictions_path(cfg: &RunConfig, flag: &Option<PathBuf>) -> PathBuf {
    flag.clone()
        .or_else(|| cfg.data.predictions.clone())
        .unwrap_or_else(|| cfg.out.join("predictions.jsonl"))
}

fn read_sets(cfg: &RunConfig, path: &Path) -> run::Result<Vec<triage_core::metrics::PredictionSet>> {
    let f = std::fs::File::open(path)
        .map_err(|e| RunError::new("predictions", ErrorKind::Data, format!("{}: {e}", path.display())))?;
    let sets = read_predictions(std::io::BufReader::new(f)).at("predictions")?;
    let sets: Vec<_> = if cfg.processes.is_empty() {
        sets
    } else {
        let keep: Vec<_> = sets.iter().filter(|s| cfg.processes.contains(&s.process)).cloned().collect();
        if keep.is_empty() { sets } else { keep }
    };
    if sets.is_empty() {
        return Err(RunError::new("predictions", ErrorKind::Data, format!("{}: no predictions", path.display())));
    }
    Ok(sets)
}

fn evaluation_from_file(cfg: &RunConfig) -> run::Result<run::Evaluation> {
    let sets = read_sets(cfg, &predictions_path(cfg, &None))?;
    let cohort = load_cohort(cfg)?;
    let gold = gold_for(&cohort, cfg.label_system, &sets);
    if gold.is_empty() {
        return Err(RunError::new("evaluate", ErrorKind::Data, "no predicted case has a gold label in the cohort"));
    }
    run::evaluate_sets(cfg, &sets, &gold)
}

fn rank_table(path: &Path) -> run::Result<Vec<ProcessMetricsRow>> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| RunError::new("rank", ErrorKind::Data, format!("{}: {e}", path.display())))?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| RunError::new("rank", ErrorKind::Data, format!("line {}: {e}", i + 2))))
        .collect()
}

fn execute(cli: Cli) -> run::Result<()> {
    let mut cfg = config(&cli.global)?;
    let command = match &cli.command {
        Command::Generate { .. } => "generate",
        Command::Split => "split",
        Command::Train => "train",
        Command::Predict { .. } => "predict",
        Command::Evaluate { .. } => "evaluate",
        Command::Calibrate { .. } => "calibrate",
        Command::Rank { .. } => "rank",
        Command::Report => "report",
    };
    if let Command::Generate { cases: Some(n), .. } = &cli.command {
        cfg.data.synthetic_cases = *n;
    }
    match &cli.command {
        Command::Rank { table: Some(_), .. } => {
            // the table names its own processes
            cfg.processes = vec![MODEL_PROCESSES[0].to_string()];
        }
        Command::Evaluate { predictions } | Command::Calibrate { predictions } | Command::Rank { predictions, .. } => {
            cfg.data.predictions = Some(predictions_path(&cfg, predictions));
        }
        _ => {}
    }
    cfg.validate()?;
    if let Command::Report = cli.command {
        let m = evaluate_run(&cfg)?;
        eprintln!("report: {} artifacts in {}", m.artifacts.len(), cfg.out.display());
        return Ok(());
    }
    let mut art = Artifacts::new(&cfg.out);
    art.stage(command);
    match &cli.command {
        Command::Generate { format, .. } => {
            let c = run::synthesize(&cfg)?;
            let ext = if *format == CohortFormat::RecordPerLine { "jsonl" } else { "csv" };
            art.write(&format!("cohort.{ext}"), &cohort_bytes(&c, *format)?)?;
        }
        Command::Split => {
            let c = load_cohort(&cfg)?;
            let (train, test) = split(&cfg, &c)?;
            art.write("train.csv", &cohort_bytes(&train, CohortFormat::DelimitedTable)?)?;
            art.write("test.csv", &cohort_bytes(&test, CohortFormat::DelimitedTable)?)?;
        }
        Command::Train => {
            let c = load_cohort(&cfg)?;
            let (train, test) = split(&cfg, &c)?;
            let trained = train_processes(&cfg, &train, &test)?;
            write_training(&mut art, &trained)?;
        }
        Command::Predict { models } => {
            let c = load_cohort(&cfg)?;
            let (_, test) = split(&cfg, &c)?;
            let dir = models.clone().unwrap_or_else(|| cfg.out.join("models"));
            let bundles = cfg
                .processes
                .iter()
                .filter(|p| MODEL_PROCESSES.contains(&p.as_str()))
                .map(|p| load_bundle(&dir.join(format!("{p}.json"))).map(|b| (p.clone(), b)))
                .collect::<run::Result<Vec<_>>>()?;
            let sets = gather_predictions(&cfg, &bundles, &test)?;
            write_prediction_file(&mut art, &sets)?;
        }
        Command::Evaluate { .. } => {
            let eval = evaluation_from_file(&cfg)?;
            write_evaluation(&mut art, &cfg, &eval)?;
        }
        Command::Calibrate { .. } => {
            let eval = evaluation_from_file(&cfg)?;
            write_calibration(&mut art, &cfg, &eval)?;
        }
        Command::Rank { table, .. } => {
            let scores = match table {
                Some(path) => composite_ranking(&rank_table(path)?, cfg.metrics.include_gold_row).at("rank")?,
                None => evaluation_from_file(&cfg)?.ranking,
            };
            let mut t = Table::new(&["process", "z_neg_mae", "z_neg_rmse", "z_kappa", "z_spearman", "composite"]);
            for s in &scores {
                t.push(vec![
                    s.process.clone(),
                    num(s.z_neg_mae),
                    num(s.z_neg_rmse),
                    num(s.z_kappa),
                    num(s.z_spearman),
                    num(s.composite),
                ]);
            }
            art.write_table("tables/composite.csv", &t)?;
        }
        Command::Report => unreachable!(),
    }
    art.finish(command, &cfg)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
