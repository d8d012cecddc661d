use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ErrorKind, Result, RunError};
use crate::calibration::{BrierVariant, DEFAULT_BINS};
use crate::cohort::{CohortFormat, LabelSystem};
use crate::features::{InputVariant, DEFAULT_TEXT_DIM};
use crate::metrics::KappaWeighting;
use crate::models::{BoostedConfig, FeedForwardConfig, JepaConfig};

pub const FEEDFORWARD: &str = "feedforward";
pub const BOOSTED: &str = "boosted";
pub const JEPA: &str = "jepa";
pub const NURSE: &str = "nurse";
pub const MODEL_PROCESSES: [&str; 3] = [FEEDFORWARD, BOOSTED, JEPA];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Cohort file; a synthetic cohort is generated when absent.
    pub cohort: Option<PathBuf>,
    /// Inferred from the extension (`.jsonl`/`.ndjson` are record-per-line).
    pub cohort_format: Option<CohortFormat>,
    pub synthetic_cases: usize,
    pub reviewer_labels: Option<PathBuf>,
    /// External predictions file supplying non-built-in processes.
    pub predictions: Option<PathBuf>,
    pub split_fraction: f64,
    pub text_dim: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            cohort: None,
            cohort_format: None,
            synthetic_cases: 657,
            reviewer_labels: None,
            predictions: None,
            split_fraction: 0.8,
            text_dim: DEFAULT_TEXT_DIM,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    pub kappa: KappaWeighting,
    pub brier: BrierVariant,
    pub bins: usize,
    pub ci_level: f64,
    pub include_gold_row: bool,
    pub importance_repeats: usize,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            kappa: KappaWeighting::Quadratic,
            brier: BrierVariant::SumOverClasses,
            bins: DEFAULT_BINS,
            ci_level: 0.95,
            include_gold_row: true,
            importance_repeats: 5,
        }
    }
}

/// Everything a run depends on. All randomness derives from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub label_system: LabelSystem,
    pub input_variant: InputVariant,
    pub processes: Vec<String>,
    pub data: DataConfig,
    pub feedforward: FeedForwardConfig,
    pub boosted: BoostedConfig,
    pub jepa: JepaConfig,
    pub metrics: MetricConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            label_system: LabelSystem::French,
            input_variant: InputVariant::Both,
            processes: MODEL_PROCESSES.iter().map(|s| s.to_string()).collect(),
            data: DataConfig::default(),
            feedforward: FeedForwardConfig::default(),
            boosted: BoostedConfig::default(),
            jepa: JepaConfig::default(),
            metrics: MetricConfig::default(),
        }
    }
}

/// Sub-seed offsets so each stage draws an independent stream.
pub(crate) mod seeds {
    pub const SYNTH: u64 = 0;
    pub const SPLIT: u64 = 1;
    pub const TEXT: u64 = 2;
    pub const FEEDFORWARD: u64 = 3;
    pub const BOOSTED: u64 = 4;
    pub const JEPA: u64 = 5;
    pub const IMPORTANCE: u64 = 6;
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| RunError::new("config", ErrorKind::Config, e.to_string()))
    }

    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::new("config", ErrorKind::Config, format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.out);
        for p in [&mut cfg.data.cohort, &mut cfg.data.reviewer_labels, &mut cfg.data.predictions].into_iter().flatten() {
            resolve(p);
        }
        Ok(cfg)
    }

    pub fn sub_seed(&self, offset: u64) -> u64 {
        self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(offset)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(RunError::new("config", ErrorKind::Config, m));
        if !(self.data.split_fraction > 0.0 && self.data.split_fraction < 1.0) {
            return bad(format!("split_fraction {} must lie strictly between 0 and 1", self.data.split_fraction));
        }
        if self.data.text_dim == 0 {
            return bad("text_dim must be positive".into());
        }
        if self.data.cohort.is_none() && self.data.synthetic_cases == 0 {
            return bad("synthetic_cases must be positive".into());
        }
        if self.metrics.bins == 0 {
            return bad("bins must be positive".into());
        }
        if !(self.metrics.ci_level > 0.0 && self.metrics.ci_level < 1.0) {
            return bad(format!("ci_level {} must lie strictly between 0 and 1", self.metrics.ci_level));
        }
        if self.processes.is_empty() {
            return bad("no processes selected".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for p in &self.processes {
            if p.is_empty() || !seen.insert(p) {
                return bad(format!("process name `{p}` is empty or repeated"));
            }
            let builtin = MODEL_PROCESSES.contains(&p.as_str()) || p == NURSE;
            if !builtin && self.data.predictions.is_none() {
                return bad(format!("process `{p}` is not built in and no predictions file is configured"));
            }
        }
        if self.label_system == LabelSystem::Gemsa && self.processes.iter().any(|p| p == NURSE) {
            return bad("nurse triage has no GEMSA labels".into());
        }
        self.feedforward.validate().map_err(|e| RunError::new("config", ErrorKind::Config, e.to_string()))?;
        self.boosted.validate().map_err(|e| RunError::new("config", ErrorKind::Config, e.to_string()))?;
        self.jepa.validate().map_err(|e| RunError::new("config", ErrorKind::Config, e.to_string()))?;
        Ok(())
    }

    pub fn cohort_format(&self) -> CohortFormat {
        if let Some(f) = self.data.cohort_format {
            return f;
        }
        match self.data.cohort.as_ref().and_then(|p| p.extension()).and_then(|e| e.to_str()) {
            Some("jsonl" | "ndjson") => CohortFormat::RecordPerLine,
            _ => CohortFormat::DelimitedTable,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn parses_partial_toml() {
        let cfg = RunConfig::from_toml(
            r#"
seed = 9
label_system = "gemsa"
input_variant = "text"
processes = ["boosted"]

[data]
synthetic_cases = 120

[boosted]
rounds = 5

[metrics]
kappa = "linear"
brier = "mean_over_classes"
"#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.label_system, LabelSystem::Gemsa);
        assert_eq!(cfg.boosted.rounds, 5);
        assert_eq!(cfg.boosted.max_depth, BoostedConfig::default().max_depth);
        assert_eq!(cfg.metrics.kappa, KappaWeighting::Linear);
        assert_eq!(cfg.data.split_fraction, 0.8);
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_bad_configs() {
        assert_eq!(RunConfig::from_toml("sed = 1").unwrap_err().exit_code(), 2);
        let mut cfg = RunConfig::default();
        cfg.data.split_fraction = 1.0;
        assert_eq!(cfg.validate().unwrap_err().exit_code(), 2);
        let mut cfg = RunConfig::default();
        cfg.processes = vec!["mystery".into()];
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.label_system = LabelSystem::Gemsa;
        cfg.processes = vec![NURSE.into()];
        assert!(cfg.validate().is_err());
    }
}
