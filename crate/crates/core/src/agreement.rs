//! Confusion matrices, Bland-Altman agreement statistics and signed error
//! histograms between predicted and gold ranks.

use serde::{Deserialize, Serialize};

use crate::cohort::N_CLASSES;
use crate::metrics::{check_pair, MetricError, Result};

/// Largest possible signed rank difference.
pub const MAX_ERROR: i32 = N_CLASSES as i32 - 1;

/// Rows are gold ranks, columns predicted ranks (both 1..=6 at index 0..6).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[usize; N_CLASSES]; N_CLASSES],
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn diagonal(&self) -> usize {
        (0..N_CLASSES).map(|i| self.counts[i][i]).sum()
    }

    pub fn get(&self, gold: u8, pred: u8) -> usize {
        self.counts[gold as usize - 1][pred as usize - 1]
    }
}

pub fn confusion(pred: &[u8], gold: &[u8]) -> Result<ConfusionMatrix> {
    check_pair(pred, gold)?;
    let mut counts = [[0; N_CLASSES]; N_CLASSES];
    for (&p, &g) in pred.iter().zip(gold) {
        counts[g as usize - 1][p as usize - 1] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlandAltmanSummary {
    pub bias: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
    /// Per case `((pred + gold) / 2, pred - gold)`.
    pub pairs: Vec<(f64, f64)>,
}

pub const LIMIT_Z: f64 = 1.96;

pub fn bland_altman(pred: &[u8], gold: &[u8]) -> Result<BlandAltmanSummary> {
    check_pair(pred, gold)?;
    if gold.len() < 2 {
        return Err(MetricError::SingleCase);
    }
    let pairs: Vec<(f64, f64)> =
        pred.iter().zip(gold).map(|(&p, &g)| ((p as f64 + g as f64) / 2.0, p as f64 - g as f64)).collect();
    let n = pairs.len() as f64;
    let bias = pairs.iter().map(|d| d.1).sum::<f64>() / n;
    let sd = (pairs.iter().map(|d| (d.1 - bias).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    Ok(BlandAltmanSummary { bias, sd, lower: bias - LIMIT_Z * sd, upper: bias + LIMIT_Z * sd, pairs })
}

/// Case counts per signed difference `pred - gold` from -5 to +5.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorHistogram {
    pub counts: [usize; 2 * N_CLASSES - 1],
}

impl ErrorHistogram {
    pub fn count(&self, diff: i32) -> usize {
        self.counts[(diff + MAX_ERROR) as usize]
    }

    pub fn bins(&self) -> impl Iterator<Item = (i32, usize)> + '_ {
        self.counts.iter().enumerate().map(|(i, &c)| (i as i32 - MAX_ERROR, c))
    }

    pub fn mean(&self) -> f64 {
        let n: usize = self.counts.iter().sum();
        self.bins().map(|(d, c)| d as f64 * c as f64).sum::<f64>() / n as f64
    }

    pub fn mean_abs(&self) -> f64 {
        let n: usize = self.counts.iter().sum();
        self.bins().map(|(d, c)| d.abs() as f64 * c as f64).sum::<f64>() / n as f64
    }
}

pub fn error_histogram(pred: &[u8], gold: &[u8]) -> Result<ErrorHistogram> {
    check_pair(pred, gold)?;
    let mut counts = [0; 2 * N_CLASSES - 1];
    for (&p, &g) in pred.iter().zip(gold) {
        counts[(p as i32 - g as i32 + MAX_ERROR) as usize] += 1;
    }
    Ok(ErrorHistogram { counts })
}
