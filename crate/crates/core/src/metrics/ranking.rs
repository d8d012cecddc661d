use serde::{Deserialize, Serialize};

use super::{MetricError, Result};

/// Name of the reference row added to the normalization set.
pub const GOLD_PROCESS: &str = "gold";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessMetricsRow {
    pub process: String,
    pub mae: f64,
    pub rmse: f64,
    pub kappa: f64,
    pub spearman: f64,
}

impl ProcessMetricsRow {
    /// The row of a predictor identical to the gold standard.
    pub fn gold() -> Self {
        Self { process: GOLD_PROCESS.into(), mae: 0.0, rmse: 0.0, kappa: 1.0, spearman: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeScore {
    pub process: String,
    pub z_neg_mae: f64,
    pub z_neg_rmse: f64,
    pub z_kappa: f64,
    pub z_spearman: f64,
    pub composite: f64,
}

/// Z-scores with the population standard deviation.
fn zscores(name: &str, v: &[f64]) -> Result<Vec<f64>> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(MetricError::ZeroSpread(name.to_string()));
    }
    Ok(v.iter().map(|x| (x - mean) / sd).collect())
}

/// Composite score `Z(-MAE) + Z(-RMSE) + Z(kappa) + Z(spearman)` per
/// process, in input order, with the gold row appended when included.
pub fn composite_ranking(rows: &[ProcessMetricsRow], include_gold_row: bool) -> Result<Vec<CompositeScore>> {
    let mut set = rows.to_vec();
    if include_gold_row {
        set.push(ProcessMetricsRow::gold());
    }
    if set.len() < 2 {
        return Err(MetricError::TooFewProcesses(set.len()));
    }
    if let Some(r) = set.iter().find(|r| ![r.mae, r.rmse, r.kappa, r.spearman].iter().all(|v| v.is_finite())) {
        return Err(MetricError::InvalidPrediction { case_id: r.process.clone(), reason: "non-finite metric".into() });
    }
    let col = |f: fn(&ProcessMetricsRow) -> f64| set.iter().map(f).collect::<Vec<_>>();
    let mae = zscores("mae", &col(|r| -r.mae))?;
    let rmse = zscores("rmse", &col(|r| -r.rmse))?;
    let kappa = zscores("kappa", &col(|r| r.kappa))?;
    let rho = zscores("spearman", &col(|r| r.spearman))?;
    Ok(set
        .iter()
        .enumerate()
        .map(|(i, r)| CompositeScore {
            process: r.process.clone(),
            z_neg_mae: mae[i],
            z_neg_rmse: rmse[i],
            z_kappa: kappa[i],
            z_spearman: rho[i],
            composite: mae[i] + rmse[i] + kappa[i] + rho[i],
        })
        .collect())
}
