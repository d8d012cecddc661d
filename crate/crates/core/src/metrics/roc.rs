use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{check_rank, midranks, MetricError, Result};
use crate::cohort::N_CLASSES;
use crate::models::Probs;

/// Points on the fixed FPR grid of the mean curve (0, 0.01, ..., 1).
pub const FPR_GRID_POINTS: usize = 101;

/// AUC with its DeLong variance and Wald interval clipped to [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AucEstimate {
    pub auc: f64,
    pub variance: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Cases scoring `>=` this value are called positive; the first point
    /// of a curve has an infinite threshold.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRoc {
    pub rank: u8,
    pub auc: Option<AucEstimate>,
    pub points: Vec<RocPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocAnalysis {
    pub per_class: Vec<ClassRoc>,
    /// Unweighted mean AUC over computable classes.
    pub macro_auc: Option<f64>,
    /// `(fpr, mean tpr)` over [`FPR_GRID_POINTS`] grid values.
    pub mean_curve: Vec<(f64, f64)>,
    pub warnings: Vec<String>,
}

fn sample_variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

/// Tie-corrected Mann-Whitney AUC and its DeLong variance from placement
/// values. `alpha` is the two-sided significance level of the interval.
pub fn auc_delong(positives: &[f64], negatives: &[f64], alpha: f64) -> Result<AucEstimate> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(MetricError::InvalidLevel(alpha));
    }
    let (m, n) = (positives.len(), negatives.len());
    if m == 0 || n == 0 {
        return Err(MetricError::EmptyInput);
    }
    let combined: Vec<f64> = positives.iter().chain(negatives).copied().collect();
    let r_all = midranks(&combined);
    let r_pos = midranks(positives);
    let r_neg = midranks(negatives);
    let (mf, nf) = (m as f64, n as f64);
    // fraction of negatives below each positive, and of positives above each negative
    let v10: Vec<f64> = (0..m).map(|i| (r_all[i] - r_pos[i]) / nf).collect();
    let v01: Vec<f64> = (0..n).map(|j| 1.0 - (r_all[m + j] - r_neg[j]) / mf).collect();
    let auc = (r_all[..m].iter().sum::<f64>() - mf * (mf + 1.0) / 2.0) / (mf * nf);
    let variance = sample_variance(&v10) / mf + sample_variance(&v01) / nf;
    let z = Normal::standard().inverse_cdf(1.0 - alpha / 2.0);
    let half = z * variance.sqrt();
    Ok(AucEstimate { auc, variance, lower: (auc - half).max(0.0), upper: (auc + half).min(1.0) })
}

/// ROC points at every distinct score, from (0, 0) to (1, 1).
pub fn roc_curve(scores: &[f64], positive: &[bool]) -> Vec<RocPoint> {
    let p = positive.iter().filter(|&&b| b).count() as f64;
    let n = positive.len() as f64 - p;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let cut = scores[order[i]];
        while i < order.len() && scores[order[i]] == cut {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint { threshold: cut, fpr: fp as f64 / n, tpr: tp as f64 / p });
    }
    points
}

/// TPR at a given FPR: the highest TPR at a vertex, else linear interpolation.
fn tpr_at(points: &[RocPoint], fpr: f64) -> f64 {
    let at: Vec<f64> = points.iter().filter(|q| q.fpr == fpr).map(|q| q.tpr).collect();
    if let Some(best) = at.into_iter().reduce(f64::max) {
        return best;
    }
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.fpr < fpr && fpr < b.fpr {
            return a.tpr + (b.tpr - a.tpr) * (fpr - a.fpr) / (b.fpr - a.fpr);
        }
    }
    1.0
}

/// Vertical average of curves over the fixed FPR grid.
pub fn mean_curve(curves: &[&[RocPoint]]) -> Vec<(f64, f64)> {
    if curves.is_empty() {
        return Vec::new();
    }
    (0..FPR_GRID_POINTS)
        .map(|k| {
            let g = k as f64 / (FPR_GRID_POINTS - 1) as f64;
            let mean = curves.iter().map(|c| tpr_at(c, g)).sum::<f64>() / curves.len() as f64;
            (g, mean)
        })
        .collect()
}

/// One-vs-rest ROC analysis of six-class probabilities against gold ranks.
/// Classes without both positives and negatives are reported with no AUC
/// and a warning, and left out of the macro mean and mean curve.
pub fn roc_analysis(probs: &[Probs], gold: &[u8], alpha: f64) -> Result<RocAnalysis> {
    if probs.len() != gold.len() {
        return Err(MetricError::LengthMismatch { pred: probs.len(), gold: gold.len() });
    }
    if gold.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    gold.iter().try_for_each(|&g| check_rank(g))?;
    let mut per_class = Vec::with_capacity(N_CLASSES);
    let mut warnings = Vec::new();
    for c in 0..N_CLASSES {
        let rank = c as u8 + 1;
        let scores: Vec<f64> = probs.iter().map(|p| p[c]).collect();
        let positive: Vec<bool> = gold.iter().map(|&g| g == rank).collect();
        let pos: Vec<f64> = scores.iter().zip(&positive).filter(|(_, &b)| b).map(|(s, _)| *s).collect();
        let neg: Vec<f64> = scores.iter().zip(&positive).filter(|(_, &b)| !b).map(|(s, _)| *s).collect();
        if pos.is_empty() || neg.is_empty() {
            warnings.push(MetricError::ClassNotComputable(rank).to_string());
            per_class.push(ClassRoc { rank, auc: None, points: Vec::new() });
            continue;
        }
        let auc = auc_delong(&pos, &neg, alpha)?;
        per_class.push(ClassRoc { rank, auc: Some(auc), points: roc_curve(&scores, &positive) });
    }
    let aucs: Vec<f64> = per_class.iter().filter_map(|c| c.auc.map(|a| a.auc)).collect();
    let macro_auc = (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64);
    let curves: Vec<&[RocPoint]> =
        per_class.iter().filter(|c| c.auc.is_some()).map(|c| c.points.as_slice()).collect();
    Ok(RocAnalysis { mean_curve: mean_curve(&curves), per_class, macro_auc, warnings })
}
