//! Multiclass Brier score, quantile-binned calibration tables and the mean
//! probability / ridge surfaces used for reliability plots.

use serde::{Deserialize, Serialize};

use crate::cohort::N_CLASSES;
use crate::metrics::{check_rank, MetricError, Result};
use crate::models::Probs;

pub const DEFAULT_BINS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BrierVariant {
    /// Squared error summed over the six classes, averaged over cases; [0, 2].
    #[default]
    SumOverClasses,
    /// Squared error averaged over classes and cases; [0, 1/3].
    MeanOverClasses,
}

impl std::str::FromStr for BrierVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sum" | "sum_over_classes" => Ok(BrierVariant::SumOverClasses),
            "mean" | "mean_over_classes" => Ok(BrierVariant::MeanOverClasses),
            other => Err(format!("unknown Brier variant `{other}`")),
        }
    }
}

fn check(probs: &[Probs], gold: &[u8]) -> Result<()> {
    if probs.len() != gold.len() {
        return Err(MetricError::LengthMismatch { pred: probs.len(), gold: gold.len() });
    }
    if gold.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    gold.iter().try_for_each(|&g| check_rank(g))
}

pub fn brier(probs: &[Probs], gold: &[u8], variant: BrierVariant) -> Result<f64> {
    check(probs, gold)?;
    let total: f64 = probs
        .iter()
        .zip(gold)
        .map(|(p, &g)| {
            p.iter()
                .enumerate()
                .map(|(c, &v)| {
                    let y = if c + 1 == g as usize { 1.0 } else { 0.0 };
                    (v - y) * (v - y)
                })
                .sum::<f64>()
        })
        .sum();
    let per_case = total / gold.len() as f64;
    Ok(match variant {
        BrierVariant::SumOverClasses => per_case,
        BrierVariant::MeanOverClasses => per_case / N_CLASSES as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub class: u8,
    pub bin: usize,
    /// Bin covers `(lower, upper]`; the first bin is closed below.
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub positives: usize,
    pub mean_predicted: f64,
    pub observed: f64,
    pub gap: f64,
}

/// Cut points at the empirical quantiles k/n_bins (inverse of the empirical
/// distribution), with duplicates merged.
fn quantile_cuts(sorted: &[f64], n_bins: usize) -> Vec<f64> {
    let n = sorted.len();
    let mut cuts: Vec<f64> = (1..n_bins).map(|k| sorted[(k * n).div_ceil(n_bins).max(1) - 1]).collect();
    cuts.dedup();
    cuts
}

/// Quantile-binned reliability table for one class (rank 1..=6). Empty bins
/// are dropped, so fewer than `n_bins` rows may come back.
pub fn calibration_table(probs: &[Probs], gold: &[u8], class: u8, n_bins: usize) -> Result<Vec<CalibrationBin>> {
    check(probs, gold)?;
    check_rank(class)?;
    let n_bins = n_bins.max(1);
    let c = class as usize - 1;
    let mut sorted: Vec<f64> = probs.iter().map(|p| p[c]).collect();
    sorted.sort_by(f64::total_cmp);
    let cuts = quantile_cuts(&sorted, n_bins);
    let nb = cuts.len() + 1;
    let mut count = vec![0usize; nb];
    let mut positives = vec![0usize; nb];
    let mut sum_p = vec![0.0; nb];
    for (p, &g) in probs.iter().zip(gold) {
        let b = cuts.partition_point(|&cut| cut < p[c]);
        count[b] += 1;
        sum_p[b] += p[c];
        positives[b] += (g == class) as usize;
    }
    let mut rows = Vec::new();
    for b in 0..nb {
        if count[b] == 0 {
            continue;
        }
        let lower = if b == 0 { sorted[0] } else { cuts[b - 1] };
        let upper = if b == nb - 1 { sorted[sorted.len() - 1] } else { cuts[b] };
        let mean_predicted = sum_p[b] / count[b] as f64;
        let observed = positives[b] as f64 / count[b] as f64;
        rows.push(CalibrationBin {
            class,
            bin: rows.len(),
            lower,
            upper,
            count: count[b],
            positives: positives[b],
            mean_predicted,
            observed,
            gap: observed - mean_predicted,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeSeries {
    pub true_class: u8,
    pub pred_class: u8,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilitySurfaces {
    /// Row t: mean predicted distribution over cases of gold rank t + 1;
    /// `None` when that class is absent.
    pub heatmap: Vec<Option<Probs>>,
    /// Ranks with no gold cases.
    pub absent: Vec<u8>,
    pub ridges: Vec<RidgeSeries>,
}

pub fn probability_surfaces(probs: &[Probs], gold: &[u8]) -> Result<ProbabilitySurfaces> {
    check(probs, gold)?;
    let mut ridges: Vec<RidgeSeries> = (0..N_CLASSES * N_CLASSES)
        .map(|i| RidgeSeries { true_class: (i / N_CLASSES) as u8 + 1, pred_class: (i % N_CLASSES) as u8 + 1, values: Vec::new() })
        .collect();
    for (p, &g) in probs.iter().zip(gold) {
        for (c, &v) in p.iter().enumerate() {
            ridges[(g as usize - 1) * N_CLASSES + c].values.push(v);
        }
    }
    let mut heatmap = Vec::with_capacity(N_CLASSES);
    let mut absent = Vec::new();
    for t in 0..N_CLASSES {
        let series = &ridges[t * N_CLASSES..(t + 1) * N_CLASSES];
        let n = series[0].values.len();
        if n == 0 {
            absent.push(t as u8 + 1);
            heatmap.push(None);
            continue;
        }
        heatmap.push(Some(std::array::from_fn(|c| series[c].values.iter().sum::<f64>() / n as f64)));
    }
    Ok(ProbabilitySurfaces { heatmap, absent, ridges })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::one_hot;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const UNIFORM: Probs = [1.0 / 6.0; 6];

    #[test]
    fn brier_examples() {
        let gold = [1, 3, 6];
        let perfect: Vec<Probs> = gold.iter().map(|&g| one_hot(g).unwrap()).collect();
        assert_eq!(brier(&perfect, &gold, BrierVariant::SumOverClasses).unwrap(), 0.0);
        let u = brier(&[UNIFORM; 3], &gold, BrierVariant::SumOverClasses).unwrap();
        assert!((u - 5.0 / 6.0).abs() < 1e-12);
        let m = brier(&[UNIFORM; 3], &gold, BrierVariant::MeanOverClasses).unwrap();
        assert!((m - 5.0 / 36.0).abs() < 1e-12);
        let wrong: Vec<Probs> = [2, 4, 1].iter().map(|&g| one_hot(g).unwrap()).collect();
        assert_eq!(brier(&wrong, &gold, BrierVariant::SumOverClasses).unwrap(), 2.0);
        assert_eq!(brier(&[], &[], BrierVariant::SumOverClasses), Err(MetricError::EmptyInput));
    }

    #[test]
    fn prevalence_beats_uniform() {
        let gold = [1, 1, 1, 2, 4, 4];
        let prev: Probs = [0.5, 1.0 / 6.0, 0.0, 1.0 / 3.0, 0.0, 0.0];
        let a = brier(&[prev; 6], &gold, BrierVariant::SumOverClasses).unwrap();
        let b = brier(&[UNIFORM; 6], &gold, BrierVariant::SumOverClasses).unwrap();
        assert!(a <= b);
    }

    #[test]
    fn constant_predictor_one_bin() {
        let p: Probs = [0.5, 0.5, 0.0, 0.0, 0.0, 0.0];
        let t = calibration_table(&[p; 4], &[1, 2, 1, 2], 1, 10).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!((t[0].count, t[0].mean_predicted, t[0].observed, t[0].gap), (4, 0.5, 0.5, 0.0));
    }

    #[test]
    fn quantile_bins() {
        // class-1 scores 0.1..1.0, two bins split at the median
        let probs: Vec<Probs> = (1..=10)
            .map(|i| {
                let v = i as f64 / 10.0;
                [v, 1.0 - v, 0.0, 0.0, 0.0, 0.0]
            })
            .collect();
        let gold: Vec<u8> = (1..=10).map(|i| if i > 6 { 1 } else { 2 }).collect();
        let t = calibration_table(&probs, &gold, 1, 2).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!((t[0].count, t[1].count), (5, 5));
        assert_eq!(t[0].upper, 0.5);
        assert_eq!((t[0].positives, t[1].positives), (0, 4));
        assert!(calibration_table(&probs, &gold, 1, 1).unwrap().len() == 1);
    }

    #[test]
    fn weighted_observed_is_prevalence() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let n = rng.random_range(1..200);
            let probs: Vec<Probs> = (0..n)
                .map(|_| {
                    let v: Probs = std::array::from_fn(|_| rng.random_range(0..4) as f64);
                    let s: f64 = v.iter().sum::<f64>().max(1.0);
                    v.map(|x| x / s)
                })
                .collect();
            let gold: Vec<u8> = (0..n).map(|_| rng.random_range(1..=6)).collect();
            for class in 1..=6 {
                let t = calibration_table(&probs, &gold, class, rng.random_range(1..12)).unwrap();
                assert_eq!(t.iter().map(|b| b.count).sum::<usize>(), n);
                let pos = t.iter().map(|b| b.positives).sum::<usize>();
                assert_eq!(pos, gold.iter().filter(|&&g| g == class).count());
                assert!(t.iter().all(|b| (0.0..=1.0).contains(&b.observed)));
            }
        }
    }

    #[test]
    fn surfaces() {
        let gold = [1, 2, 2, 5];
        let perfect: Vec<Probs> = gold.iter().map(|&g| one_hot(g).unwrap()).collect();
        let s = probability_surfaces(&perfect, &gold).unwrap();
        assert_eq!(s.heatmap[1], Some(one_hot(2).unwrap()));
        assert_eq!(s.absent, vec![3, 4, 6]);
        assert_eq!(s.ridges.len(), 36);
        assert_eq!(s.ridges[6 + 1].values, vec![1.0, 1.0]);
        // one-hot: heatmap is the row-normalized confusion matrix
        let pred: Vec<Probs> = [1, 1, 2, 6].iter().map(|&g| one_hot(g).unwrap()).collect();
        let s = probability_surfaces(&pred, &gold).unwrap();
        assert_eq!(s.heatmap[1], Some([0.5, 0.5, 0.0, 0.0, 0.0, 0.0]));
        let s = probability_surfaces(&[UNIFORM; 4], &gold).unwrap();
        for row in s.heatmap.iter().flatten() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|v| (v - 1.0 / 6.0).abs() < 1e-15));
        }
    }
}
