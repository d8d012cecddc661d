use serde::{Deserialize, Serialize};

use super::Probs;
use crate::cohort::N_CLASSES;

/// Max-F1 one-vs-rest threshold for one class. Both fields are `None` when
/// the class has no positive case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassThreshold {
    pub rank: u8,
    pub threshold: Option<f64>,
    pub f1: Option<f64>,
}

/// Best cut over the observed scores; the smallest threshold wins ties.
/// A case is predicted positive when its score is `>=` the threshold.
pub fn best_threshold(scores: &[f64], positive: &[bool]) -> Option<(f64, f64)> {
    let total_pos = positive.iter().filter(|&&p| p).count();
    if total_pos == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut best: Option<(f64, f64)> = None;
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
        let fn_ = total_pos - tp;
        let f1 = tp as f64 / (tp as f64 + 0.5 * (fp + fn_) as f64);
        // descending scan: >= keeps the later, smaller cut on ties
        if best.is_none_or(|(_, b)| f1 >= b) {
            best = Some((cut, f1));
        }
    }
    best
}

/// Per-class thresholds from probability vectors and gold ranks (1..=6).
pub fn tune_thresholds(probs: &[Probs], gold_ranks: &[u8]) -> Vec<ClassThreshold> {
    (0..N_CLASSES)
        .map(|c| {
            let scores: Vec<f64> = probs.iter().map(|p| p[c]).collect();
            let positive: Vec<bool> = gold_ranks.iter().map(|&g| g as usize == c + 1).collect();
            let best = best_threshold(&scores, &positive);
            ClassThreshold { rank: c as u8 + 1, threshold: best.map(|b| b.0), f1: best.map(|b| b.1) }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute force: try every observed score as a cut.
    fn oracle(scores: &[f64], positive: &[bool]) -> Option<(f64, f64)> {
        let mut best: Option<(f64, f64)> = None;
        for &t in scores {
            let tp = scores.iter().zip(positive).filter(|(s, p)| **s >= t && **p).count() as f64;
            let fp = scores.iter().zip(positive).filter(|(s, p)| **s >= t && !**p).count() as f64;
            let fn_ = scores.iter().zip(positive).filter(|(s, p)| **s < t && **p).count() as f64;
            let f1 = tp / (tp + 0.5 * (fp + fn_));
            let better = match best {
                None => true,
                Some((bt, bf)) => f1 > bf || (f1 == bf && t < bt),
            };
            if tp + fp + fn_ > 0.0 && better {
                best = Some((t, f1));
            }
        }
        best.filter(|_| positive.iter().any(|&p| p))
    }

    #[test]
    fn examples() {
        assert_eq!(best_threshold(&[0.9, 0.8, 0.2], &[true, true, false]), Some((0.8, 1.0)));
        let (t, f1) = best_threshold(&[0.6, 0.4], &[false, true]).unwrap();
        assert_eq!(t, 0.4);
        assert!((f1 - 2.0 / 3.0).abs() < 1e-15);
        // all equal: single candidate, everyone positive
        let (t, f1) = best_threshold(&[0.3, 0.3, 0.3], &[true, false, false]).unwrap();
        assert_eq!(t, 0.3);
        assert!((f1 - 0.5).abs() < 1e-15);
        assert_eq!(best_threshold(&[0.3, 0.2], &[false, false]), None);
    }

    #[test]
    fn matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..300 {
            let n = rng.random_range(1..25);
            let scores: Vec<f64> = (0..n).map(|_| (rng.random_range(0..8) as f64) / 8.0).collect();
            let positive: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
            assert_eq!(best_threshold(&scores, &positive), oracle(&scores, &positive));
        }
    }

    #[test]
    fn undefined_class_reported() {
        let probs = vec![[0.5, 0.5, 0.0, 0.0, 0.0, 0.0]; 2];
        let t = tune_thresholds(&probs, &[1, 2]);
        assert_eq!(t[0].threshold, Some(0.5));
        assert!(t[2].threshold.is_none() && t[2].f1.is_none());
        assert_eq!(t[5].rank, 6);
    }
}
