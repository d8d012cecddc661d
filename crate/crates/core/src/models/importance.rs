use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, Dataset, Probs};
use crate::features::FeatureGroup;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupImportance {
    pub group: String,
    /// Mean drop in exact agreement over the permutation repeats.
    pub importance: f64,
}

fn exact_agreement(data: &Dataset, predict: &impl Fn(&[f64]) -> Probs) -> f64 {
    let hits = data.x.iter().zip(&data.y).filter(|(x, &y)| argmax(&predict(x)) == y).count();
    hits as f64 / data.len() as f64
}

/// Permutation importance of each column block, sorted by decreasing
/// importance (ties keep group order). All columns of a block are shuffled
/// with the same row permutation.
pub fn permutation_importance(
    predict: impl Fn(&[f64]) -> Probs,
    val: &Dataset,
    groups: &[FeatureGroup],
    repeats: usize,
    seed: u64,
) -> Vec<GroupImportance> {
    if val.is_empty() || repeats == 0 {
        return groups.iter().map(|g| GroupImportance { group: g.name.clone(), importance: 0.0 }).collect();
    }
    let baseline = exact_agreement(val, &predict);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<GroupImportance> = groups
        .iter()
        .map(|g| {
            let mut drop = 0.0;
            for _ in 0..repeats {
                let mut perm: Vec<usize> = (0..val.len()).collect();
                perm.shuffle(&mut rng);
                let mut shuffled = val.clone();
                for (row, &src) in shuffled.x.iter_mut().zip(&perm) {
                    row[g.columns.clone()].copy_from_slice(&val.x[src][g.columns.clone()]);
                }
                drop += baseline - exact_agreement(&shuffled, &predict);
            }
            GroupImportance { group: g.name.clone(), importance: drop / repeats as f64 }
        })
        .collect();
    out.sort_by(|a, b| b.importance.total_cmp(&a.importance));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{train_boosted, BoostedConfig};
    use rand::Rng;

    /// Label = quantized column 0; column 1 is independent noise.
    fn oracle_set(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let c = rng.random_range(0..6usize);
            x.push(vec![c as f64 + rng.random_range(-0.2..0.2), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
            y.push(c);
        }
        Dataset::new(x, y, "s").unwrap()
    }

    fn groups() -> Vec<FeatureGroup> {
        vec![
            FeatureGroup { name: "signal".into(), columns: 0..1 },
            FeatureGroup { name: "noise".into(), columns: 1..3 },
        ]
    }

    #[test]
    fn signal_beats_noise() {
        let train = oracle_set(300, 1);
        let val = oracle_set(200, 2);
        let cfg = BoostedConfig { rounds: 20, max_depth: 3, ..Default::default() };
        let empty = Dataset::new(vec![], vec![], "s").unwrap();
        let (model, _) = train_boosted(&train, &empty, &cfg).unwrap();
        let a = permutation_importance(|x| model.predict_row(x), &val, &groups(), 5, 7);
        assert_eq!(a[0].group, "signal");
        assert!(a[0].importance > 0.5);
        let noise = a.iter().find(|g| g.group == "noise").unwrap();
        assert!(noise.importance.abs() < 0.05, "{noise:?}");
        let b = permutation_importance(|x| model.predict_row(x), &val, &groups(), 5, 99);
        assert_eq!(a[0].group, b[0].group);
        assert_eq!(a, permutation_importance(|x| model.predict_row(x), &val, &groups(), 5, 7));
    }
}
