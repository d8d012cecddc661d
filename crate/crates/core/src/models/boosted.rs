//! Multiclass gradient-boosted regression trees on the softmax
//! cross-entropy. Each round fits one tree per class to the first-order
//! gradients with Newton leaf weights `-G / (H + lambda)`.

use serde::{Deserialize, Serialize};

use super::dense::softmax;
use super::{epoch_stats, to_probs, Dataset, LearningCurve, ModelError, Probs, Result};
use crate::cohort::N_CLASSES;

const MIN_GAIN: f64 = 1e-12;
const PRIOR_FLOOR: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostedConfig {
    pub rounds: usize,
    pub max_depth: usize,
    pub shrinkage: f64,
    /// L2 regularization on leaf weights.
    pub lambda: f64,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

impl Default for BoostedConfig {
    fn default() -> Self {
        Self { rounds: 200, max_depth: 3, shrinkage: 0.1, lambda: 1.0, min_samples_leaf: 1, seed: 0 }
    }
}

impl BoostedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 || self.min_samples_leaf == 0 {
            return Err(ModelError::InvalidConfig("boosted: depth and leaf size must be positive".into()));
        }
        if !(self.shrinkage > 0.0 && self.shrinkage <= 1.0) || self.lambda < 0.0 {
            return Err(ModelError::InvalidConfig("boosted: shrinkage in (0, 1], lambda >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf { value: f64 },
    /// `x[feature] <= threshold` goes left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    at = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .max()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedEnsemble {
    pub schema_id: String,
    pub n_features: usize,
    /// Log class frequencies of the training set.
    pub prior: Vec<f64>,
    pub shrinkage: f64,
    /// `rounds[r][k]` is the class-k tree of round r.
    pub rounds: Vec<Vec<Tree>>,
}

impl BoostedEnsemble {
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        let mut s = self.prior.clone();
        for round in &self.rounds {
            for (k, tree) in round.iter().enumerate() {
                s[k] += self.shrinkage * tree.predict(x);
            }
        }
        s
    }

    pub fn predict_row(&self, x: &[f64]) -> Probs {
        to_probs(softmax(&self.scores(x)))
    }
}

struct TreeBuilder<'a> {
    x: &'a [Vec<f64>],
    /// Sample indices sorted by each feature's value.
    sorted: &'a [Vec<usize>],
    grad: &'a [f64],
    hess: &'a [f64],
    cfg: &'a BoostedConfig,
    nodes: Vec<Node>,
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl TreeBuilder<'_> {
    fn leaf_value(&self, members: &[usize]) -> f64 {
        let g: f64 = members.iter().map(|&i| self.grad[i]).sum();
        let h: f64 = members.iter().map(|&i| self.hess[i]).sum();
        -g / (h + self.cfg.lambda)
    }

    fn best_split(&self, in_node: &[bool], members: &[usize]) -> Option<BestSplit> {
        let g_total: f64 = members.iter().map(|&i| self.grad[i]).sum();
        let h_total: f64 = members.iter().map(|&i| self.hess[i]).sum();
        let lambda = self.cfg.lambda;
        let parent = g_total * g_total / (h_total + lambda);
        let min_leaf = self.cfg.min_samples_leaf;
        let n = members.len();
        let mut best: Option<BestSplit> = None;
        for (f, order) in self.sorted.iter().enumerate() {
            let (mut gl, mut hl, mut count) = (0.0, 0.0, 0usize);
            let mut prev: Option<usize> = None;
            for &i in order.iter().filter(|&&i| in_node[i]) {
                if let Some(p) = prev {
                    let (vp, vi) = (self.x[p][f], self.x[i][f]);
                    if vi > vp && count >= min_leaf && n - count >= min_leaf {
                        let (gr, hr) = (g_total - gl, h_total - hl);
                        let gain = 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent);
                        if gain > MIN_GAIN && best.as_ref().is_none_or(|b| gain > b.gain) {
                            best = Some(BestSplit { gain, feature: f, threshold: 0.5 * (vp + vi) });
                        }
                    }
                }
                gl += self.grad[i];
                hl += self.hess[i];
                count += 1;
                prev = Some(i);
            }
        }
        best
    }

    fn grow(&mut self, members: Vec<usize>, in_node: &mut [bool], depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: self.leaf_value(&members) });
        if depth >= self.cfg.max_depth || members.len() < 2 * self.cfg.min_samples_leaf {
            return id;
        }
        for &i in &members {
            in_node[i] = true;
        }
        let split = self.best_split(in_node, &members);
        for &i in &members {
            in_node[i] = false;
        }
        let Some(split) = split else { return id };
        let (left, right): (Vec<usize>, Vec<usize>) =
            members.into_iter().partition(|&i| self.x[i][split.feature] <= split.threshold);
        let l = self.grow(left, in_node, depth + 1);
        let r = self.grow(right, in_node, depth + 1);
        self.nodes[id] = Node::Split { feature: split.feature, threshold: split.threshold, left: l, right: r };
        id
    }
}

fn presort(x: &[Vec<f64>], dim: usize) -> Vec<Vec<usize>> {
    (0..dim)
        .map(|f| {
            let mut idx: Vec<usize> = (0..x.len()).collect();
            idx.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
            idx
        })
        .collect()
}

/// Boosts `cfg.rounds` rounds; round 0 of the curve is the prior-only model.
/// Training is fully deterministic; no row or column subsampling is used.
pub fn train_boosted(train: &Dataset, val: &Dataset, cfg: &BoostedConfig) -> Result<(BoostedEnsemble, LearningCurve)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(ModelError::InvalidData("empty training set".into()));
    }
    train.check_compatible(val)?;
    let n = train.len();
    let mut counts = [0usize; N_CLASSES];
    for &y in &train.y {
        counts[y] += 1;
    }
    let prior: Vec<f64> = counts.iter().map(|&c| (c as f64 / n as f64).max(PRIOR_FLOOR).ln()).collect();
    let mut model = BoostedEnsemble {
        schema_id: train.schema_id.clone(),
        n_features: train.dim(),
        prior: prior.clone(),
        shrinkage: cfg.shrinkage,
        rounds: Vec::with_capacity(cfg.rounds),
    };
    let sorted = presort(&train.x, train.dim());
    let mut scores: Vec<Vec<f64>> = vec![prior; n];
    let mut in_node = vec![false; n];
    let mut curve = LearningCurve::default();

    for round in 1..=cfg.rounds {
        let probs: Vec<Vec<f64>> = scores.iter().map(|s| softmax(s)).collect();
        let mut trees = Vec::with_capacity(N_CLASSES);
        for k in 0..N_CLASSES {
            let grad: Vec<f64> = (0..n).map(|i| probs[i][k] - (train.y[i] == k) as u8 as f64).collect();
            let hess: Vec<f64> = (0..n).map(|i| probs[i][k] * (1.0 - probs[i][k])).collect();
            let mut builder = TreeBuilder { x: &train.x, sorted: &sorted, grad: &grad, hess: &hess, cfg, nodes: Vec::new() };
            builder.grow((0..n).collect(), &mut in_node, 0);
            trees.push(Tree { nodes: builder.nodes });
        }
        for (s, x) in scores.iter_mut().zip(&train.x) {
            for (k, t) in trees.iter().enumerate() {
                s[k] += cfg.shrinkage * t.predict(x);
            }
        }
        model.rounds.push(trees);
        curve.epochs.push(epoch_stats(round, train, val, |x| model.predict_row(x))?);
    }
    Ok((model, curve))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::testdata::blobs;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn empty() -> Dataset {
        Dataset::new(vec![], vec![], "test").unwrap()
    }

    #[test]
    fn zero_rounds_predicts_priors() {
        let d = Dataset::new(
            (0..12).map(|i| vec![i as f64]).collect(),
            vec![0, 0, 0, 1, 1, 2, 3, 3, 4, 5, 5, 5],
            "s",
        )
        .unwrap();
        let cfg = BoostedConfig { rounds: 0, ..Default::default() };
        let (m, curve) = train_boosted(&d, &empty(), &cfg).unwrap();
        assert!(curve.epochs.is_empty());
        let expected = [3.0, 2.0, 1.0, 2.0, 1.0, 3.0].map(|c| c / 12.0);
        let p = m.predict_row(&[100.0]);
        for (a, b) in p.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    /// Enumerating every stump on a single binary feature: only the cut at
    /// 0.5 separates the classes, so one round must classify perfectly.
    #[test]
    fn single_stump_separates_binary_feature() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![(i % 2) as f64, ((i * 7) % 5) as f64]).collect();
        let y: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let d = Dataset::new(x, y, "s").unwrap();
        let cfg = BoostedConfig { rounds: 1, max_depth: 1, ..Default::default() };
        let (m, curve) = train_boosted(&d, &empty(), &cfg).unwrap();
        assert_eq!(curve.epochs[0].train_accuracy, 1.0);
        match &m.rounds[0][0].nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 0.5);
            }
            other => panic!("expected split, got {other:?}"),
        }
    }

    #[test]
    fn train_loss_non_increasing() {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 60;
            let x: Vec<Vec<f64>> = (0..n).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..6)).collect();
            let d = Dataset::new(x, y, "s").unwrap();
            for shrinkage in [0.1, 0.3] {
                let cfg = BoostedConfig { rounds: 30, shrinkage, ..Default::default() };
                let (_, curve) = train_boosted(&d, &empty(), &cfg).unwrap();
                for w in curve.epochs.windows(2) {
                    assert!(
                        w[1].train_log_loss <= w[0].train_log_loss + 1e-12,
                        "seed {seed} nu {shrinkage}: {} -> {}",
                        w[0].train_log_loss,
                        w[1].train_log_loss
                    );
                }
            }
        }
    }

    #[test]
    fn min_leaf_respected() {
        let d = blobs(30, 3, 3, 0.5, 4);
        let cfg = BoostedConfig { rounds: 3, max_depth: 4, min_samples_leaf: 5, ..Default::default() };
        let (m, _) = train_boosted(&d, &empty(), &cfg).unwrap();
        for tree in m.rounds.iter().flatten() {
            let mut hits = vec![0usize; tree.nodes.len()];
            for x in &d.x {
                let mut at = 0;
                while let Node::Split { feature, threshold, left, right } = tree.nodes[at] {
                    at = if x[feature] <= threshold { left } else { right };
                }
                hits[at] += 1;
            }
            for (node, h) in tree.nodes.iter().zip(hits) {
                if matches!(node, Node::Leaf { .. }) {
                    assert!(h >= 5);
                }
            }
            assert!(tree.max_feature().is_none_or(|f| f < 3));
        }
    }

    #[test]
    fn deterministic() {
        let d = blobs(40, 3, 6, 0.8, 2);
        let cfg = BoostedConfig { rounds: 5, ..Default::default() };
        assert_eq!(train_boosted(&d, &empty(), &cfg).unwrap(), train_boosted(&d, &empty(), &cfg).unwrap());
    }
}
