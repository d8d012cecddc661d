//! Three-layer rectifier network trained with mini-batch SGD, inverted
//! dropout on both hidden layers and an L2 weight penalty.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dense::{log_sum_exp, relu, relu_backward, softmax, Dense};
use super::{epoch_stats, to_probs, Dataset, LearningCurve, ModelError, Probs, Result};
use crate::cohort::N_CLASSES;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeedForwardConfig {
    pub hidden: [usize; 2],
    pub dropout: f64,
    pub l2: f64,
    pub learning_rate: f64,
    /// Learning rate at epoch e is `learning_rate / (1 + lr_decay * e)`.
    pub lr_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for FeedForwardConfig {
    fn default() -> Self {
        Self {
            hidden: [64, 32],
            dropout: 0.05,
            l2: 1e-5,
            learning_rate: 0.25,
            lr_decay: 0.0,
            epochs: 100,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl FeedForwardConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) || self.epochs == 0 || self.batch_size == 0 {
            return Err(ModelError::InvalidConfig("feedforward: counts must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::InvalidConfig("feedforward: dropout must lie in [0, 1)".into()));
        }
        if !(self.learning_rate > 0.0) || self.l2 < 0.0 || self.lr_decay < 0.0 {
            return Err(ModelError::InvalidConfig("feedforward: bad rate or penalty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedForwardModel {
    pub schema_id: String,
    pub layers: [Dense; 3],
    pub dropout: f64,
    pub l2: f64,
}

struct Trace {
    pre1: Vec<f64>,
    act1: Vec<f64>,
    pre2: Vec<f64>,
    act2: Vec<f64>,
    probs: Vec<f64>,
    logits: Vec<f64>,
}

impl FeedForwardModel {
    /// He-initialized hidden layers and a zero output layer, so an untrained
    /// model predicts the uniform distribution.
    pub fn init(input_dim: usize, hidden: [usize; 2], dropout: f64, l2: f64, schema_id: &str, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            schema_id: schema_id.to_string(),
            layers: [
                Dense::he(input_dim, hidden[0], &mut rng),
                Dense::he(hidden[0], hidden[1], &mut rng),
                Dense::zeros(hidden[1], N_CLASSES),
            ],
            dropout,
            l2,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    fn mask<R: Rng>(&self, v: &mut [f64], rng: Option<&mut R>) {
        if let Some(rng) = rng {
            if self.dropout > 0.0 {
                let keep = 1.0 - self.dropout;
                for a in v.iter_mut() {
                    *a = if rng.random::<f64>() < keep { *a / keep } else { 0.0 };
                }
            }
        }
    }

    fn trace<R: Rng>(&self, x: &[f64], mut rng: Option<&mut R>) -> Trace {
        let pre1 = self.layers[0].forward(x);
        let mut act1 = relu(&pre1);
        self.mask(&mut act1, rng.as_deref_mut());
        let pre2 = self.layers[1].forward(&act1);
        let mut act2 = relu(&pre2);
        self.mask(&mut act2, rng);
        let logits = self.layers[2].forward(&act2);
        let probs = softmax(&logits);
        Trace { pre1, act1, pre2, act2, probs, logits }
    }

    pub fn predict_row(&self, x: &[f64]) -> Probs {
        to_probs(self.trace::<ChaCha8Rng>(x, None).probs)
    }

    /// Mean cross-entropy plus `l2 * sum(W^2)` over a batch, and its gradient
    /// as three layer-shaped accumulators. Dropout is applied when `rng` is
    /// given.
    pub fn loss_and_gradient<R: Rng>(&self, x: &[Vec<f64>], y: &[usize], mut rng: Option<&mut R>) -> (f64, [Dense; 3]) {
        let mut grads = self.layers.clone().map(|l| Dense::zeros(l.inputs, l.outputs));
        let b = x.len() as f64;
        let mut loss = 0.0;
        for (xi, &yi) in x.iter().zip(y) {
            let t = self.trace(xi, rng.as_deref_mut());
            loss += log_sum_exp(&t.logits) - t.logits[yi];
            let mut g3 = t.probs.clone();
            g3[yi] -= 1.0;
            g3.iter_mut().for_each(|g| *g /= b);
            let mut g2 = self.layers[2].backward(&t.act2, &g3, &mut grads[2]);
            // inverted dropout: a zeroed unit has act == 0 and pre > 0 possibly;
            // scale by the same mask used in the forward pass
            self.undo_mask(&t.pre2, &t.act2, &mut g2);
            let mut g1 = self.layers[1].backward(&t.act1, &g2, &mut grads[1]);
            self.undo_mask(&t.pre1, &t.act1, &mut g1);
            self.layers[0].backward(xi, &g1, &mut grads[0]);
        }
        loss /= b;
        for (layer, grad) in self.layers.iter().zip(grads.iter_mut()) {
            loss += self.l2 * layer.weight_sq_norm();
            for (g, w) in grad.weights.iter_mut().zip(&layer.weights) {
                *g += 2.0 * self.l2 * w;
            }
        }
        (loss, grads)
    }

    /// Backprop through rectifier + dropout: the unit's effective gain is
    /// act / pre (0, 1 or 1/keep).
    fn undo_mask(&self, pre: &[f64], act: &[f64], grad: &mut [f64]) {
        relu_backward(pre, grad);
        for ((g, &z), &a) in grad.iter_mut().zip(pre).zip(act) {
            if z > 0.0 {
                *g *= a / z;
            }
        }
    }

    pub fn params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.params().copied()).collect()
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        let mut it = flat.iter();
        for l in &mut self.layers {
            for p in l.params_mut() {
                *p = *it.next().expect("parameter vector too short");
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(Dense::is_finite)
    }
}

pub fn flatten_grads(grads: &[Dense]) -> Vec<f64> {
    grads.iter().flat_map(|l| l.params().copied()).collect()
}

/// Mini-batch SGD on cross-entropy + L2; records one curve entry per epoch.
pub fn train_feedforward(train: &Dataset, val: &Dataset, cfg: &FeedForwardConfig) -> Result<(FeedForwardModel, LearningCurve)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(ModelError::InvalidData("empty training set".into()));
    }
    train.check_compatible(val)?;
    let mut model = FeedForwardModel::init(train.dim(), cfg.hidden, cfg.dropout, cfg.l2, &train.schema_id, cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut curve = LearningCurve::default();

    for epoch in 1..=cfg.epochs {
        let lr = cfg.learning_rate / (1.0 + cfg.lr_decay * (epoch - 1) as f64);
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let xb: Vec<Vec<f64>> = batch.iter().map(|&i| train.x[i].clone()).collect();
            let yb: Vec<usize> = batch.iter().map(|&i| train.y[i]).collect();
            let (loss, grads) = model.loss_and_gradient(&xb, &yb, Some(&mut rng));
            if !loss.is_finite() {
                return Err(ModelError::NonFiniteLoss(epoch));
            }
            for (layer, grad) in model.layers.iter_mut().zip(&grads) {
                for (p, g) in layer.params_mut().zip(grad.params()) {
                    *p -= lr * g;
                }
            }
        }
        if !model.is_finite() {
            return Err(ModelError::NonFiniteLoss(epoch));
        }
        curve.epochs.push(epoch_stats(epoch, train, val, |x| model.predict_row(x))?);
    }
    Ok((model, curve))
}
