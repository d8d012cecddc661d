//! Joint-embedding energy classifier.
//!
//! An encoder maps features to a latent embedding, a predictor head maps the
//! embedding into the space of six learned class targets, and the energy of a
//! class is the squared distance between prediction and target. Training
//! minimizes the softmin contrastive loss `E_y + logsumexp(-E)` plus VICReg
//! invariance, variance and covariance terms on the batch of predictions.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dense::{log_sum_exp, relu, relu_backward, softmax, Adam, Dense};
use super::{epoch_stats, to_probs, Dataset, LearningCurve, ModelError, Probs, Result};
use crate::cohort::N_CLASSES;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JepaConfig {
    pub hidden: usize,
    pub embed_dim: usize,
    pub vicreg: VicRegWeights,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for JepaConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            embed_dim: 32,
            vicreg: VicRegWeights::default(),
            learning_rate: 1e-3,
            epochs: 100,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl JepaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.embed_dim == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(ModelError::InvalidConfig("jepa: counts must be positive".into()));
        }
        let v = &self.vicreg;
        if [v.invariance, v.variance, v.covariance, v.gamma, v.eps].iter().any(|w| !(w.is_finite() && *w >= 0.0))
            || !(self.learning_rate > 0.0)
        {
            return Err(ModelError::InvalidConfig("jepa: weights must be finite and >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VicRegWeights {
    pub invariance: f64,
    pub variance: f64,
    pub covariance: f64,
    /// Target per-dimension standard deviation of the variance hinge.
    pub gamma: f64,
    /// Added to the variance under the square root.
    pub eps: f64,
}

impl Default for VicRegWeights {
    fn default() -> Self {
        Self { invariance: 25.0, variance: 25.0, covariance: 1.0, gamma: 1.0, eps: 0.0 }
    }
}

/// Unweighted VICReg terms of one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VicRegTerms {
    pub invariance: f64,
    pub variance: f64,
    pub covariance: f64,
}

fn column_stats(z: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    // shift by the first row so constant columns centre to exactly zero
    let b = z.len() as f64;
    let d = z[0].len();
    let shift = &z[0];
    let mut mean = vec![0.0; d];
    for row in z {
        for j in 0..d {
            mean[j] += row[j] - shift[j];
        }
    }
    mean.iter_mut().for_each(|m| *m /= b);
    let centred = z
        .iter()
        .map(|row| (0..d).map(|j| (row[j] - shift[j]) - mean[j]).collect())
        .collect();
    (mean.iter().zip(shift).map(|(m, s)| m + s).collect(), centred)
}

fn covariance(centred: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = centred[0].len();
    let denom = (centred.len() - 1) as f64;
    let mut c = vec![vec![0.0; d]; d];
    for row in centred {
        for j in 0..d {
            for k in 0..d {
                c[j][k] += row[j] * row[k] / denom;
            }
        }
    }
    c
}

/// Mean squared distance between paired rows, averaged over dimensions.
pub fn invariance_term(z: &[Vec<f64>], targets: &[Vec<f64>]) -> f64 {
    let d = z[0].len() as f64;
    z.iter()
        .zip(targets)
        .map(|(a, t)| a.iter().zip(t).map(|(x, y)| (x - y).powi(2)).sum::<f64>())
        .sum::<f64>()
        / (z.len() as f64 * d)
}

/// `mean_j max(0, gamma - sqrt(var_j + eps))` with the sample variance.
/// Zero for batches of fewer than two rows.
pub fn variance_term(z: &[Vec<f64>], gamma: f64, eps: f64) -> f64 {
    if z.len() < 2 {
        return 0.0;
    }
    let (_, centred) = column_stats(z);
    let d = z[0].len();
    let denom = (z.len() - 1) as f64;
    (0..d)
        .map(|j| {
            let var = centred.iter().map(|r| r[j] * r[j]).sum::<f64>() / denom;
            (gamma - (var + eps).sqrt()).max(0.0)
        })
        .sum::<f64>()
        / d as f64
}

/// Sum of squared off-diagonal sample covariances divided by dimension.
pub fn covariance_term(z: &[Vec<f64>]) -> f64 {
    if z.len() < 2 {
        return 0.0;
    }
    let (_, centred) = column_stats(z);
    let c = covariance(&centred);
    let d = c.len();
    let mut s = 0.0;
    for j in 0..d {
        for k in 0..d {
            if j != k {
                s += c[j][k] * c[j][k];
            }
        }
    }
    s / d as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JepaModel {
    pub schema_id: String,
    pub encoder: [Dense; 2],
    pub predictor: Dense,
    /// One learned target embedding per class.
    pub targets: Vec<Vec<f64>>,
    pub vicreg: VicRegWeights,
}

struct Forward {
    pre_hidden: Vec<f64>,
    hidden: Vec<f64>,
    embed: Vec<f64>,
    embed_act: Vec<f64>,
    pred: Vec<f64>,
}

/// Gradient accumulator with the same shape as the model.
#[derive(Debug, Clone)]
pub struct JepaGradient {
    pub encoder: [Dense; 2],
    pub predictor: Dense,
    pub targets: Vec<Vec<f64>>,
}

impl JepaGradient {
    pub fn flatten(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.encoder.iter().flat_map(|l| l.params().copied()).collect();
        v.extend(self.predictor.params());
        v.extend(self.targets.iter().flatten());
        v
    }
}

impl JepaModel {
    pub fn init(input_dim: usize, cfg: &JepaConfig, schema_id: &str) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let targets = Dense::gaussian(cfg.embed_dim, N_CLASSES, 1.0, &mut rng)
            .weights
            .chunks(cfg.embed_dim)
            .map(<[f64]>::to_vec)
            .collect();
        Self {
            schema_id: schema_id.to_string(),
            encoder: [
                Dense::he(input_dim, cfg.hidden, &mut rng),
                Dense::gaussian(cfg.hidden, cfg.embed_dim, (1.0 / cfg.hidden as f64).sqrt(), &mut rng),
            ],
            predictor: Dense::he(cfg.embed_dim, cfg.embed_dim, &mut rng),
            targets,
            vicreg: cfg.vicreg,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.encoder[0].inputs
    }

    fn forward(&self, x: &[f64]) -> Forward {
        let pre_hidden = self.encoder[0].forward(x);
        let hidden = relu(&pre_hidden);
        let embed = self.encoder[1].forward(&hidden);
        let embed_act = relu(&embed);
        let pred = self.predictor.forward(&embed_act);
        Forward { pre_hidden, hidden, embed, embed_act, pred }
    }

    /// Latent embedding of an input.
    pub fn embed(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).embed
    }

    /// Predicted embedding in target space.
    pub fn predict_embedding(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).pred
    }

    pub fn energies_of(&self, pred: &[f64]) -> Vec<f64> {
        self.targets
            .iter()
            .map(|t| t.iter().zip(pred).map(|(a, b)| (a - b).powi(2)).sum())
            .collect()
    }

    pub fn energies(&self, x: &[f64]) -> Vec<f64> {
        self.energies_of(&self.predict_embedding(x))
    }

    /// Normalized exponential of negative energies.
    pub fn predict_row(&self, x: &[f64]) -> Probs {
        let neg: Vec<f64> = self.energies(x).iter().map(|e| -e).collect();
        to_probs(softmax(&neg))
    }

    /// Unweighted VICReg terms for a batch of inputs with labels.
    pub fn vicreg_terms(&self, x: &[Vec<f64>], y: &[usize]) -> VicRegTerms {
        let z: Vec<Vec<f64>> = x.iter().map(|xi| self.predict_embedding(xi)).collect();
        let t: Vec<Vec<f64>> = y.iter().map(|&c| self.targets[c].clone()).collect();
        VicRegTerms {
            invariance: invariance_term(&z, &t),
            variance: variance_term(&z, self.vicreg.gamma, self.vicreg.eps),
            covariance: covariance_term(&z),
        }
    }

    /// Total batch loss and its gradient.
    pub fn loss_and_gradient(&self, x: &[Vec<f64>], y: &[usize]) -> (f64, JepaGradient) {
        let b = x.len();
        let bf = b as f64;
        let d = self.predictor.outputs;
        let df = d as f64;
        let w = self.vicreg;
        let fwd: Vec<Forward> = x.iter().map(|xi| self.forward(xi)).collect();
        let z: Vec<Vec<f64>> = fwd.iter().map(|f| f.pred.clone()).collect();

        let mut gz = vec![vec![0.0; d]; b];
        let mut gt = vec![vec![0.0; d]; N_CLASSES];
        let mut loss = 0.0;

        // contrastive: E_y + logsumexp(-E), averaged over the batch
        for (i, &yi) in y.iter().enumerate() {
            let e = self.energies_of(&z[i]);
            let neg: Vec<f64> = e.iter().map(|v| -v).collect();
            loss += (e[yi] + log_sum_exp(&neg)) / bf;
            let s = softmax(&neg);
            for c in 0..N_CLASSES {
                let coeff = ((c == yi) as u8 as f64 - s[c]) / bf;
                if coeff == 0.0 {
                    continue;
                }
                for j in 0..d {
                    let diff = 2.0 * (z[i][j] - self.targets[c][j]);
                    gz[i][j] += coeff * diff;
                    gt[c][j] -= coeff * diff;
                }
            }
        }

        // invariance
        let targets_of: Vec<Vec<f64>> = y.iter().map(|&c| self.targets[c].clone()).collect();
        loss += w.invariance * invariance_term(&z, &targets_of);
        for (i, &yi) in y.iter().enumerate() {
            for j in 0..d {
                let g = w.invariance * 2.0 * (z[i][j] - self.targets[yi][j]) / (bf * df);
                gz[i][j] += g;
                gt[yi][j] -= g;
            }
        }

        if b >= 2 {
            let (_, centred) = column_stats(&z);
            let denom = bf - 1.0;
            // variance hinge
            for j in 0..d {
                let var = centred.iter().map(|r| r[j] * r[j]).sum::<f64>() / denom;
                let std = (var + w.eps).sqrt();
                if std < w.gamma {
                    loss += w.variance * (w.gamma - std) / df;
                    if std > 0.0 {
                        let dstd = -w.variance / df / (2.0 * std);
                        for i in 0..b {
                            gz[i][j] += dstd * 2.0 * centred[i][j] / denom;
                        }
                    }
                }
            }
            // covariance
            let c = covariance(&centred);
            let mut off = 0.0;
            for j in 0..d {
                for k in 0..d {
                    if j != k {
                        off += c[j][k] * c[j][k];
                    }
                }
            }
            loss += w.covariance * off / df;
            let scale = w.covariance * 4.0 / (df * denom);
            for i in 0..b {
                for l in 0..d {
                    let mut acc = 0.0;
                    for k in 0..d {
                        if k != l {
                            acc += c[l][k] * centred[i][k];
                        }
                    }
                    gz[i][l] += scale * acc;
                }
            }
        }

        let mut grad = JepaGradient {
            encoder: self.encoder.clone().map(|l| Dense::zeros(l.inputs, l.outputs)),
            predictor: Dense::zeros(self.predictor.inputs, self.predictor.outputs),
            targets: gt,
        };
        for (i, f) in fwd.iter().enumerate() {
            let mut g_embed = self.predictor.backward(&f.embed_act, &gz[i], &mut grad.predictor);
            relu_backward(&f.embed, &mut g_embed);
            let mut g_hidden = self.encoder[1].backward(&f.hidden, &g_embed, &mut grad.encoder[1]);
            relu_backward(&f.pre_hidden, &mut g_hidden);
            self.encoder[0].backward(&x[i], &g_hidden, &mut grad.encoder[0]);
        }
        (loss, grad)
    }

    pub fn params(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.encoder.iter().flat_map(|l| l.params().copied()).collect();
        v.extend(self.predictor.params());
        v.extend(self.targets.iter().flatten());
        v
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        let [e0, e1] = &mut self.encoder;
        e0.params_mut()
            .chain(e1.params_mut())
            .chain(self.predictor.params_mut())
            .chain(self.targets.iter_mut().flatten())
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        for (p, v) in self.params_mut().zip(flat) {
            *p = *v;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|v| v.is_finite())
    }
}

/// Adam on the contrastive + VICReg objective.
pub fn train_jepa(train: &Dataset, val: &Dataset, cfg: &JepaConfig) -> Result<(JepaModel, LearningCurve)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(ModelError::InvalidData("empty training set".into()));
    }
    train.check_compatible(val)?;
    let mut model = JepaModel::init(train.dim(), cfg, &train.schema_id);
    let mut opt = Adam::new(model.params().len(), cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut curve = LearningCurve::default();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let xb: Vec<Vec<f64>> = batch.iter().map(|&i| train.x[i].clone()).collect();
            let yb: Vec<usize> = batch.iter().map(|&i| train.y[i]).collect();
            let (loss, grad) = model.loss_and_gradient(&xb, &yb);
            if !loss.is_finite() {
                return Err(ModelError::NonFiniteLoss(epoch));
            }
            opt.step(model.params_mut(), &grad.flatten());
        }
        if !model.is_finite() {
            return Err(ModelError::NonFiniteLoss(epoch));
        }
        curve.epochs.push(epoch_stats(epoch, train, val, |x| model.predict_row(x))?);
    }
    Ok((model, curve))
}
