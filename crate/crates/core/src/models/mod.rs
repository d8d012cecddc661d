//! Toy triage classifiers: a feedforward network, gradient-boosted trees and
//! a joint-embedding energy model, plus threshold tuning and permutation
//! importance.
//!
//! All three pipelines are natively implemented stand-ins for the compared
//! architectures (paragraph-vector MLP, transformer + boosted trees, JEPA).
//! Text enters every pipeline as hashed bag-of-token features.

pub mod boosted;
pub mod dense;
pub mod feedforward;
pub mod importance;
pub mod jepa;
pub mod thresholds;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{LabelSystem, N_CLASSES};
use crate::features::{EncoderSchema, FeatureVector, InputVariant};

pub use boosted::{train_boosted, BoostedConfig, BoostedEnsemble};
pub use feedforward::{train_feedforward, FeedForwardConfig, FeedForwardModel};
pub use importance::{permutation_importance, GroupImportance};
pub use jepa::{train_jepa, JepaConfig, JepaModel};
pub use thresholds::{tune_thresholds, ClassThreshold};

pub type Probs = [f64; N_CLASSES];

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("non-finite loss at epoch {0}")]
    NonFiniteLoss(usize),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("invalid training data: {0}")]
    InvalidData(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("model file: {0}")]
    Persist(String),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

/// Feature rows with class indices `0..6` (ordinal rank minus one).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<usize>,
    pub schema_id: String,
}

impl Dataset {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<usize>, schema_id: impl Into<String>) -> Result<Self> {
        let d = Self { x, y, schema_id: schema_id.into() };
        d.validate()?;
        Ok(d)
    }

    /// Builds a dataset from encoded vectors and ordinal ranks (1..=6).
    pub fn from_vectors(vectors: &[FeatureVector], ranks: &[u8]) -> Result<Self> {
        let schema_id = vectors.first().map(|v| v.schema_id.clone()).unwrap_or_default();
        if let Some(v) = vectors.iter().find(|v| v.schema_id != schema_id) {
            return Err(ModelError::SchemaMismatch(format!("{} vs {}", v.schema_id, schema_id)));
        }
        let y = ranks
            .iter()
            .map(|&r| {
                if (1..=N_CLASSES as u8).contains(&r) {
                    Ok(r as usize - 1)
                } else {
                    Err(ModelError::InvalidData(format!("rank {r} outside 1..=6")))
                }
            })
            .collect::<Result<_>>()?;
        Self::new(vectors.iter().map(|v| v.values.clone()).collect(), y, schema_id)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    fn validate(&self) -> Result<()> {
        if self.x.len() != self.y.len() {
            return Err(ModelError::InvalidData(format!("{} rows but {} labels", self.x.len(), self.y.len())));
        }
        let d = self.dim();
        if self.x.iter().any(|r| r.len() != d) {
            return Err(ModelError::InvalidData("inconsistent feature lengths".into()));
        }
        if self.x.iter().flatten().any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidData("non-finite feature value".into()));
        }
        if self.y.iter().any(|&c| c >= N_CLASSES) {
            return Err(ModelError::InvalidData("label outside 0..6".into()));
        }
        Ok(())
    }

    pub(crate) fn check_compatible(&self, other: &Dataset) -> Result<()> {
        if other.is_empty() {
            return Ok(());
        }
        if self.dim() != other.dim() || self.schema_id != other.schema_id {
            return Err(ModelError::SchemaMismatch(format!(
                "train {}[{}] vs val {}[{}]",
                self.schema_id,
                self.dim(),
                other.schema_id,
                other.dim()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_accuracy: f64,
    pub train_log_loss: f64,
    /// NaN-free: absent when no validation set was given.
    pub val_accuracy: Option<f64>,
    pub val_log_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub epochs: Vec<EpochStats>,
}

/// Index of the largest probability; ties resolve to the most acute class.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

const PROB_FLOOR: f64 = 1e-15;

/// (accuracy, mean log loss) of a probability function on a dataset.
pub fn evaluate(data: &Dataset, predict: impl Fn(&[f64]) -> Probs) -> (f64, f64) {
    let mut correct = 0usize;
    let mut loss = 0.0;
    for (x, &y) in data.x.iter().zip(&data.y) {
        let p = predict(x);
        correct += (argmax(&p) == y) as usize;
        loss -= p[y].max(PROB_FLOOR).ln();
    }
    let n = data.len() as f64;
    (correct as f64 / n, loss / n)
}

pub(crate) fn epoch_stats(
    epoch: usize,
    train: &Dataset,
    val: &Dataset,
    predict: impl Fn(&[f64]) -> Probs,
) -> Result<EpochStats> {
    let (train_accuracy, train_log_loss) = evaluate(train, &predict);
    let (val_accuracy, val_log_loss) = if val.is_empty() {
        (None, None)
    } else {
        let (a, l) = evaluate(val, &predict);
        (Some(a), Some(l))
    };
    if !train_log_loss.is_finite() || val_log_loss.is_some_and(|l| !l.is_finite()) {
        return Err(ModelError::NonFiniteLoss(epoch));
    }
    Ok(EpochStats { epoch, train_accuracy, train_log_loss, val_accuracy, val_log_loss })
}

pub(crate) fn to_probs(v: Vec<f64>) -> Probs {
    let mut p = [0.0; N_CLASSES];
    p.copy_from_slice(&v);
    p
}

/// A trained model of any of the three kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedModel {
    FeedForward(FeedForwardModel),
    Boosted(BoostedEnsemble),
    Jepa(JepaModel),
}

impl TrainedModel {
    pub fn kind(&self) -> &'static str {
        match self {
            TrainedModel::FeedForward(_) => "feedforward",
            TrainedModel::Boosted(_) => "boosted",
            TrainedModel::Jepa(_) => "jepa",
        }
    }

    pub fn schema_id(&self) -> &str {
        match self {
            TrainedModel::FeedForward(m) => &m.schema_id,
            TrainedModel::Boosted(m) => &m.schema_id,
            TrainedModel::Jepa(m) => &m.schema_id,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            TrainedModel::FeedForward(m) => m.input_dim(),
            TrainedModel::Boosted(m) => m.n_features,
            TrainedModel::Jepa(m) => m.input_dim(),
        }
    }

    /// Class probabilities for a raw feature row (no schema check).
    pub fn predict_row(&self, x: &[f64]) -> Probs {
        match self {
            TrainedModel::FeedForward(m) => m.predict_row(x),
            TrainedModel::Boosted(m) => m.predict_row(x),
            TrainedModel::Jepa(m) => m.predict_row(x),
        }
    }
}

/// Six class probabilities summing to one for a vector of the model's schema.
pub fn predict_proba(model: &TrainedModel, fv: &FeatureVector) -> Result<Probs> {
    if fv.schema_id != model.schema_id() || fv.len() != model.input_dim() {
        return Err(ModelError::SchemaMismatch(format!(
            "model expects {}[{}], got {}[{}]",
            model.schema_id(),
            model.input_dim(),
            fv.schema_id,
            fv.len()
        )));
    }
    Ok(model.predict_row(&fv.values))
}

pub const BUNDLE_FORMAT_VERSION: u32 = 1;

/// Self-describing model file: encoder, input variant, label system and
/// parameters. Floats are written in shortest round-trip form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format_version: u32,
    pub label_system: LabelSystem,
    pub input_variant: InputVariant,
    pub schema: EncoderSchema,
    pub model: TrainedModel,
}

impl ModelBundle {
    pub fn new(label_system: LabelSystem, input_variant: InputVariant, schema: EncoderSchema, model: TrainedModel) -> Self {
        Self { format_version: BUNDLE_FORMAT_VERSION, label_system, input_variant, schema, model }
    }

    pub fn save<W: Write>(&self, sink: W) -> Result<()> {
        serde_json::to_writer(sink, self).map_err(|e| ModelError::Persist(e.to_string()))
    }

    pub fn load<R: Read>(source: R) -> Result<Self> {
        let bundle: Self = serde_json::from_reader(source).map_err(|e| ModelError::Persist(e.to_string()))?;
        if bundle.format_version != BUNDLE_FORMAT_VERSION {
            return Err(ModelError::Persist(format!("unsupported format version {}", bundle.format_version)));
        }
        Ok(bundle)
    }
}

/// Trains every candidate and keeps the one with the lowest final validation
/// log loss (first wins on ties). Used for small declared hyperparameter grids.
pub fn sweep<C: Clone>(
    candidates: &[C],
    mut train: impl FnMut(&C) -> Result<(TrainedModel, LearningCurve)>,
) -> Result<(usize, TrainedModel, LearningCurve)> {
    let mut best: Option<(usize, TrainedModel, LearningCurve, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let (model, curve) = train(c)?;
        let score = curve
            .epochs
            .last()
            .and_then(|e| e.val_log_loss)
            .unwrap_or(f64::INFINITY);
        if best.as_ref().is_none_or(|b| score < b.3) {
            best = Some((i, model, curve, score));
        }
    }
    best.map(|(i, m, c, _)| (i, m, c))
        .ok_or_else(|| ModelError::InvalidConfig("empty sweep".into()))
}
