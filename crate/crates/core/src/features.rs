//! Numeric feature vectors from patient records.
//!
//! Structured fields are z-scaled or one-hot encoded with statistics fitted on
//! the training split only. Free text goes through signed feature hashing.

use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cohort::{AdmissionWindow, Cohort, PatientRecord, Recourse, Sex};

pub const DEFAULT_TEXT_DIM: usize = 256;
pub const OTHER_LEVEL: &str = "OTHER";

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("cannot fit an encoder on an empty training set")]
    EmptyTrain,
    #[error("text dimensionality must be at least 1")]
    ZeroTextDim,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub schema_id: String,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn empty() -> Self {
        Self { values: Vec::new(), schema_id: String::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousStat {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
}

/// Fitted structured encoder plus text-hashing parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderSchema {
    pub schema_id: String,
    /// Retained continuous features, in encoding order.
    pub continuous: Vec<ContinuousStat>,
    /// Continuous features dropped for zero variance on the training set.
    pub dropped: Vec<String>,
    pub sex_levels: Vec<String>,
    pub window_levels: Vec<String>,
    pub recourse_levels: Vec<String>,
    pub d_text: usize,
    pub seed: u64,
}

const CONTINUOUS: [&str; 8] = ["age", "sbp", "dbp", "hr", "temp", "eva", "spo2", "o2"];

fn continuous_value(r: &PatientRecord, name: &str) -> f64 {
    match name {
        "age" => r.age as f64,
        "sbp" => r.vitals.sbp,
        "dbp" => r.vitals.dbp,
        "hr" => r.vitals.hr,
        "temp" => r.vitals.temp,
        "eva" => r.vitals.eva,
        "spo2" => r.vitals.spo2,
        "o2" => r.vitals.o2,
        other => unreachable!("unknown continuous feature {other}"),
    }
}

fn seen_levels<T: Copy + PartialEq>(all: &[T], present: impl Fn(T) -> bool, token: impl Fn(T) -> &'static str) -> Vec<String> {
    let mut levels: Vec<String> = all.iter().copied().filter(|&v| present(v)).map(|v| token(v).to_string()).collect();
    levels.push(OTHER_LEVEL.to_string());
    levels
}

/// Fits encoder statistics on `train`. Standard deviations are sample (n-1)
/// estimates; a feature with zero spread is dropped and listed in `dropped`.
pub fn fit_schema(train: &Cohort, d_text: usize, seed: u64) -> Result<EncoderSchema, FeatureError> {
    if train.records.is_empty() {
        return Err(FeatureError::EmptyTrain);
    }
    if d_text == 0 {
        return Err(FeatureError::ZeroTextDim);
    }
    let n = train.records.len() as f64;
    let mut continuous = Vec::new();
    let mut dropped = Vec::new();
    for name in CONTINUOUS {
        let values: Vec<f64> = train.records.iter().map(|r| continuous_value(r, name)).collect();
        let mean = values.iter().sum::<f64>() / n;
        let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        let sd = if values.len() > 1 { (ss / (n - 1.0)).sqrt() } else { 0.0 };
        if sd > 1e-12 * mean.abs().max(1.0) {
            continuous.push(ContinuousStat { name: name.to_string(), mean, sd });
        } else {
            dropped.push(name.to_string());
        }
    }
    let recs = &train.records;
    let mut schema = EncoderSchema {
        schema_id: String::new(),
        continuous,
        dropped,
        sex_levels: seen_levels(&Sex::ALL, |s| recs.iter().any(|r| r.sex == s), Sex::token),
        window_levels: seen_levels(&AdmissionWindow::ALL, |w| recs.iter().any(|r| r.admission_window == w), AdmissionWindow::token),
        recourse_levels: seen_levels(&Recourse::ALL, |c| recs.iter().any(|r| r.recourse == c), Recourse::token),
        d_text,
        seed,
    };
    let digest = Sha256::digest(serde_json::to_vec(&schema).expect("schema serializes"));
    schema.schema_id = format!("struct-{}", &hex::encode(digest)[..16]);
    Ok(schema)
}

fn one_hot(levels: &[String], token: &str, out: &mut Vec<f64>) {
    let hit = levels.iter().position(|l| l == token).unwrap_or(levels.len() - 1);
    out.extend((0..levels.len()).map(|i| if i == hit { 1.0 } else { 0.0 }));
}

impl EncoderSchema {
    pub fn structured_len(&self) -> usize {
        self.continuous.len() + 2 + self.sex_levels.len() + self.window_levels.len() + self.recourse_levels.len()
    }

    pub fn text_schema_id(&self) -> String {
        text_schema_id(self.d_text, self.seed)
    }

    /// Column blocks of the structured encoding, for permutation importance.
    pub fn structured_groups(&self) -> Vec<FeatureGroup> {
        let mut groups = Vec::new();
        let mut at = 0;
        let mut push = |name: &str, width: usize| {
            groups.push(FeatureGroup { name: name.to_string(), columns: at..at + width });
            at += width;
        };
        for c in &self.continuous {
            push(&c.name, 1);
        }
        push("comorbidity_any", 1);
        push("comorbidity_vascular", 1);
        push("sex", self.sex_levels.len());
        push("admission_window", self.window_levels.len());
        push("recourse", self.recourse_levels.len());
        groups
    }
}

/// Z-scales continuous fields, one-hot encodes categoricals (unseen levels
/// land in `OTHER`) and maps booleans to {0, 1}.
pub fn encode_structured(record: &PatientRecord, schema: &EncoderSchema) -> FeatureVector {
    let mut values = Vec::with_capacity(schema.structured_len());
    for c in &schema.continuous {
        values.push((continuous_value(record, &c.name) - c.mean) / c.sd);
    }
    values.push(record.comorbidity_any as u8 as f64);
    values.push(record.comorbidity_vascular as u8 as f64);
    one_hot(&schema.sex_levels, record.sex.token(), &mut values);
    one_hot(&schema.window_levels, record.admission_window.token(), &mut values);
    one_hot(&schema.recourse_levels, record.recourse.token(), &mut values);
    FeatureVector { values, schema_id: schema.schema_id.clone() }
}

fn fold_char(c: char, out: &mut String) {
    let folded = match c {
        'à' | 'á' | 'â' | 'ã' | 'ä' | 'å' => "a",
        'æ' => "ae",
        'ç' => "c",
        'è' | 'é' | 'ê' | 'ë' => "e",
        'ì' | 'í' | 'î' | 'ï' => "i",
        'ñ' => "n",
        'ò' | 'ó' | 'ô' | 'õ' | 'ö' => "o",
        'œ' => "oe",
        'ù' | 'ú' | 'û' | 'ü' => "u",
        'ý' | 'ÿ' => "y",
        _ => {
            out.push(c);
            return;
        }
    };
    out.push_str(folded);
}

/// Lowercases, folds Latin accents and splits on non-alphanumerics.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut folded = String::with_capacity(text.len());
    for c in text.chars().flat_map(char::to_lowercase) {
        fold_char(c, &mut folded);
    }
    folded
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Seeded 64-bit FNV-1a.
fn token_hash(token: &str, seed: u64) -> u64 {
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in token.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(PRIME);
    }
    // final avalanche so the low bits used for the slot depend on every byte
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^ (h >> 33)
}

pub fn text_schema_id(d_text: usize, seed: u64) -> String {
    format!("text-d{d_text}-s{seed}")
}

/// Signed hashed bag of tokens scaled by `1 / max(1, token count)`, so the
/// L1 norm never exceeds 1.
pub fn featurize_text(text: &str, d_text: usize, seed: u64) -> FeatureVector {
    assert!(d_text >= 1, "d_text must be at least 1");
    let tokens = tokenize(text);
    let mut values = vec![0.0; d_text];
    let scale = 1.0 / tokens.len().max(1) as f64;
    for t in &tokens {
        let h = token_hash(t, seed);
        let slot = (h % d_text as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        values[slot] += sign * scale;
    }
    FeatureVector { values, schema_id: text_schema_id(d_text, seed) }
}

/// Concatenates feature blocks. Empty parts are skipped; repeating a block
/// from the same schema is rejected.
pub fn combine(parts: &[FeatureVector]) -> Result<FeatureVector, FeatureError> {
    let mut values = Vec::with_capacity(parts.iter().map(FeatureVector::len).sum());
    let mut ids: Vec<&str> = Vec::new();
    for p in parts.iter().filter(|p| !p.is_empty()) {
        if p.schema_id.is_empty() {
            return Err(FeatureError::SchemaMismatch("non-empty block without schema id".into()));
        }
        if ids.contains(&p.schema_id.as_str()) {
            return Err(FeatureError::SchemaMismatch(format!("block `{}` appears twice", p.schema_id)));
        }
        ids.push(&p.schema_id);
        values.extend_from_slice(&p.values);
    }
    Ok(FeatureVector { values, schema_id: ids.join("+") })
}

/// A contiguous block of columns treated as one unit for importance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureGroup {
    pub name: String,
    pub columns: Range<usize>,
}

/// Which record fields feed the models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputVariant {
    Structured,
    Text,
    #[default]
    Both,
}

impl InputVariant {
    pub fn name(self) -> &'static str {
        match self {
            InputVariant::Structured => "structured",
            InputVariant::Text => "text",
            InputVariant::Both => "both",
        }
    }

    pub fn schema_id(self, schema: &EncoderSchema) -> String {
        match self {
            InputVariant::Structured => schema.schema_id.clone(),
            InputVariant::Text => schema.text_schema_id(),
            InputVariant::Both => format!("{}+{}", schema.schema_id, schema.text_schema_id()),
        }
    }

    pub fn encode(self, record: &PatientRecord, schema: &EncoderSchema) -> FeatureVector {
        let text = || featurize_text(record.history_text.as_deref().unwrap_or(""), schema.d_text, schema.seed);
        match self {
            InputVariant::Structured => encode_structured(record, schema),
            InputVariant::Text => text(),
            InputVariant::Both => combine(&[encode_structured(record, schema), text()])
                .expect("structured and text blocks have distinct schema ids"),
        }
    }

    pub fn groups(self, schema: &EncoderSchema) -> Vec<FeatureGroup> {
        let text = |offset: usize| FeatureGroup { name: "history_text".into(), columns: offset..offset + schema.d_text };
        match self {
            InputVariant::Structured => schema.structured_groups(),
            InputVariant::Text => vec![text(0)],
            InputVariant::Both => {
                let mut g = schema.structured_groups();
                g.push(text(schema.structured_len()));
                g
            }
        }
    }
}

impl FromStr for InputVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "structured" => Ok(InputVariant::Structured),
            "text" => Ok(InputVariant::Text),
            "both" => Ok(InputVariant::Both),
            other => Err(format!("unknown input variant `{other}`")),
        }
    }
}
