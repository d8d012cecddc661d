//! Patient records, label systems, cohort files, stratified splitting and
//! synthetic cohort generation.

mod io;
mod split;
mod synth;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{ingest_cohort, write_cohort, CohortFormat};
pub use split::{stratified_split, StratumSelector};
pub use synth::{
    synthesize_cohort, AcuityLink, ContinuousMarginal, MarginalSpec, Proportions,
};

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("duplicate case id `{0}`")]
    DuplicateCaseId(String),
    #[error("source contains no records")]
    EmptySource,
    #[error("record `{0}` has no label for the requested stratum")]
    MissingStratumLabel(String),
    #[error("invalid marginal spec: {0}")]
    InvalidSpec(String),
    #[error("invalid split fraction {0}; must lie strictly between 0 and 1")]
    InvalidFraction(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = CohortError> = std::result::Result<T, E>;

/// Number of ordinal slots shared by both label systems.
pub const N_CLASSES: usize = 6;

/// FRENCH six-level triage scale. `T1` is the most acute level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TriageLevel {
    T1,
    T2,
    T3A,
    T3B,
    T4,
    T5,
}

impl TriageLevel {
    pub const ALL: [TriageLevel; N_CLASSES] = [
        TriageLevel::T1,
        TriageLevel::T2,
        TriageLevel::T3A,
        TriageLevel::T3B,
        TriageLevel::T4,
        TriageLevel::T5,
    ];

    pub fn rank(self) -> u8 {
        triage_rank(self)
    }

    pub fn from_rank(rank: u8) -> Option<Self> {
        match rank {
            1..=6 => Some(Self::ALL[rank as usize - 1]),
            _ => None,
        }
    }

    /// File token: `1`, `2`, `3A`, `3B`, `4` or `5`.
    pub fn token(self) -> &'static str {
        match self {
            TriageLevel::T1 => "1",
            TriageLevel::T2 => "2",
            TriageLevel::T3A => "3A",
            TriageLevel::T3B => "3B",
            TriageLevel::T4 => "4",
            TriageLevel::T5 => "5",
        }
    }
}

/// Ordinal position of a triage level, 1 (most acute) through 6.
pub fn triage_rank(level: TriageLevel) -> u8 {
    match level {
        TriageLevel::T1 => 1,
        TriageLevel::T2 => 2,
        TriageLevel::T3A => 3,
        TriageLevel::T3B => 4,
        TriageLevel::T4 => 5,
        TriageLevel::T5 => 6,
    }
}

impl fmt::Display for TriageLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for TriageLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "1" => Ok(TriageLevel::T1),
            "2" => Ok(TriageLevel::T2),
            "3A" => Ok(TriageLevel::T3A),
            "3B" => Ok(TriageLevel::T3B),
            "4" => Ok(TriageLevel::T4),
            "5" => Ok(TriageLevel::T5),
            other => Err(format!("unknown triage token `{other}`")),
        }
    }
}

/// GEMSA disposition code. `Unspecified` never enters a metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GemsaCode {
    G1,
    G2,
    G3,
    G4,
    G5,
    G6,
    Unspecified,
}

impl GemsaCode {
    pub const CODED: [GemsaCode; N_CLASSES] = [
        GemsaCode::G1,
        GemsaCode::G2,
        GemsaCode::G3,
        GemsaCode::G4,
        GemsaCode::G5,
        GemsaCode::G6,
    ];

    pub fn rank(self) -> Option<u8> {
        match self {
            GemsaCode::Unspecified => None,
            coded => Some(coded as u8 + 1),
        }
    }

    pub fn from_rank(rank: u8) -> Option<Self> {
        match rank {
            1..=6 => Some(Self::CODED[rank as usize - 1]),
            _ => None,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            GemsaCode::G1 => "1",
            GemsaCode::G2 => "2",
            GemsaCode::G3 => "3",
            GemsaCode::G4 => "4",
            GemsaCode::G5 => "5",
            GemsaCode::G6 => "6",
            GemsaCode::Unspecified => "",
        }
    }
}

impl FromStr for GemsaCode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "" => Ok(GemsaCode::Unspecified),
            t => t
                .parse::<u8>()
                .ok()
                .and_then(GemsaCode::from_rank)
                .ok_or_else(|| format!("unknown GEMSA token `{t}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sex {
    M,
    F,
}

impl Sex {
    pub const ALL: [Sex; 2] = [Sex::M, Sex::F];

    pub fn token(self) -> &'static str {
        match self {
            Sex::M => "M",
            Sex::F => "F",
        }
    }
}

impl FromStr for Sex {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "M" => Ok(Sex::M),
            "F" => Ok(Sex::F),
            other => Err(format!("unknown sex token `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AdmissionWindow {
    Night,
    Morning,
    Afternoon,
}

impl AdmissionWindow {
    pub const ALL: [AdmissionWindow; 3] = [
        AdmissionWindow::Night,
        AdmissionWindow::Morning,
        AdmissionWindow::Afternoon,
    ];

    pub fn token(self) -> &'static str {
        match self {
            AdmissionWindow::Night => "21-06",
            AdmissionWindow::Morning => "06-14",
            AdmissionWindow::Afternoon => "14-21",
        }
    }
}

impl FromStr for AdmissionWindow {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|w| w.token() == s.trim())
            .ok_or_else(|| format!("unknown admission window `{}`", s.trim()))
    }
}

/// Medical recourse category (reason for the ED visit).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Recourse {
    Abdo,
    Cardio,
    Various,
    Gu,
    GynOb,
    Infect,
    Poison,
    Neuro,
    Ophth,
    EntStoma,
    Derm,
    Psy,
    Pulm,
    Rheum,
    Trauma,
}

impl Recourse {
    pub const ALL: [Recourse; 15] = [
        Recourse::Abdo,
        Recourse::Cardio,
        Recourse::Various,
        Recourse::Gu,
        Recourse::GynOb,
        Recourse::Infect,
        Recourse::Poison,
        Recourse::Neuro,
        Recourse::Ophth,
        Recourse::EntStoma,
        Recourse::Derm,
        Recourse::Psy,
        Recourse::Pulm,
        Recourse::Rheum,
        Recourse::Trauma,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Recourse::Abdo => "ABDO",
            Recourse::Cardio => "CARDIO",
            Recourse::Various => "VARIOUS",
            Recourse::Gu => "GU",
            Recourse::GynOb => "GYN_OB",
            Recourse::Infect => "INFECT",
            Recourse::Poison => "POISON",
            Recourse::Neuro => "NEURO",
            Recourse::Ophth => "OPHTH",
            Recourse::EntStoma => "ENT_STOMA",
            Recourse::Derm => "DERM",
            Recourse::Psy => "PSY",
            Recourse::Pulm => "PULM",
            Recourse::Rheum => "RHEUM",
            Recourse::Trauma => "TRAUMA",
        }
    }
}

impl FromStr for Recourse {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|r| r.token() == s.trim())
            .ok_or_else(|| format!("unknown recourse `{}`", s.trim()))
    }
}

/// Vital signs at triage. `eva` is the 0-10 pain score, `o2` supplemental
/// oxygen in L/min.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vitals {
    pub sbp: f64,
    pub dbp: f64,
    pub hr: f64,
    pub temp: f64,
    pub eva: f64,
    pub spo2: f64,
    pub o2: f64,
}

impl Vitals {
    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("sbp", self.sbp),
            ("dbp", self.dbp),
            ("hr", self.hr),
            ("temp", self.temp),
            ("eva", self.eva),
            ("spo2", self.spo2),
            ("o2", self.o2),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| !v.is_finite()) {
            return Err(format!("{name} is not finite"));
        }
        if !(0.0..=100.0).contains(&self.spo2) {
            return Err(format!("spo2 {} outside [0, 100]", self.spo2));
        }
        if !(0.0..=10.0).contains(&self.eva) {
            return Err(format!("eva {} outside [0, 10]", self.eva));
        }
        if self.o2 < 0.0 {
            return Err(format!("o2 {} is negative", self.o2));
        }
        Ok(())
    }
}

pub const MIN_ADULT_AGE: u32 = 18;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub case_id: String,
    pub age: u32,
    pub sex: Sex,
    pub admission_window: AdmissionWindow,
    pub recourse: Recourse,
    pub comorbidity_any: bool,
    pub comorbidity_vascular: bool,
    pub vitals: Vitals,
    pub history_text: Option<String>,
    pub nurse_triage: Option<TriageLevel>,
    pub gold_triage: Option<TriageLevel>,
    pub gemsa: GemsaCode,
}

impl PatientRecord {
    pub fn validate(&self) -> Result<(), String> {
        if self.case_id.is_empty() {
            return Err("empty case_id".into());
        }
        if self.age < MIN_ADULT_AGE {
            return Err(format!("age {} below adult threshold {MIN_ADULT_AGE}", self.age));
        }
        self.vitals.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Ingested,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    pub records: Vec<PatientRecord>,
    pub provenance: Provenance,
}

impl Cohort {
    /// Builds a cohort after checking record invariants and case-id uniqueness.
    pub fn new(records: Vec<PatientRecord>, provenance: Provenance) -> Result<Self> {
        if records.is_empty() {
            return Err(CohortError::EmptySource);
        }
        let mut seen = std::collections::HashSet::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            r.validate()
                .map_err(|reason| CohortError::MalformedRow { line: i + 1, reason })?;
            if !seen.insert(r.case_id.as_str()) {
                return Err(CohortError::DuplicateCaseId(r.case_id.clone()));
            }
        }
        Ok(Self { records, provenance })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Which label system the downstream pipeline predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSystem {
    #[default]
    French,
    Gemsa,
}

impl LabelSystem {
    /// Gold ordinal rank of a record under this label system, if any.
    pub fn gold_rank(self, record: &PatientRecord) -> Option<u8> {
        match self {
            LabelSystem::French => record.gold_triage.map(TriageLevel::rank),
            LabelSystem::Gemsa => record.gemsa.rank(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LabelSystem::French => "french",
            LabelSystem::Gemsa => "gemsa",
        }
    }
}

impl FromStr for LabelSystem {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "french" => Ok(LabelSystem::French),
            "gemsa" => Ok(LabelSystem::Gemsa),
            other => Err(format!("unknown label system `{other}`")),
        }
    }
}
