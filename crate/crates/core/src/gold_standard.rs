//! Consensus gold labels from independent reviewer labels.

use std::collections::{BTreeMap, HashSet};
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{Cohort, TriageLevel, N_CLASSES};

#[derive(Debug, Error)]
pub enum ConsensusError {
    #[error("case `{0}` has no reviewer labels")]
    NoLabels(String),
    #[error("reviewer `{reviewer}` labelled case `{case}` more than once")]
    DuplicateReview { case: String, reviewer: String },
    #[error("malformed reviewer row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewerLabel {
    pub case_id: String,
    pub reviewer_id: String,
    pub label: TriageLevel,
}

/// Modal label; ties go to the most acute tied level.
pub fn consensus_label(labels: &[TriageLevel]) -> Option<TriageLevel> {
    let mut counts = [0usize; N_CLASSES];
    for l in labels {
        counts[l.rank() as usize - 1] += 1;
    }
    let best = *counts.iter().max()?;
    if best == 0 {
        return None;
    }
    // first maximum in rank order is the most acute
    counts.iter().position(|&c| c == best).and_then(|i| TriageLevel::from_rank(i as u8 + 1))
}

/// Resolves one label per case. Every id in `cases` must have at least one
/// review; reviewed cases not listed there are resolved too.
pub fn consensus(
    labels: &[ReviewerLabel],
    cases: &[String],
) -> Result<BTreeMap<String, TriageLevel>, ConsensusError> {
    let mut seen = HashSet::new();
    let mut grouped: BTreeMap<&str, Vec<TriageLevel>> = BTreeMap::new();
    for l in labels {
        if !seen.insert((l.case_id.as_str(), l.reviewer_id.as_str())) {
            return Err(ConsensusError::DuplicateReview {
                case: l.case_id.clone(),
                reviewer: l.reviewer_id.clone(),
            });
        }
        grouped.entry(&l.case_id).or_default().push(l.label);
    }
    if let Some(missing) = cases.iter().find(|c| !grouped.contains_key(c.as_str())) {
        return Err(ConsensusError::NoLabels(missing.clone()));
    }
    Ok(grouped
        .into_iter()
        .filter_map(|(case, ls)| consensus_label(&ls).map(|l| (case.to_string(), l)))
        .collect())
}

/// Overwrites `gold_triage` on every cohort record with its consensus label.
pub fn apply_consensus(cohort: &mut Cohort, labels: &[ReviewerLabel]) -> Result<(), ConsensusError> {
    let ids: Vec<String> = cohort.records.iter().map(|r| r.case_id.clone()).collect();
    let resolved = consensus(labels, &ids)?;
    for r in &mut cohort.records {
        r.gold_triage = resolved.get(&r.case_id).copied();
    }
    Ok(())
}

#[derive(Deserialize)]
struct RawReview {
    case_id: String,
    reviewer_id: String,
    label: String,
}

/// Reads a `case_id,reviewer_id,label` table with header.
pub fn read_reviewer_labels<R: Read>(source: R) -> Result<Vec<ReviewerLabel>, ConsensusError> {
    let mut reader = csv::Reader::from_reader(source);
    reader
        .deserialize::<RawReview>()
        .enumerate()
        .map(|(i, row)| {
            let line = i + 2;
            let raw = row.map_err(|e| ConsensusError::MalformedRow { line, reason: e.to_string() })?;
            let label = raw
                .label
                .parse()
                .map_err(|reason| ConsensusError::MalformedRow { line, reason })?;
            Ok(ReviewerLabel { case_id: raw.case_id, reviewer_id: raw.reviewer_id, label })
        })
        .collect()
}
