//! Record-per-line prediction files. Each line is either
//! `{"case_id", "process", "probs": [p1..p6]}` or
//! `{"case_id", "process", "label": rank}` where `rank` is the ordinal
//! position 1..=6 under the evaluated label system.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use super::{MetricError, PredictionSet, Result};
use crate::cohort::N_CLASSES;
use crate::models::Probs;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub case_id: String,
    pub process: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
}

enum Rows {
    Probs(Vec<(String, Probs)>),
    Labels(Vec<(String, u8)>),
}

/// Reads every process in the file, in order of first appearance.
pub fn read_predictions<R: Read>(source: R) -> Result<Vec<PredictionSet>> {
    let mut groups: Vec<(String, Rows)> = Vec::new();
    for (i, line) in BufReader::new(source).lines().enumerate() {
        let line = line.map_err(|e| MetricError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| MetricError::MalformedRow { line: i + 1, reason };
        let rec: PredictionRecord = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        let pos = match groups.iter().position(|(p, _)| *p == rec.process) {
            Some(p) => p,
            None => {
                let rows = if rec.probs.is_some() { Rows::Probs(Vec::new()) } else { Rows::Labels(Vec::new()) };
                groups.push((rec.process.clone(), rows));
                groups.len() - 1
            }
        };
        match (&mut groups[pos].1, rec.probs, rec.label) {
            (Rows::Probs(rows), Some(p), None) => {
                let p: Probs = p
                    .try_into()
                    .map_err(|v: Vec<f64>| malformed(format!("expected {N_CLASSES} probabilities, got {}", v.len())))?;
                rows.push((rec.case_id, p));
            }
            (Rows::Labels(rows), None, Some(l)) => rows.push((rec.case_id, l)),
            (_, Some(_), Some(_)) => return Err(malformed("both `probs` and `label` given".into())),
            (_, None, None) => return Err(malformed("neither `probs` nor `label` given".into())),
            _ => return Err(malformed(format!("process `{}` mixes probabilities and labels", rec.process))),
        }
    }
    groups
        .into_iter()
        .map(|(process, rows)| match rows {
            Rows::Probs(r) => PredictionSet::from_probs(process, r),
            Rows::Labels(r) => PredictionSet::from_labels(process, r),
        })
        .collect()
}

/// Writes hard-label sets as `label` records and the rest as `probs`.
pub fn write_predictions<W: Write>(sets: &[PredictionSet], mut sink: W) -> Result<()> {
    for set in sets {
        for (id, p) in set.case_ids.iter().zip(&set.probs) {
            let rec = if set.hard_labels {
                let rank = p.iter().position(|&v| v == 1.0).map(|i| i as u8 + 1);
                PredictionRecord { case_id: id.clone(), process: set.process.clone(), probs: None, label: rank }
            } else {
                PredictionRecord { case_id: id.clone(), process: set.process.clone(), probs: Some(p.to_vec()), label: None }
            };
            let line = serde_json::to_string(&rec).map_err(|e| MetricError::Io(e.to_string()))?;
            writeln!(sink, "{line}").map_err(|e| MetricError::Io(e.to_string()))?;
        }
    }
    Ok(())
}
