use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Cohort, CohortError, PatientRecord, Result};

/// Label used to define split strata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StratumSelector {
    #[default]
    GoldTriage,
    NurseTriage,
    /// GEMSA code; `Unspecified` forms its own stratum.
    Gemsa,
}

impl StratumSelector {
    fn key(self, r: &PatientRecord) -> Option<u8> {
        match self {
            StratumSelector::GoldTriage => r.gold_triage.map(|l| l.rank()),
            StratumSelector::NurseTriage => r.nurse_triage.map(|l| l.rank()),
            StratumSelector::Gemsa => Some(r.gemsa.rank().unwrap_or(0)),
        }
    }
}

/// Per-stratum train quotas: floor allocation, then the slots still needed to
/// reach `round(fraction * n)` go to the largest fractional remainders.
pub(crate) fn allocate(sizes: &[usize], fraction: f64) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    let target = (fraction * n as f64).round() as usize;
    let exact: Vec<f64> = sizes.iter().map(|&s| fraction * s as f64).collect();
    let mut quota: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = quota.iter().sum();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(target.saturating_sub(assigned)) {
        quota[i] += 1;
    }
    quota
}

/// Splits a cohort into (train, validation) with class balance preserved per
/// stratum. Both halves keep the input's record order.
pub fn stratified_split(
    cohort: &Cohort,
    train_fraction: f64,
    strata: StratumSelector,
    seed: u64,
) -> Result<(Cohort, Cohort)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(CohortError::InvalidFraction(train_fraction));
    }
    let mut groups: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for (i, r) in cohort.records.iter().enumerate() {
        let key = strata
            .key(r)
            .ok_or_else(|| CohortError::MissingStratumLabel(r.case_id.clone()))?;
        groups.entry(key).or_default().push(i);
    }

    let sizes: Vec<usize> = groups.values().map(Vec::len).collect();
    let quotas = allocate(&sizes, train_fraction);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; cohort.len()];
    for (members, quota) in groups.values().zip(quotas) {
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        for &i in &shuffled[..quota] {
            in_train[i] = true;
        }
    }

    let (train, val): (Vec<_>, Vec<_>) = cohort
        .records
        .iter()
        .cloned()
        .zip(in_train)
        .partition(|(_, t)| *t);
    let strip = |v: Vec<(PatientRecord, bool)>| Cohort {
        records: v.into_iter().map(|(r, _)| r).collect(),
        provenance: cohort.provenance,
    };
    Ok((strip(train), strip(val)))
}
