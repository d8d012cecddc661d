//! Python bindings: cohorts, splits, metrics, calibration, ranking and full
//! runs. Sequences of ranks are plain lists of ints in 1..=6; probability rows
//! are lists of six floats.

use std::path::PathBuf;

use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use triage_core::agreement;
use triage_core::calibration::{self, BrierVariant};
use triage_core::cohort::{
    ingest_cohort, stratified_split, synthesize_cohort, write_cohort, CohortFormat, LabelSystem, MarginalSpec,
    StratumSelector,
};
use triage_core::metrics::{self, KappaWeighting, MetricError, ProcessMetricsRow};
use triage_core::models::Probs;
use triage_core::run::{self, RunConfig};

fn metric_err(e: MetricError) -> PyErr {
    if e.is_numeric() {
        PyArithmeticError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn probs(rows: Vec<Vec<f64>>) -> PyResult<Vec<Probs>> {
    rows.into_iter()
        .map(|r| Probs::try_from(r.as_slice()).map_err(|_| PyValueError::new_err(format!("expected 6 probabilities, got {}", r.len()))))
        .collect()
}

/// A patient cohort.
#[pyclass(name = "Cohort", module = "triage_py", from_py_object)]
#[derive(Clone)]
struct PyCohort {
    inner: triage_core::cohort::Cohort,
}

#[pymethods]
impl PyCohort {
    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        ingest_cohort(text.as_bytes(), CohortFormat::DelimitedTable).map(|inner| Self { inner }).map_err(value_err)
    }

    #[staticmethod]
    fn from_jsonl(text: &str) -> PyResult<Self> {
        ingest_cohort(text.as_bytes(), CohortFormat::RecordPerLine).map(|inner| Self { inner }).map_err(value_err)
    }

    fn to_csv(&self) -> PyResult<String> {
        let mut out = Vec::new();
        write_cohort(&self.inner, CohortFormat::DelimitedTable, &mut out).map_err(value_err)?;
        String::from_utf8(out).map_err(value_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn case_ids(&self) -> Vec<String> {
        self.inner.records.iter().map(|r| r.case_id.clone()).collect()
    }

    /// Gold ranks under `label_system` ("french" or "gemsa"); None when unlabelled.
    #[pyo3(signature = (label_system = "french"))]
    fn gold_ranks(&self, label_system: &str) -> PyResult<Vec<Option<u8>>> {
        let ls: LabelSystem = label_system.parse().map_err(value_err)?;
        Ok(self.inner.records.iter().map(|r| ls.gold_rank(r)).collect())
    }

    fn nurse_ranks(&self) -> Vec<Option<u8>> {
        self.inner.records.iter().map(|r| r.nurse_triage.map(|l| l.rank())).collect()
    }
}

#[pyfunction]
#[pyo3(signature = (n, seed = 0))]
fn synthesize(n: usize, seed: u64) -> PyResult<PyCohort> {
    synthesize_cohort(&MarginalSpec::table1(), n, seed).map(|inner| PyCohort { inner }).map_err(value_err)
}

/// Stratified split on the gold triage level; returns (train, validation).
#[pyfunction]
#[pyo3(signature = (cohort, train_fraction = 0.8, seed = 0))]
fn split(cohort: &PyCohort, train_fraction: f64, seed: u64) -> PyResult<(PyCohort, PyCohort)> {
    let (a, b) = stratified_split(&cohort.inner, train_fraction, StratumSelector::GoldTriage, seed).map_err(value_err)?;
    Ok((PyCohort { inner: a }, PyCohort { inner: b }))
}

/// (mae, rmse)
#[pyfunction]
fn ordinal_error(pred: Vec<u8>, gold: Vec<u8>) -> PyResult<(f64, f64)> {
    let e = metrics::ordinal_error(&pred, &gold).map_err(metric_err)?;
    Ok((e.mae, e.rmse))
}

#[pyfunction]
#[pyo3(signature = (pred, gold, weighting = "quadratic"))]
fn weighted_kappa(pred: Vec<u8>, gold: Vec<u8>, weighting: &str) -> PyResult<f64> {
    let w: KappaWeighting = weighting.parse().map_err(value_err)?;
    metrics::weighted_kappa(&pred, &gold, w).map_err(metric_err)
}

#[pyfunction]
fn rank_correlation(pred: Vec<u8>, gold: Vec<u8>) -> PyResult<f64> {
    metrics::rank_correlation(&pred, &gold).map_err(metric_err)
}

/// {"micro", "macro", "per_class"}; per-class entries are None for classes
/// absent from both sequences.
#[pyfunction]
fn f1_scores<'py>(py: Python<'py>, pred: Vec<u8>, gold: Vec<u8>) -> PyResult<Bound<'py, PyDict>> {
    let f = metrics::f1_suite(&pred, &gold).map_err(metric_err)?;
    let d = PyDict::new(py);
    d.set_item("micro", f.micro)?;
    d.set_item("macro", f.macro_)?;
    d.set_item("per_class", f.per_class.to_vec())?;
    Ok(d)
}

/// (exact, near) agreement rates.
#[pyfunction]
fn agreement_rates(pred: Vec<u8>, gold: Vec<u8>) -> PyResult<(f64, f64)> {
    metrics::agreement_rates(&pred, &gold).map_err(metric_err)
}

/// (auc, variance, lower, upper) with a DeLong interval at `level`.
#[pyfunction]
#[pyo3(signature = (positives, negatives, level = 0.95))]
fn auc_delong(positives: Vec<f64>, negatives: Vec<f64>, level: f64) -> PyResult<(f64, f64, f64, f64)> {
    let a = metrics::auc_delong(&positives, &negatives, 1.0 - level).map_err(metric_err)?;
    Ok((a.auc, a.variance, a.lower, a.upper))
}

/// One-vs-rest AUC per class (None when not computable) and the macro mean.
#[pyfunction]
fn class_aucs(probs_rows: Vec<Vec<f64>>, gold: Vec<u8>) -> PyResult<(Vec<Option<f64>>, Option<f64>)> {
    let r = metrics::roc_analysis(&probs(probs_rows)?, &gold, 0.05).map_err(metric_err)?;
    Ok((r.per_class.iter().map(|c| c.auc.map(|a| a.auc)).collect(), r.macro_auc))
}

#[pyfunction]
#[pyo3(signature = (probs_rows, gold, variant = "sum"))]
fn brier(probs_rows: Vec<Vec<f64>>, gold: Vec<u8>, variant: &str) -> PyResult<f64> {
    let v: BrierVariant = variant.parse().map_err(value_err)?;
    calibration::brier(&probs(probs_rows)?, &gold, v).map_err(metric_err)
}

/// Reliability bins for one class as dicts.
#[pyfunction]
#[pyo3(signature = (probs_rows, gold, class_rank, bins = 10))]
fn calibration_table<'py>(
    py: Python<'py>,
    probs_rows: Vec<Vec<f64>>,
    gold: Vec<u8>,
    class_rank: u8,
    bins: usize,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let table = calibration::calibration_table(&probs(probs_rows)?, &gold, class_rank, bins).map_err(metric_err)?;
    table
        .iter()
        .map(|b| {
            let d = PyDict::new(py);
            d.set_item("lower", b.lower)?;
            d.set_item("upper", b.upper)?;
            d.set_item("count", b.count)?;
            d.set_item("positives", b.positives)?;
            d.set_item("mean_predicted", b.mean_predicted)?;
            d.set_item("observed", b.observed)?;
            d.set_item("gap", b.gap)?;
            Ok(d)
        })
        .collect()
}

/// Mean predicted distribution per gold rank (None for absent ranks).
#[pyfunction]
fn heatmap(probs_rows: Vec<Vec<f64>>, gold: Vec<u8>) -> PyResult<Vec<Option<Vec<f64>>>> {
    let s = calibration::probability_surfaces(&probs(probs_rows)?, &gold).map_err(metric_err)?;
    Ok(s.heatmap.into_iter().map(|r| r.map(|p| p.to_vec())).collect())
}

/// Rows are gold ranks, columns predicted ranks.
#[pyfunction]
fn confusion(pred: Vec<u8>, gold: Vec<u8>) -> PyResult<Vec<Vec<usize>>> {
    Ok(agreement::confusion(&pred, &gold).map_err(metric_err)?.counts.iter().map(|r| r.to_vec()).collect())
}

/// (bias, sd, lower, upper)
#[pyfunction]
fn bland_altman(pred: Vec<u8>, gold: Vec<u8>) -> PyResult<(f64, f64, f64, f64)> {
    let s = agreement::bland_altman(&pred, &gold).map_err(metric_err)?;
    Ok((s.bias, s.sd, s.lower, s.upper))
}

/// Rows are (process, mae, rmse, kappa, spearman); returns (process, composite)
/// in input order, with the gold row last when requested.
#[pyfunction]
#[pyo3(signature = (rows, include_gold = true))]
fn composite_ranking(rows: Vec<(String, f64, f64, f64, f64)>, include_gold: bool) -> PyResult<Vec<(String, f64)>> {
    let rows: Vec<ProcessMetricsRow> = rows
        .into_iter()
        .map(|(process, mae, rmse, kappa, spearman)| ProcessMetricsRow { process, mae, rmse, kappa, spearman })
        .collect();
    let scores = metrics::composite_ranking(&rows, include_gold).map_err(metric_err)?;
    Ok(scores.into_iter().map(|s| (s.process, s.composite)).collect())
}

/// Runs the full pipeline into `out`. `config` is TOML text; returns the
/// manifest's artifact checksums.
#[pyfunction]
#[pyo3(signature = (out, config = "", seed = None))]
fn evaluate_run(py: Python<'_>, out: PathBuf, config: &str, seed: Option<u64>) -> PyResult<Vec<(String, String)>> {
    let mut cfg = RunConfig::from_toml(config).map_err(value_err)?;
    cfg.out = out;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let manifest = py.detach(|| cfg.validate().and_then(|_| run::evaluate_run(&cfg))).map_err(|e| {
        if e.exit_code() == 4 {
            PyArithmeticError::new_err(e.to_string())
        } else {
            PyValueError::new_err(e.to_string())
        }
    })?;
    Ok(manifest.artifacts.into_iter().collect())
}

#[pymodule]
fn triage_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCohort>()?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(split, m)?)?;
    m.add_function(wrap_pyfunction!(ordinal_error, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_kappa, m)?)?;
    m.add_function(wrap_pyfunction!(rank_correlation, m)?)?;
    m.add_function(wrap_pyfunction!(f1_scores, m)?)?;
    m.add_function(wrap_pyfunction!(agreement_rates, m)?)?;
    m.add_function(wrap_pyfunction!(auc_delong, m)?)?;
    m.add_function(wrap_pyfunction!(class_aucs, m)?)?;
    m.add_function(wrap_pyfunction!(brier, m)?)?;
    m.add_function(wrap_pyfunction!(calibration_table, m)?)?;
    m.add_function(wrap_pyfunction!(heatmap, m)?)?;
    m.add_function(wrap_pyfunction!(confusion, m)?)?;
    m.add_function(wrap_pyfunction!(bland_altman, m)?)?;
    m.add_function(wrap_pyfunction!(composite_ranking, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_run, m)?)?;
    Ok(())
}
