//! Python bindings. Reports come back as plain dictionaries.

use nalgebra::DMatrix;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use pumrom_core::estimator::{self, BrrConstants};
use pumrom_core::study::{self, ExperimentConfig};
use pumrom_core::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Json(_) | Error::InvalidInput(_) | Error::MatrixFormat(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_dict<'py, T: serde::Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// An experiment configuration. Construct from a JSON string or with
/// `Experiment.load(path)`; keyword overrides mirror the command-line flags.
#[pyclass]
struct Experiment {
    cfg: ExperimentConfig,
}

#[pymethods]
impl Experiment {
    #[new]
    #[pyo3(signature = (json = "{}", seed = None, out = None, fast = None))]
    fn new(json: &str, seed: Option<u64>, out: Option<String>, fast: Option<bool>) -> PyResult<Self> {
        let cfg = ExperimentConfig::from_json(json).map_err(to_py)?;
        Self { cfg }.with(seed, out, fast)
    }

    #[staticmethod]
    #[pyo3(signature = (path, seed = None, out = None, fast = None))]
    fn load(path: &str, seed: Option<u64>, out: Option<String>, fast: Option<bool>) -> PyResult<Self> {
        let cfg = ExperimentConfig::load(path).map_err(to_py)?;
        Self { cfg }.with(seed, out, fast)
    }

    /// Effective configuration as a dictionary.
    fn config<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_dict(py, &self.cfg)
    }

    fn train<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let r = py.allow_threads(|| study::cmd_train(&self.cfg)).map_err(to_py)?;
        to_dict(py, &r)
    }

    fn enrich<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let r = py.allow_threads(|| study::cmd_enrich(&self.cfg)).map_err(to_py)?;
        to_dict(py, &r)
    }

    fn solve<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let r = py.allow_threads(|| study::cmd_solve(&self.cfg)).map_err(to_py)?;
        to_dict(py, &r)
    }

    fn study_linear<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let r = py.allow_threads(|| study::study_linear(&self.cfg)).map_err(to_py)?;
        to_dict(py, &r)
    }

    fn study_nonlinear<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let r = py.allow_threads(|| study::study_nonlinear(&self.cfg)).map_err(to_py)?;
        to_dict(py, &r)
    }

    fn study_enrichment<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let r = py.allow_threads(|| study::study_enrichment(&self.cfg)).map_err(to_py)?;
        to_dict(py, &r)
    }

    fn verify<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let r = py.allow_threads(|| study::verify(&self.cfg)).map_err(to_py)?;
        to_dict(py, &r)
    }
}

impl Experiment {
    fn with(mut self, seed: Option<u64>, out: Option<String>, fast: Option<bool>) -> PyResult<Self> {
        if let Some(s) = seed {
            self.cfg.seed = s;
        }
        if let Some(o) = out {
            self.cfg.out = Some(o.into());
        }
        if let Some(f) = fast {
            self.cfg.fast = f;
        }
        self.cfg.validate().map_err(to_py)?;
        Ok(self)
    }
}

#[pyfunction]
fn c_r(c: f64) -> f64 {
    estimator::c_r(c)
}

#[pyfunction]
fn delta_indicator(residuals: Vec<f64>) -> f64 {
    estimator::delta_indicator(&residuals)
}

#[pyfunction]
fn global_residual_bound(residuals: Vec<f64>, c: Vec<f64>, m: usize) -> f64 {
    estimator::global_residual_bound(&residuals, &c, m)
}

/// Returns `(tau, delta)`; `delta` is None when `tau >= 1`.
#[pyfunction]
fn brr_estimator(bound: f64, beta: f64, c_h: f64, lipschitz: f64) -> PyResult<(f64, Option<f64>)> {
    let e = estimator::brr_estimator(bound, &BrrConstants { beta, c_h, lipschitz }).map_err(to_py)?;
    Ok((e.tau, e.delta))
}

#[pyfunction]
fn mark_components(residuals: Vec<f64>, m_r: f64) -> Vec<usize> {
    pumrom_core::enrichment::mark_components(&residuals, m_r)
}

#[pyfunction]
fn spearman(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(PyValueError::new_err("need two sequences of equal length >= 2"));
    }
    Ok(study::spearman(&x, &y))
}

/// Reads a PUMROM01 matrix as a list of rows.
#[pyfunction]
fn read_matrix(path: &str) -> PyResult<Vec<Vec<f64>>> {
    let m = pumrom_core::fem::io::read_matrix(path).map_err(to_py)?;
    Ok(m.row_iter().map(|r| r.iter().copied().collect()).collect())
}

#[pyfunction]
fn write_matrix(path: &str, rows: Vec<Vec<f64>>) -> PyResult<()> {
    let nc = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != nc) {
        return Err(PyValueError::new_err("ragged rows"));
    }
    let m = DMatrix::from_fn(rows.len(), nc, |i, j| rows[i][j]);
    pumrom_core::fem::io::write_matrix(path, &m).map_err(to_py)
}

#[pymodule]
fn pumrom(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Experiment>()?;
    m.add_function(wrap_pyfunction!(c_r, m)?)?;
    m.add_function(wrap_pyfunction!(delta_indicator, m)?)?;
    m.add_function(wrap_pyfunction!(global_residual_bound, m)?)?;
    m.add_function(wrap_pyfunction!(brr_estimator, m)?)?;
    m.add_function(wrap_pyfunction!(mark_components, m)?)?;
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    m.add_function(wrap_pyfunction!(read_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(write_matrix, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
