//! Python bindings: sampling, closed forms, weight estimation, the
//! generative model, distillation and evaluation.

use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use nurd_core::analytic::{self, LinearRep};
use nurd_core::distillation::{self, DistillConfig};
use nurd_core::eval::{self, NurdModel, PerfReport};
use nurd_core::experiment::{self, Suite};
use nurd_core::generative::{self, LinearGaussianGen};
use nurd_core::nn::{MlpSpec, OptConfig, OutputKind};
use nurd_core::reweighting;
use nurd_core::{families, FamilySpec, NurdError};

fn to_py(err: NurdError) -> PyErr {
    match err {
        NurdError::NonFinite { .. } => PyArithmeticError::new_err(err.to_string()),
        NurdError::Io(_) => PyOSError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> PyResult<T> {
    serde_json::from_str(text).map_err(|e| PyValueError::new_err(format!("{what}: {e}")))
}

/// Samples `(y, z, x1, x2, w)` drawn from one family member.
#[pyclass(name = "Dataset", module = "nurd")]
pub struct PyDataset {
    inner: families::Dataset,
}

#[pymethods]
impl PyDataset {
    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn y(&self) -> Vec<f64> {
        self.inner.labels()
    }

    #[getter]
    fn z(&self) -> Vec<f64> {
        self.inner.nuisance_column()
    }

    #[getter]
    fn x(&self) -> Vec<[f64; 2]> {
        self.inner.samples.iter().map(|s| s.x).collect()
    }

    #[getter]
    fn w(&self) -> Vec<f64> {
        self.inner.weights()
    }

    /// Family descriptor as JSON.
    #[getter]
    fn spec(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner.spec).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    /// Copy with per-row weights replaced.
    fn with_weights(&self, weights: Vec<f64>) -> PyResult<PyDataset> {
        Ok(PyDataset {
            inner: self.inner.with_weights(&weights).map_err(to_py)?,
        })
    }

    fn __repr__(&self) -> String {
        format!("Dataset({}, n={})", self.inner.spec.name(), self.inner.len())
    }
}

#[pyfunction]
fn sample_binary_gaussian(a: f64, n: usize, seed: u64) -> PyResult<PyDataset> {
    Ok(PyDataset {
        inner: families::sample_binary_gaussian(a, n, seed).map_err(to_py)?,
    })
}

/// Sample any family from its JSON descriptor, e.g.
/// `{"kind": "ContinuousGaussian", "a": 0.5, "sigma2": 2.0}`.
#[pyfunction]
fn sample_family(spec_json: &str, n: usize, seed: u64) -> PyResult<PyDataset> {
    let spec: FamilySpec = parse_json(spec_json, "family spec")?;
    Ok(PyDataset {
        inner: families::sample(&spec, n, seed).map_err(to_py)?,
    })
}

#[pyfunction]
fn binary_posterior(a: f64, z: f64) -> f64 {
    analytic::binary_posterior(a, z)
}

#[pyfunction]
fn rel_perf(a: f64, b: f64, sigma2: f64) -> PyResult<f64> {
    analytic::rel_perf(a, b, sigma2).map_err(to_py)
}

#[pyfunction]
fn cross_kl(a: f64, b: f64, sigma2: f64) -> PyResult<f64> {
    analytic::cross_kl(a, b, sigma2).map_err(to_py)
}

#[pyfunction]
fn prop3_criterion(a: f64, b: f64) -> f64 {
    analytic::prop3_criterion(a, b)
}

/// `table[b][s] = p(y = 1 | x = [b, s])` for the gap family.
#[pyfunction]
fn gap_posterior(rho: [[f64; 2]; 2]) -> PyResult<[[f64; 2]; 2]> {
    analytic::gap_posterior(&rho).map_err(to_py)
}

#[pyfunction]
fn eq5_landscape(u: f64, v: f64, lam: f64) -> f64 {
    analytic::eq5_landscape(LinearRep::new(u, v), lam)
}

#[pyfunction]
fn optimal_linear_accuracy(a_test: f64) -> f64 {
    analytic::optimal_linear_accuracy(a_test)
}

/// Cross-fitted weights `p(y) / p_tr(y | z)` with a `[1, 16, 1]` model,
/// rescaled so each class keeps its empirical mass.
#[pyfunction]
#[pyo3(signature = (data, k = 5, seed = 0, epochs = 100))]
fn crossfit_weights(py: Python<'_>, data: &PyDataset, k: usize, seed: u64, epochs: usize) -> PyResult<Vec<f64>> {
    let spec = MlpSpec::new(&[1, 16, 1], OutputKind::Logit).map_err(to_py)?;
    let opt = OptConfig {
        epochs,
        seed,
        ..OptConfig::default()
    };
    py.detach(|| {
        let est = reweighting::crossfit_weights(&data.inner, k, &spec, &opt)?;
        reweighting::renormalize_marginal(&est, &data.inner.labels())
    })
    .map(|est| est.weights)
    .map_err(to_py)
}

/// Linear-Gaussian model of `x | y, z`.
#[pyclass(name = "Generator", module = "nurd")]
pub struct PyGenerator {
    inner: LinearGaussianGen,
}

#[pymethods]
impl PyGenerator {
    #[getter]
    fn mean_coef(&self) -> [[f64; 3]; 2] {
        self.inner.mean_coef
    }

    #[getter]
    fn resid_cov(&self) -> [[f64; 2]; 2] {
        self.inner.resid_cov
    }

    /// `n` rows with `y` and `z` drawn independently from `data`.
    fn sample_randomized(&self, data: &PyDataset, n: usize, seed: u64) -> PyResult<PyDataset> {
        Ok(PyDataset {
            inner: generative::sample_randomized(&self.inner, &data.inner, n, seed).map_err(to_py)?,
        })
    }
}

#[pyfunction]
fn fit_generator(data: &PyDataset) -> PyResult<PyGenerator> {
    Ok(PyGenerator {
        inner: generative::fit_generator(&data.inner).map_err(to_py)?,
    })
}

/// A distilled representation and head.
#[pyclass(name = "Model", module = "nurd")]
pub struct PyModel {
    inner: NurdModel,
    history: Vec<distillation::HistoryRow>,
    best_epoch: usize,
}

#[pymethods]
impl PyModel {
    /// `p(y = 1 | x)` for each row.
    fn predict_proba(&self, x: Vec<[f64; 2]>) -> Vec<f64> {
        x.iter()
            .map(|x| distillation::predict(&self.inner.rep, &self.inner.head, x))
            .collect()
    }

    /// Representation values `r(x)`.
    fn represent(&self, x: Vec<[f64; 2]>) -> PyResult<Vec<f64>> {
        x.iter()
            .map(|x| self.inner.rep.forward(x).map_err(to_py))
            .collect()
    }

    /// Rows `(step, loglik, penalty, objective, val_objective)`.
    #[getter]
    fn history(&self) -> Vec<(usize, f64, f64, f64, Option<f64>)> {
        self.history
            .iter()
            .map(|h| (h.step, h.loglik, h.penalty, h.objective, h.val_objective))
            .collect()
    }

    #[getter]
    fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

/// Distill on `data` under `weights`; `config_json` overrides
/// `DistillConfig` fields.
#[pyfunction]
#[pyo3(signature = (data, weights, seed = 0, config_json = None))]
fn distill(
    py: Python<'_>,
    data: &PyDataset,
    weights: Vec<f64>,
    seed: u64,
    config_json: Option<&str>,
) -> PyResult<PyModel> {
    let cfg: DistillConfig = match config_json {
        Some(text) => parse_json(text, "distill config")?,
        None => DistillConfig::default(),
    };
    let out = py
        .detach(|| distillation::distill(&data.inner, &weights, &cfg, seed))
        .map_err(to_py)?;
    Ok(PyModel {
        inner: NurdModel {
            rep: out.rep,
            head: out.head,
        },
        history: out.history,
        best_epoch: out.best_epoch,
    })
}

fn report_dict<'py>(py: Python<'py>, r: &PerfReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("accuracy", r.accuracy)?;
    d.set_item("mean_loglik", r.mean_loglik)?;
    d.set_item("kl_perf", r.kl_perf)?;
    d.set_item("n_eval", r.n_eval)?;
    d.set_item("stderr", r.stderr)?;
    Ok(d)
}

#[pyfunction]
fn evaluate<'py>(py: Python<'py>, model: &PyModel, data: &PyDataset) -> PyResult<Bound<'py, PyDict>> {
    let report = eval::evaluate(&model.inner, &data.inner).map_err(to_py)?;
    report_dict(py, &report)
}

/// Thresholded `r* = x1 + x2` on `data`.
#[pyfunction]
fn evaluate_optimal_linear<'py>(py: Python<'py>, data: &PyDataset) -> PyResult<Bound<'py, PyDict>> {
    let report = eval::evaluate(&eval::optimal_linear_predictor(), &data.inner).map_err(to_py)?;
    report_dict(py, &report)
}

/// `(name, passed, detail)` for each item of `analytic`, `nn` or `e2e`.
#[pyfunction]
fn check(py: Python<'_>, suite: &str) -> PyResult<Vec<(String, bool, String)>> {
    let suite = match suite {
        "analytic" => Suite::Analytic,
        "nn" => Suite::Nn,
        "e2e" => Suite::E2e,
        other => return Err(PyValueError::new_err(format!("unknown suite {other:?}"))),
    };
    let items = py.detach(|| experiment::run_suite(suite));
    Ok(items.into_iter().map(|i| (i.name, i.passed, i.detail)).collect())
}

#[pymodule]
fn nurd(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyGenerator>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(sample_binary_gaussian, m)?)?;
    m.add_function(wrap_pyfunction!(sample_family, m)?)?;
    m.add_function(wrap_pyfunction!(binary_posterior, m)?)?;
    m.add_function(wrap_pyfunction!(rel_perf, m)?)?;
    m.add_function(wrap_pyfunction!(cross_kl, m)?)?;
    m.add_function(wrap_pyfunction!(prop3_criterion, m)?)?;
    m.add_function(wrap_pyfunction!(gap_posterior, m)?)?;
    m.add_function(wrap_pyfunction!(eq5_landscape, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_linear_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(crossfit_weights, m)?)?;
    m.add_function(wrap_pyfunction!(fit_generator, m)?)?;
    m.add_function(wrap_pyfunction!(distill, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_optimal_linear, m)?)?;
    m.add_function(wrap_pyfunction!(check, m)?)?;
    Ok(())
}
