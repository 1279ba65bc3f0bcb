//! Python bindings for the gpcov crate: the Matérn kernel, dataset
//! simulation, ML/CV estimation and the two quality criteria.
//!
//! Build with `cargo build -p gpcov-py --release`; the produced
//! `libgpcov_py.so` imports as the module `gpcov_py` (see
//! `python/smoke_test.py` for a loader that does not need maturin).

use gpcov::criteria::{self, QuadOrigin, QuadratureSet, TruthSpec};
use gpcov::estimators::{self, Dataset, Method, ModelFamily, OptimizerConfig};
use gpcov::experiment;
use gpcov::kernel::{self, MaternSpec, ParamBox};
use gpcov::sampling::{Design, SeedPlan};
use gpcov::GpError;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py_err(e: GpError) -> PyErr {
    match e {
        GpError::InvalidParam(_) | GpError::Usage(_) | GpError::BesselDomain { .. } => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// One member of the Matérn family: variance, correlation length,
/// smoothness and nugget variance.
#[pyclass(name = "MaternSpec", frozen, from_py_object)]
#[derive(Clone)]
struct PyMaternSpec {
    inner: MaternSpec,
}

#[pymethods]
impl PyMaternSpec {
    #[new]
    fn new(sigma2: f64, ell: f64, nu: f64, delta: f64) -> PyResult<Self> {
        Ok(PyMaternSpec {
            inner: MaternSpec::new(sigma2, ell, nu, delta).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn sigma2(&self) -> f64 {
        self.inner.sigma2
    }

    #[getter]
    fn ell(&self) -> f64 {
        self.inner.ell
    }

    #[getter]
    fn nu(&self) -> f64 {
        self.inner.nu
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta
    }

    fn __repr__(&self) -> String {
        format!(
            "MaternSpec(sigma2={}, ell={}, nu={}, delta={})",
            self.inner.sigma2, self.inner.ell, self.inner.nu, self.inner.delta
        )
    }
}

fn design_from_points(points: Vec<Vec<f64>>) -> PyResult<Design> {
    if points.is_empty() {
        return Err(PyValueError::new_err("empty design"));
    }
    let dim = points[0].len();
    if dim == 0 || points.iter().any(|p| p.len() != dim) {
        return Err(PyValueError::new_err(
            "design points must share one nonzero dimension",
        ));
    }
    Design::from_points(dim, points.into_iter().flatten().collect()).map_err(to_py_err)
}

fn dataset_from(points: Vec<Vec<f64>>, y: Vec<f64>) -> PyResult<Dataset> {
    Dataset::new(design_from_points(points)?, y).map_err(to_py_err)
}

/// Modified Bessel function of the second kind K_nu(x).
#[pyfunction]
fn bessel_k(nu: f64, x: f64) -> PyResult<f64> {
    gpcov::bessel::bessel_k(nu, x).map_err(to_py_err)
}

/// Noise-free Matérn covariance at displacement t (max-norm).
#[pyfunction]
fn matern_cov(spec: &PyMaternSpec, t: Vec<f64>) -> f64 {
    kernel::matern_cov(&spec.inner, &t)
}

/// n iid uniform points on [0, n^(1/d)]^d, deterministic in the seed.
#[pyfunction]
fn draw_design(n: usize, dim: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let d = gpcov::sampling::draw_design(n, dim, seed).map_err(to_py_err)?;
    Ok(d.points().map(|p| p.to_vec()).collect())
}

/// Draws one replication's dataset under the truth: (points, y).
#[pyfunction]
fn simulate_dataset(
    truth: &PyMaternSpec,
    n: usize,
    dim: usize,
    master_seed: u64,
    rep_index: u64,
) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
    let truth = TruthSpec::new(truth.inner).map_err(to_py_err)?;
    let plan = SeedPlan::new(master_seed, rep_index);
    let data = experiment::simulate_dataset(&truth, n, dim, &plan).map_err(to_py_err)?;
    Ok((
        data.design.points().map(|p| p.to_vec()).collect(),
        data.y,
    ))
}

/// (1/n) log det R + (1/n) y' R^{-1} y.
#[pyfunction]
fn ml_criterion(spec: &PyMaternSpec, points: Vec<Vec<f64>>, y: Vec<f64>) -> PyResult<f64> {
    estimators::ml_criterion(&spec.inner, &dataset_from(points, y)?).map_err(to_py_err)
}

/// Leave-one-out mean square error through the virtual LOO identity.
#[pyfunction]
fn cv_criterion(spec: &PyMaternSpec, points: Vec<Vec<f64>>, y: Vec<f64>) -> PyResult<f64> {
    estimators::cv_criterion(&spec.inner, &dataset_from(points, y)?).map_err(to_py_err)
}

/// The n leave-one-out predictions.
#[pyfunction]
fn loo_predictions(
    spec: &PyMaternSpec,
    points: Vec<Vec<f64>>,
    y: Vec<f64>,
) -> PyResult<Vec<f64>> {
    estimators::loo_predictions(&spec.inner, &dataset_from(points, y)?).map_err(to_py_err)
}

/// Kriging prediction at one new point.
#[pyfunction]
fn predict(
    spec: &PyMaternSpec,
    points: Vec<Vec<f64>>,
    y: Vec<f64>,
    t: Vec<f64>,
) -> PyResult<f64> {
    criteria::predictor(&spec.inner, &dataset_from(points, y)?, &t).map_err(to_py_err)
}

#[allow(clippy::too_many_arguments)]
#[pyfunction]
#[pyo3(signature = (method, points, y, nu, delta, sigma2_range=None, ell_range=None))]
fn fit<'py>(
    py: Python<'py>,
    method: &str,
    points: Vec<Vec<f64>>,
    y: Vec<f64>,
    nu: f64,
    delta: f64,
    sigma2_range: Option<(f64, f64)>,
    ell_range: Option<(f64, f64)>,
) -> PyResult<Bound<'py, PyDict>> {
    let method: Method = method.parse().map_err(to_py_err)?;
    let data = dataset_from(points, y)?;
    let family = ModelFamily { nu, delta };
    let defaults = ParamBox::default();
    let pbox = ParamBox::new(
        sigma2_range.unwrap_or(defaults.sigma2_range),
        ell_range.unwrap_or(defaults.ell_range),
    )
    .map_err(to_py_err)?;
    let fit = estimators::fit(method, &family, &data, &pbox, &OptimizerConfig::default())
        .map_err(to_py_err)?;
    let out = PyDict::new(py);
    out.set_item("method", method.to_string())?;
    out.set_item("sigma2_hat", fit.sigma2)?;
    out.set_item("ell_hat", fit.ell)?;
    out.set_item("criterion", fit.criterion_value)?;
    out.set_item("evals", fit.evaluations)?;
    out.set_item("converged", fit.converged)?;
    Ok(out)
}

/// Normalized Kullback-Leibler divergence of the model law from the truth
/// on a design.
#[pyfunction]
fn kl_divergence(
    model: &PyMaternSpec,
    truth: &PyMaternSpec,
    points: Vec<Vec<f64>>,
) -> PyResult<f64> {
    let truth = TruthSpec::new(truth.inner).map_err(to_py_err)?;
    criteria::kl_divergence(&model.inner, &truth, &design_from_points(points)?)
        .map_err(to_py_err)
}

/// Integrated square prediction error (conditional mean given the data),
/// averaged over the given nodes.
#[pyfunction]
fn ispe_given_data(
    model: &PyMaternSpec,
    truth: &PyMaternSpec,
    points: Vec<Vec<f64>>,
    y: Vec<f64>,
    nodes: Vec<Vec<f64>>,
) -> PyResult<f64> {
    let truth_spec = TruthSpec::new(truth.inner).map_err(to_py_err)?;
    let data = dataset_from(points, y)?;
    if nodes.is_empty() {
        return Err(PyValueError::new_err("ispe_given_data needs nodes"));
    }
    let dim = nodes[0].len();
    let quad = QuadratureSet::from_points(
        dim,
        nodes.into_iter().flatten().collect(),
        QuadOrigin::IidUniform,
    )
    .map_err(to_py_err)?;
    criteria::ispe_given_data(&model.inner, &truth_spec, &data, &quad).map_err(to_py_err)
}

/// Runs the full replication experiment from a JSON run configuration
/// (same schema as the CLI config file) and returns the report as JSON.
#[pyfunction]
fn run_experiment(config_json: &str) -> PyResult<String> {
    let cfg: gpcov::config::RunConfig =
        serde_json::from_str(config_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let scenario = cfg.scenario().map_err(to_py_err)?;
    let report = experiment::run_experiment(&scenario).map_err(to_py_err)?;
    serde_json::to_string(&report).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn gpcov_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMaternSpec>()?;
    m.add_function(wrap_pyfunction!(bessel_k, m)?)?;
    m.add_function(wrap_pyfunction!(matern_cov, m)?)?;
    m.add_function(wrap_pyfunction!(draw_design, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(ml_criterion, m)?)?;
    m.add_function(wrap_pyfunction!(cv_criterion, m)?)?;
    m.add_function(wrap_pyfunction!(loo_predictions, m)?)?;
    m.add_function(wrap_pyfunction!(predict, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(kl_divergence, m)?)?;
    m.add_function(wrap_pyfunction!(ispe_given_data, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
