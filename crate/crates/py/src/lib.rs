//! Python bindings: load or build a model, analyse it, simulate it and
//! design gains. Results come back as plain dicts of floats and lists.

use std::path::Path;

use ncs_core::config::RunConfig;
use ncs_core::design::{self as gains, DesignResult};
use ncs_core::sim::{self, EnsembleStats, SimConfig};
use ncs_core::{lift, moments};
use ncs_core::{
    Matrix, MomentReport, NCSModel, QuadratureSpec, RenewalDistribution, StabilityReport, Vector,
};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyString};

create_exception!(
    ncs,
    NcsError,
    PyException,
    "Raised for invalid models, instability and numerical failures."
);

fn err(e: ncs_core::NcsError) -> PyErr {
    NcsError::new_err(e.to_string())
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn list(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(NcsError::new_err("ragged matrix"));
    }
    Ok(Matrix::from_row_iterator(r, c, rows.into_iter().flatten()))
}

/// JSON text, or anything `json.dumps` accepts.
fn json_text(obj: &Bound<'_, PyAny>) -> PyResult<String> {
    if let Ok(s) = obj.cast::<PyString>() {
        return Ok(s.to_str()?.to_owned());
    }
    obj.py()
        .import("json")?
        .call_method1("dumps", (obj,))?
        .extract()
}

fn parse<T: serde::de::DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    serde_json::from_str(&json_text(obj)?).map_err(|e| NcsError::new_err(e.to_string()))
}

fn stability_dict<'py>(py: Python<'py>, s: &StabilityReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("first_moment_stable", s.first_moment_stable)?;
    d.set_item("first_spectral_radius", s.first_spectral_radius)?;
    d.set_item("second_moment_stable", s.second_moment_stable)?;
    d.set_item("second_spectral_radius", s.second_spectral_radius)?;
    d.set_item("expectation_exists", s.expectation_exists)?;
    d.set_item("marginal", s.marginal)?;
    Ok(d)
}

fn moments_dict<'py>(py: Python<'py>, r: &MomentReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("mean_x", list(&r.mean_x))?;
    d.set_item("mean_u", list(&r.mean_u))?;
    d.set_item("second_raw", rows(&r.second_raw))?;
    d.set_item("covariance", rows(&r.covariance))?;
    d.set_item("variance_channel", rows(&r.variance_channel))?;
    d.set_item("variance_disturbance", rows(&r.variance_disturbance))?;
    d.set_item("stability", stability_dict(py, &r.stability)?)?;
    Ok(d)
}

fn ensemble_dict<'py>(py: Python<'py>, s: &EnsembleStats) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("mean_x", list(&s.mean_x))?;
    d.set_item("var_x", rows(&s.var_x))?;
    d.set_item("ci95_mean", list(&s.ci95_mean))?;
    d.set_item("ci95_var", rows(&s.ci95_var))?;
    d.set_item("effective_samples", s.effective_samples)?;
    d.set_item("divergent", s.divergent)?;
    d.set_item("resets", s.resets)?;
    d.set_item("mean_interval", s.mean_interval)?;
    d.set_item("interval_se", s.interval_se)?;
    Ok(d)
}

fn design_dict<'py>(py: Python<'py>, r: &DesignResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("k", rows(&r.k))?;
    d.set_item("achieved_mean", list(&r.achieved_mean))?;
    d.set_item(
        "achieved_covariance",
        r.achieved_covariance.as_ref().map(rows),
    )?;
    d.set_item("stability", stability_dict(py, &r.stability)?)?;
    d.set_item("feasible", r.feasible)?;
    d.set_item("iterations", r.iterations)?;
    d.set_item("objective_value", r.objective_value)?;
    d.set_item("diagnostics", r.diagnostics.clone())?;
    Ok(d)
}

/// A validated model together with the quadrature settings used to analyse it.
#[pyclass(name = "Model", module = "ncs", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyModel {
    model: NCSModel,
    quadrature: QuadratureSpec,
    simulate: Option<SimConfig>,
}

impl PyModel {
    fn from_run(cfg: RunConfig) -> PyResult<Self> {
        Ok(PyModel {
            model: cfg.model().map_err(err)?,
            quadrature: cfg.quadrature,
            simulate: cfg.simulate,
        })
    }
}

#[pymethods]
impl PyModel {
    /// Reads a run configuration file.
    #[staticmethod]
    fn from_config(path: &str) -> PyResult<Self> {
        Self::from_run(RunConfig::from_path(Path::new(path)).map_err(err)?)
    }

    /// Parses a run configuration from JSON text or a dict.
    #[staticmethod]
    fn from_json(config: &Bound<'_, PyAny>) -> PyResult<Self> {
        Self::from_run(RunConfig::from_json(&json_text(config)?).map_err(err)?)
    }

    /// Scalar loop; `intervals` is a law such as `{"kind": "exponential", "rate": 1.0}`.
    #[staticmethod]
    fn scalar(
        a_hat: f64,
        a: f64,
        b: f64,
        c: f64,
        k: f64,
        sigma: f64,
        intervals: &Bound<'_, PyAny>,
    ) -> PyResult<Self> {
        let law: RenewalDistribution = parse(intervals)?;
        Ok(PyModel {
            model: ncs_core::scalar_model(a_hat, a, b, c, k, sigma, law).map_err(err)?,
            quadrature: QuadratureSpec::default(),
            simulate: None,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.model.n()
    }

    #[getter]
    fn m(&self) -> usize {
        self.model.m()
    }

    #[getter]
    fn gain(&self) -> Vec<Vec<f64>> {
        rows(&self.model.reset.k)
    }

    fn with_gain(&self, k: Vec<Vec<f64>>) -> PyResult<Self> {
        let model = self.model.with_gain(matrix(k)?);
        model.ensure_valid().map_err(err)?;
        Ok(PyModel {
            model,
            ..self.clone()
        })
    }

    fn with_intervals(&self, intervals: &Bound<'_, PyAny>) -> PyResult<Self> {
        let model = self.model.with_intervals(parse(intervals)?);
        model.ensure_valid().map_err(err)?;
        Ok(PyModel {
            model,
            ..self.clone()
        })
    }

    fn stability<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let s = py
            .detach(|| {
                let first = lift::lift_first(&self.model)?;
                let second = lift::lift_second(&self.model)?;
                moments::stability(&first, &second, &self.model.intervals, &self.quadrature)
            })
            .map_err(err)?;
        stability_dict(py, &s)
    }

    /// Steady-state moments; raises `NcsError` when the loop is not second-moment stable.
    fn analyze<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let r = py
            .detach(|| ncs_core::analyze(&self.model, &self.quadrature))
            .map_err(err)?;
        moments_dict(py, &r)
    }

    /// Monte Carlo estimate. Keyword arguments override the configuration's
    /// `simulate` block, which in turn overrides the defaults.
    #[pyo3(signature = (*, trajectories=None, seed=None, dt=None, horizon=None, threads=None))]
    fn simulate<'py>(
        &self,
        py: Python<'py>,
        trajectories: Option<usize>,
        seed: Option<u64>,
        dt: Option<f64>,
        horizon: Option<f64>,
        threads: Option<usize>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let mut cfg = self.simulate.clone().unwrap_or_default();
        cfg.trajectories = trajectories.unwrap_or(cfg.trajectories);
        cfg.seed = seed.unwrap_or(cfg.seed);
        cfg.dt = dt.unwrap_or(cfg.dt);
        cfg.horizon = horizon.or(cfg.horizon);
        cfg.threads = threads.or(cfg.threads);
        let s = py
            .detach(|| sim::estimate(&self.model, &cfg))
            .map_err(err)?;
        ensemble_dict(py, &s)
    }

    /// The model as run-configuration JSON.
    fn to_json(&self) -> String {
        let mut cfg = RunConfig::from_model(&self.model);
        cfg.quadrature = self.quadrature;
        cfg.to_json()
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(n={}, m={}, intervals={})",
            self.model.n(),
            self.model.m(),
            self.model.intervals.name()
        )
    }
}

/// Solves the design block of a run configuration file.
#[pyfunction]
fn design<'py>(py: Python<'py>, path: &str) -> PyResult<Bound<'py, PyDict>> {
    let cfg = RunConfig::from_path(Path::new(path)).map_err(err)?;
    let problem = cfg.design_problem().map_err(err)?;
    let r = py
        .detach(|| gains::solve(&problem, &cfg.quadrature))
        .map_err(err)?;
    design_dict(py, &r)
}

/// Scalar gain `k` that places the steady mean at `mean`.
#[pyfunction]
fn scalar_gain_for_mean(a_hat: f64, a: f64, b: f64, mean: f64) -> PyResult<f64> {
    gains::scalar_gain_for_mean(a_hat, a, b, mean).map_err(err)
}

#[pymodule]
fn ncs(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(design, m)?)?;
    m.add_function(wrap_pyfunction!(scalar_gain_for_mean, m)?)?;
    m.add("NcsError", m.py().get_type::<NcsError>())?;
    Ok(())
}
