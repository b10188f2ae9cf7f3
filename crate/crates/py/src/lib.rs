//! Python bindings: load a scenario, check it, synthesize a patchy feedback and run it.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

use patchy::pipeline::{self, FeedbackFile};
use patchy::scenario::{self, Built};
use patchy::simulator::{integrate_closed_loop, Goal};
use patchy::synthesis::{alpha_star, eval_feedback};
use patchy::Error;

fn err(e: Error) -> PyErr {
    match e {
        Error::Scenario(_) | Error::Json(_) | Error::Io(_) | Error::InvalidSet(_) | Error::RenderDimension => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Serialize through JSON into Python objects.
fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A validated scenario with its built system, constraint set and target.
#[pyclass(name = "Scenario", frozen)]
struct PyScenario {
    sc: scenario::Scenario,
    b: Built,
}

impl PyScenario {
    fn wrap(sc: scenario::Scenario) -> PyResult<Self> {
        let b = sc.build().map_err(err)?;
        Ok(Self { sc, b })
    }
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Self::wrap(scenario::Scenario::load(&path).map_err(err)?)
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Self::wrap(scenario::Scenario::from_toml(text).map_err(err)?)
    }

    #[staticmethod]
    fn square() -> PyResult<Self> {
        Self::wrap(scenario::square())
    }

    #[staticmethod]
    fn disk() -> PyResult<Self> {
        Self::wrap(scenario::disk())
    }

    #[getter]
    fn name(&self) -> String {
        self.sc.name.clone()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.b.system.dim
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.sc.delta
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.sc.gamma()
    }

    fn to_toml(&self) -> String {
        self.sc.to_toml()
    }

    fn initial_grid(&self) -> Vec<Vec<f64>> {
        self.sc.initial_grid(&self.b)
    }

    /// Hypothesis and regularity report as a dict.
    fn check<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let out = py.detach(|| pipeline::check(&self.sc, &self.b));
        to_py(py, &out)
    }

    fn synthesize(&self, py: Python<'_>) -> PyResult<PyFeedback> {
        let (file, _) = py.detach(|| pipeline::synthesize(&self.sc, &self.b)).map_err(err)?;
        Ok(PyFeedback { file })
    }

    /// Closed-loop runs from the initial grid; returns the summary dict.
    #[pyo3(signature = (feedback, dt=None))]
    fn simulate<'py>(&self, py: Python<'py>, feedback: &PyFeedback, dt: Option<f64>) -> PyResult<Bound<'py, PyAny>> {
        feedback.file.matches(&self.b).map_err(err)?;
        let dt = dt.unwrap_or(self.sc.simulation.dt);
        let (_, summary) = py.detach(|| pipeline::simulate(&self.sc, &self.b, &feedback.file, dt)).map_err(err)?;
        to_py(py, &summary)
    }

    /// One closed-loop trajectory from `x0` until it reaches the target ball, leaves the domain or times out.
    #[pyo3(signature = (feedback, x0, dt=None))]
    fn trajectory<'py>(&self, py: Python<'py>, feedback: &PyFeedback, x0: Vec<f64>, dt: Option<f64>) -> PyResult<Bound<'py, PyDict>> {
        if x0.len() != self.b.system.dim {
            return Err(PyValueError::new_err(format!("x0 must have length {}", self.b.system.dim)));
        }
        let goal = Goal { target: self.b.target.clone(), delta: self.sc.delta };
        let dt = dt.unwrap_or(self.sc.simulation.dt);
        let run = integrate_closed_loop(&self.b.system, &feedback.file.feedback, &x0, dt, self.sc.simulation.t_max, Some(&goal))
            .map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("times", &run.times)?;
        d.set_item("states", &run.states)?;
        d.set_item("patches", &run.patches)?;
        d.set_item("status", format!("{:?}", run.status))?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("Scenario(name={:?}, dim={}, delta={})", self.sc.name, self.b.system.dim, self.sc.delta)
    }
}

/// A synthesized patchy feedback together with its assembly parameters.
#[pyclass(name = "Feedback", frozen)]
struct PyFeedback {
    file: FeedbackFile,
}

#[pymethods]
impl PyFeedback {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { file: FeedbackFile::from_json(text).map_err(err)? })
    }

    fn to_json(&self) -> PyResult<String> {
        self.file.to_json().map_err(err)
    }

    fn report<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.file.report)
    }

    #[getter]
    fn r_tilde(&self) -> f64 {
        self.file.params.r_tilde
    }

    /// Index of the top patch containing `x`, or `None` outside the domain.
    fn alpha_star(&self, x: Vec<f64>) -> Option<usize> {
        alpha_star(&self.file.feedback, &x)
    }

    /// Control value at `x`.
    fn __call__(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        eval_feedback(&self.file.feedback, &x).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __len__(&self) -> usize {
        self.file.feedback.len()
    }
}

#[pymodule]
fn patchy_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PyFeedback>()?;
    Ok(())
}
