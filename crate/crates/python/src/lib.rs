//! Python bindings: configurations, simulation, trajectories, closed-form
//! estimates and spectral analysis.

use pyo3::create_exception;
use pyo3::exceptions::{PyArithmeticError, PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;
use std::path::PathBuf;

use levisim::analysis;
use levisim::config::{self, AnalysisOptions, Overrides};
use levisim::estimates::{estimate_frequencies, frequency_scale};
use levisim::integrator::{config_fingerprint, simulate as run_simulation, Trajectory as CoreTrajectory};
use levisim::model::{mbar_to_pa, validate_config, Column, SimulationConfig};
use levisim::spectral::{self, WelchOptions};
use levisim::Error;

create_exception!(pylevisim, LevisimError, PyException);
create_exception!(pylevisim, ConfigError, PyValueError);
create_exception!(pylevisim, DomainError, PyArithmeticError);
create_exception!(pylevisim, FingerprintError, LevisimError);

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Config { .. } => ConfigError::new_err(e.to_string()),
        Error::Domain { .. } => DomainError::new_err(e.to_string()),
        Error::FingerprintMismatch { .. } => FingerprintError::new_err(e.to_string()),
        _ => LevisimError::new_err(e.to_string()),
    }
}

/// Converts a JSON value to plain Python objects.
fn json_to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any(),
            (None, Some(u)) => u.into_pyobject(py)?.into_any(),
            _ => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, json_to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let value = serde_json::to_value(v).map_err(|e| LevisimError::new_err(e.to_string()))?;
    json_to_py(py, &value)
}

/// A simulation configuration.
#[pyclass(name = "Config", module = "pylevisim", skip_from_py_object)]
#[derive(Clone)]
pub struct PyConfig {
    inner: SimulationConfig,
    analysis: AnalysisOptions,
}

#[pymethods]
impl PyConfig {
    /// Loads a TOML or JSON file; environment overrides with the `LEVISIM_`
    /// prefix and the keyword overrides apply on top.
    #[staticmethod]
    #[pyo3(signature = (path, seed=None, pressure_mbar=None, power_watt=None))]
    fn from_file(
        path: PathBuf,
        seed: Option<u64>,
        pressure_mbar: Option<f64>,
        power_watt: Option<f64>,
    ) -> PyResult<Self> {
        let overrides = Overrides {
            seed,
            pressure: pressure_mbar.map(mbar_to_pa),
            power: power_watt,
        };
        let loaded = config::load(&path, &overrides).map_err(to_py_err)?;
        Ok(PyConfig {
            inner: loaded.simulation,
            analysis: loaded.analysis,
        })
    }

    /// Parses TOML text without environment overrides.
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        let table = config::parse_table(text, false).map_err(to_py_err)?;
        let loaded =
            config::resolve(table, std::iter::empty(), &Overrides::default()).map_err(to_py_err)?;
        Ok(PyConfig {
            inner: loaded.simulation,
            analysis: loaded.analysis,
        })
    }

    fn to_toml(&self) -> String {
        config::to_toml(&self.inner)
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    #[getter]
    fn fingerprint(&self) -> String {
        config_fingerprint(&self.inner)
    }

    #[getter]
    fn steps(&self) -> u64 {
        self.inner.steps
    }

    #[setter]
    fn set_steps(&mut self, steps: u64) {
        self.inner.steps = steps;
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt
    }

    #[setter]
    fn set_dt(&mut self, dt: f64) {
        self.inner.dt = dt;
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }

    /// Gas pressure (Pa).
    #[getter]
    fn pressure(&self) -> f64 {
        self.inner.gas.pressure
    }

    #[setter]
    fn set_pressure(&mut self, pressure: f64) {
        self.inner.gas.pressure = pressure;
    }

    /// Laser power (W).
    #[getter]
    fn power(&self) -> f64 {
        self.inner.beam.power
    }

    #[setter]
    fn set_power(&mut self, power: f64) {
        self.inner.beam.power = power;
    }

    /// Violations as `(path, message)` pairs; empty when valid.
    fn validate(&self) -> Vec<(String, String)> {
        validate_config(&self.inner)
            .violations
            .into_iter()
            .map(|v| (v.path, v.message))
            .collect()
    }

    /// Fastest and slowest lines the run must resolve (Hz).
    fn frequency_scale<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &frequency_scale(&self.inner).map_err(to_py_err)?)
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(steps={}, dt={:e}, pressure={:e} Pa, power={:e} W)",
            self.inner.steps, self.inner.dt, self.inner.gas.pressure, self.inner.beam.power
        )
    }
}

/// A recorded trajectory.
#[pyclass(name = "Trajectory", module = "pylevisim")]
pub struct PyTrajectory {
    inner: CoreTrajectory,
}

#[pymethods]
impl PyTrajectory {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyTrajectory {
            inner: CoreTrajectory::load(&path).map_err(to_py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn columns(&self) -> Vec<&'static str> {
        self.inner.header.columns.iter().map(|c| c.name()).collect()
    }

    #[getter]
    fn sample_rate(&self) -> f64 {
        self.inner.sample_rate()
    }

    #[getter]
    fn fingerprint(&self) -> String {
        self.inner.header.fingerprint.clone()
    }

    #[getter]
    fn config(&self) -> PyConfig {
        PyConfig {
            inner: self.inner.header.config.clone(),
            analysis: AnalysisOptions::default(),
        }
    }

    /// One recorded column by name (`x`, `beta`, `pi_alpha`, ...).
    fn column(&self, name: &str) -> PyResult<Vec<f64>> {
        let column = Column::from_name(name)
            .ok_or_else(|| PyValueError::new_err(format!("unknown column `{name}`")))?;
        self.inner
            .column(column)
            .map(<[f64]>::to_vec)
            .ok_or_else(|| PyValueError::new_err(format!("column `{name}` was not recorded")))
    }

    /// Header: events, run averages, unreliable flag and step count.
    fn header<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.header)
    }

    #[getter]
    fn steps_per_second(&self) -> f64 {
        self.inner.timing.steps_per_second
    }
}

/// Integrates a validated configuration. Releases the GIL while running.
#[pyfunction]
fn simulate(py: Python<'_>, config: &PyConfig) -> PyResult<PyTrajectory> {
    let cfg = config.inner.clone();
    let inner = py.detach(move || run_simulation(&cfg)).map_err(to_py_err)?;
    Ok(PyTrajectory { inner })
}

/// Closed-form estimates as a dict (rad/s, rad, kg m^2/s, N m).
#[pyfunction]
fn estimate<'py>(py: Python<'py>, config: &PyConfig) -> PyResult<Bound<'py, PyAny>> {
    let c = &config.inner;
    let e = estimate_frequencies(&c.particle, &c.beam, &c.gas).map_err(to_py_err)?;
    to_py(py, &e)
}

/// Measured modes, estimates and predicted lines of a trajectory. Analysis
/// options come from `config` when given.
#[pyfunction]
#[pyo3(signature = (trajectory, config=None, settle_fraction=None))]
fn analyze<'py>(
    py: Python<'py>,
    trajectory: &PyTrajectory,
    config: Option<&PyConfig>,
    settle_fraction: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut options = config.map(|c| c.analysis.clone()).unwrap_or_default();
    if let Some(f) = settle_fraction {
        options.settle_fraction = f;
    }
    let a = py
        .detach(|| analysis::analyze(&trajectory.inner, &options))
        .map_err(to_py_err)?;
    let dict = PyDict::new(py);
    dict.set_item("fingerprint", &a.fingerprint)?;
    dict.set_item("modes", to_py(py, &a.modes)?)?;
    dict.set_item("estimates", to_py(py, &a.estimates)?)?;
    dict.set_item("estimates_at_equator", a.estimates_at_equator)?;
    let lines = PyDict::new(py);
    for (line, f) in &a.lines.lines {
        lines.set_item(line.name(), f)?;
    }
    dict.set_item("lines", lines)?;
    Ok(dict.into_any())
}

/// Welch PSD: returns `(frequencies, psd)`.
#[pyfunction]
#[pyo3(signature = (signal, sample_rate, segment_length=0))]
fn welch_psd(signal: Vec<f64>, sample_rate: f64, segment_length: usize) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let options = if segment_length > 0 {
        WelchOptions::with_segment(segment_length)
    } else {
        WelchOptions::for_length(signal.len())
    };
    let s = spectral::welch_psd(&signal, sample_rate, &options).map_err(to_py_err)?;
    Ok((s.frequencies, s.psd))
}

/// Power-law fit `f = A c^k` of `(control, frequency)` pairs.
#[pyfunction]
fn fit_scaling_exponent<'py>(py: Python<'py>, points: Vec<(f64, f64)>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &spectral::fit_scaling_exponent(&points).map_err(to_py_err)?)
}

#[pymodule]
pub fn pylevisim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add_class::<PyConfig>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(welch_psd, m)?)?;
    m.add_function(wrap_pyfunction!(fit_scaling_exponent, m)?)?;
    m.add("LevisimError", py.get_type::<LevisimError>())?;
    m.add("ConfigError", py.get_type::<ConfigError>())?;
    m.add("DomainError", py.get_type::<DomainError>())?;
    m.add("FingerprintError", py.get_type::<FingerprintError>())?;
    Ok(())
}
