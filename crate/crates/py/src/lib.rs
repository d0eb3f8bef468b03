use std::path::Path;

use pyo3::create_exception;
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use snls_core::config::{Overrides, RunConfig};
use snls_core::error::Error;
use snls_core::experiment::{self, ExitStatus, ExperimentOutcome, CSV_HEADER};
use snls_core::grid::GridSpec;
use snls_core::params::SystemParams;

create_exception!(snls, ConfigError, PyValueError);
create_exception!(snls, NumericalError, PyArithmeticError);

fn to_py(e: Error) -> PyErr {
    match ExitStatus::for_error(&e) {
        ExitStatus::NumericalFailure => NumericalError::new_err(e.to_string()),
        _ => ConfigError::new_err(e.to_string()),
    }
}

/// Parsed run configuration.
#[pyclass(name = "Config", frozen)]
struct PyConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyConfig {
    #[getter]
    fn experiment(&self) -> &'static str {
        self.inner.experiment.name()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn n_paths(&self) -> usize {
        self.inner.n_paths
    }

    fn hash(&self) -> String {
        self.inner.hash()
    }

    /// Every constraint violation; empty when the config can run.
    fn violations(&self) -> Vec<String> {
        self.inner.violations()
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("config serializes")
    }

    fn __repr__(&self) -> String {
        format!("Config(experiment='{}', seed={})", self.experiment(), self.inner.seed)
    }
}

/// Result of a preset run: verdict plus the serialized outputs.
#[pyclass(name = "Outcome", frozen)]
struct PyOutcome {
    inner: ExperimentOutcome,
}

#[pymethods]
impl PyOutcome {
    #[getter]
    fn passed(&self) -> bool {
        self.inner.verdict.pass
    }

    #[getter]
    fn status(&self) -> &'static str {
        self.inner.verdict.status
    }

    #[getter]
    fn exit_code(&self) -> i32 {
        self.inner.exit_status().code()
    }

    #[getter]
    fn seeds(&self) -> Vec<u64> {
        self.inner.seeds.clone()
    }

    fn verdict_json(&self) -> String {
        serde_json::to_string(&self.inner.verdict).expect("verdict serializes")
    }

    fn csv(&self) -> PyResult<String> {
        let bytes = experiment::timeseries_csv(&self.inner.timeseries).map_err(to_py)?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    fn ndjson(&self) -> String {
        String::from_utf8(experiment::ndjson(&self.inner.path_rows)).expect("ndjson is utf-8")
    }

    /// Columns of the time series keyed by CSV header; missing residuals are `None`.
    fn timeseries<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let rows = &self.inner.timeseries;
        let col = |f: &dyn Fn(&experiment::TimeRow) -> Option<f64>| rows.iter().map(f).collect::<Vec<_>>();
        let cols: [Vec<Option<f64>>; 12] = [
            col(&|r| Some(r.sample.t)),
            col(&|r| Some(r.sample.q)),
            col(&|r| Some(r.sample.e)),
            col(&|r| Some(r.sample.k)),
            col(&|r| Some(r.sample.p)),
            col(&|r| Some(r.sample.l2_u)),
            col(&|r| Some(r.sample.l2_v)),
            col(&|r| Some(r.sample.h1_u)),
            col(&|r| Some(r.sample.h1_v)),
            col(&|r| r.mass_residual),
            col(&|r| r.energy_residual),
            col(&|r| r.equivalence_residual),
        ];
        let d = PyDict::new(py);
        for (name, values) in CSV_HEADER.iter().zip(cols) {
            d.set_item(name, values)?;
        }
        Ok(d)
    }

    /// Writes CSV, NDJSON, verdict and manifest into `directory`; returns the
    /// manifest as JSON text.
    fn write(&self, directory: &str) -> PyResult<String> {
        let m = experiment::write_outputs(&self.inner, Path::new(directory)).map_err(to_py)?;
        Ok(m.to_string())
    }
}

#[pyfunction]
#[pyo3(signature = (text, seed=None, n_paths=None, dt=None, output_dir=None))]
fn parse_config(
    text: &str,
    seed: Option<u64>,
    n_paths: Option<usize>,
    dt: Option<f64>,
    output_dir: Option<String>,
) -> PyResult<PyConfig> {
    let overrides = Overrides {
        seed,
        output_dir,
        n_paths,
        dt,
    };
    let inner = RunConfig::from_toml_str(text, &overrides).map_err(to_py)?;
    Ok(PyConfig { inner })
}

#[pyfunction]
fn load_config(path: &str) -> PyResult<PyConfig> {
    let inner = RunConfig::from_file(Path::new(path), &Overrides::default()).map_err(to_py)?;
    Ok(PyConfig { inner })
}

/// Runs the config's preset. Releases the GIL while running.
#[pyfunction]
#[pyo3(signature = (config, workers=None))]
fn run(py: Python<'_>, config: &PyConfig, workers: Option<usize>) -> PyResult<PyOutcome> {
    let cfg = config.inner.clone();
    let inner = py.detach(move || experiment::run_experiment(&cfg, workers)).map_err(to_py)?;
    Ok(PyOutcome { inner })
}

#[pyfunction]
#[pyo3(signature = (dim, n, box_length, ell, big_l, factor=snls_core::rescaled::DEFAULT_STABILITY_FACTOR))]
fn stability_bound(dim: usize, n: usize, box_length: f64, ell: f64, big_l: f64, factor: f64) -> PyResult<f64> {
    let spec = GridSpec::new(dim, n, box_length).map_err(to_py)?;
    let params = SystemParams::compatible(ell, big_l, 1.0.into(), 1.0);
    Ok(snls_core::rescaled::stability_bound(&spec, &params, factor))
}

#[pyfunction]
fn strichartz_admissible(d: usize, p: f64, q: f64) -> bool {
    snls_core::functionals::strichartz_admissible(d, p, q).is_ok()
}

#[pyfunction]
fn derive_seed(base: u64, index: u64) -> u64 {
    snls_core::ensemble::derive_seed(base, index)
}

#[pymodule]
pub fn snls(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyOutcome>()?;
    m.add_function(wrap_pyfunction!(parse_config, m)?)?;
    m.add_function(wrap_pyfunction!(load_config, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(stability_bound, m)?)?;
    m.add_function(wrap_pyfunction!(strichartz_admissible, m)?)?;
    m.add_function(wrap_pyfunction!(derive_seed, m)?)?;
    m.add("ConfigError", m.py().get_type::<ConfigError>())?;
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    m.add("CSV_HEADER", CSV_HEADER.to_vec())?;
    m.add("ENERGY_DESCRIPTION", snls_core::functionals::ENERGY_DESCRIPTION)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
