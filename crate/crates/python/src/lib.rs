//! Python module `synpop_py`: configuration, the validate/generate/diagnose
//! pipeline, and the numerical building blocks.
//!
//! Structured results (validation reports, run summaries, diagnostics) come
//! back as plain dicts.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use synpop::assignment::{gravity_probabilities, GravityParams};
use synpop::diagnostics::chi_square_gof;
use synpop::geometry::{sample_uniform_polygon, GeoPoint, PolygonRegion};
use synpop::ingest::{EnvironmentalComponent, MarginalTable};
use synpop::ipf::IpfConfig;
use synpop::pipeline::{self, GenerationConfig, Inputs, PipelineError};
use synpop::tables::{Axis, ContingencyTable};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn pipeline_error(e: PipelineError) -> PyErr {
    match e {
        PipelineError::Io { .. } => PyIOError::new_err(e.to_string()),
        e => value_error(e),
    }
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(value_error)?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A generation config. Paths are resolved relative to the file it was
/// loaded from.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: GenerationConfig,
}

#[pymethods]
impl PyConfig {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        GenerationConfig::load(&path).map(|inner| Self { inner }).map_err(pipeline_error)
    }

    /// Parses JSON text; relative paths resolve against `base_dir`.
    #[staticmethod]
    #[pyo3(signature = (text, base_dir = None))]
    fn from_json(text: &str, base_dir: Option<PathBuf>) -> PyResult<Self> {
        let mut inner: GenerationConfig = serde_json::from_str(text).map_err(value_error)?;
        if let Some(base) = base_dir {
            inner.resolve_paths(&base);
        }
        Ok(Self { inner })
    }

    fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.inner).expect("config serializes")
    }

    /// Configuration problems, empty when the config is consistent.
    fn check(&self) -> Vec<String> {
        self.inner.check()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }

    #[getter]
    fn jobs(&self) -> usize {
        self.inner.jobs
    }

    #[setter]
    fn set_jobs(&mut self, jobs: usize) {
        self.inner.jobs = jobs;
    }

    #[getter]
    fn output_dir(&self) -> PathBuf {
        self.inner.output_dir.clone()
    }

    #[setter]
    fn set_output_dir(&mut self, dir: PathBuf) {
        self.inner.output_dir = dir;
    }

    #[getter]
    fn method(&self) -> String {
        self.inner.method.to_string()
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(method={}, seed={}, jobs={}, output_dir={:?})",
            self.inner.method,
            self.inner.seed,
            self.inner.jobs,
            self.inner.output_dir
        )
    }
}

/// Rule-by-rule input validation report.
#[pyfunction]
fn validate<'py>(py: Python<'py>, config: &PyConfig) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config.inner.clone();
    let report = py.detach(move || pipeline::validate_inputs(&cfg));
    to_py(py, &report)
}

/// Generates every region and returns the run summary.
#[pyfunction]
fn generate<'py>(py: Python<'py>, config: &PyConfig) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config.inner.clone();
    let summary = py.detach(move || pipeline::generate_ecosystem(&cfg)).map_err(pipeline_error)?;
    to_py(py, &summary)
}

/// Diagnoses the outputs in the config's output directory; with
/// `report=True` also writes the markdown summary and maps.
#[pyfunction]
#[pyo3(signature = (config, report = false))]
fn diagnose<'py>(py: Python<'py>, config: &PyConfig, report: bool) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config.inner.clone();
    let result = py.detach(move || -> Result<_, PipelineError> {
        let inputs = Inputs::load(&cfg)?;
        let (rep, obs) = pipeline::diagnose(&inputs, &cfg.output_dir)?;
        if report {
            pipeline::write_report(&rep, &obs, &cfg.output_dir)?;
        }
        Ok(rep)
    });
    to_py(py, &result.map_err(pipeline_error)?)
}

/// Fits a seed table of the given shape (row-major cells) to one marginal
/// per dimension. Returns the fitted proportions, sweep count and whether
/// the tolerance was met.
#[pyfunction]
#[pyo3(signature = (seed, shape, targets, tolerance = 1e-6, max_iterations = 100))]
fn ipf_fit(
    seed: Vec<f64>,
    shape: Vec<usize>,
    targets: Vec<Vec<f64>>,
    tolerance: f64,
    max_iterations: usize,
) -> PyResult<(Vec<f64>, usize, bool)> {
    let axes: Vec<Axis> = shape
        .iter()
        .enumerate()
        .map(|(j, &n)| Axis {
            variable: format!("x{j}"),
            categories: (0..n).map(|k| k.to_string()).collect(),
        })
        .collect();
    let tables: Vec<MarginalTable> = axes
        .iter()
        .zip(targets)
        .map(|(a, totals)| MarginalTable {
            region_id: String::new(),
            variable: a.variable.clone(),
            categories: a.categories.clone(),
            totals,
        })
        .collect();
    let seed = ContingencyTable::new(axes, seed).map_err(value_error)?;
    let cfg = IpfConfig {
        tolerance,
        max_iterations,
        ..Default::default()
    };
    let fit = synpop::ipf::ipf_fit(&seed, &tables, &cfg).map_err(value_error)?;
    Ok((fit.table.cells().to_vec(), fit.iterations, fit.converged))
}

/// Minimum-norm nonnegative weights summing to 1 whose weighted mean of
/// `values` equals `moment`.
#[pyfunction]
fn qp_solve(values: Vec<f64>, moment: f64) -> PyResult<Vec<f64>> {
    synpop::sampling::qp_solve(&values, moment).map_err(value_error)
}

/// Probability of choosing each `(lon, lat, capacity)` component from
/// `(lon, lat)` under the default gravity parameters.
#[pyfunction]
fn gravity(at: (f64, f64), components: Vec<(f64, f64, u64)>) -> PyResult<Vec<f64>> {
    let point = |(lon, lat): (f64, f64)| GeoPoint::new(lon, lat).map_err(value_error);
    let at = point(at)?;
    let comps = components
        .into_iter()
        .enumerate()
        .map(|(i, (lon, lat, capacity))| {
            Ok(EnvironmentalComponent {
                id: i.to_string(),
                kind: String::new(),
                location: point((lon, lat))?,
                capacity,
            })
        })
        .collect::<PyResult<Vec<_>>>()?;
    let refs: Vec<&EnvironmentalComponent> = comps.iter().collect();
    Ok(gravity_probabilities(at, &refs, &GravityParams::default()))
}

/// `n` uniform points inside a polygon with optional holes.
#[pyfunction]
#[pyo3(signature = (exterior, n, seed, holes = Vec::new()))]
fn sample_polygon(
    exterior: Vec<(f64, f64)>,
    n: usize,
    seed: u64,
    holes: Vec<Vec<(f64, f64)>>,
) -> PyResult<Vec<(f64, f64)>> {
    let ring = |r: Vec<(f64, f64)>| r.into_iter().map(|(lon, lat)| GeoPoint { lon, lat }).collect::<Vec<_>>();
    let poly = PolygonRegion::new(ring(exterior), holes.into_iter().map(ring).collect()).map_err(value_error)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = sample_uniform_polygon(&poly, n, &mut rng).map_err(value_error)?;
    Ok(pts.into_iter().map(|p| (p.lon, p.lat)).collect())
}

/// χ² goodness of fit of observed counts against expected proportions,
/// pooling sparse categories first.
#[pyfunction]
fn chi_square<'py>(py: Python<'py>, observed: Vec<f64>, expected: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    let g = chi_square_gof(&observed, &expected).map_err(value_error)?;
    let d = PyDict::new(py);
    d.set_item("statistic", g.statistic)?;
    d.set_item("df", g.df)?;
    d.set_item("p_value", g.p_value)?;
    d.set_item("groups", g.groups)?;
    Ok(d)
}

#[pymodule]
fn synpop_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyConfig>()?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(diagnose, m)?)?;
    m.add_function(wrap_pyfunction!(ipf_fit, m)?)?;
    m.add_function(wrap_pyfunction!(qp_solve, m)?)?;
    m.add_function(wrap_pyfunction!(gravity, m)?)?;
    m.add_function(wrap_pyfunction!(sample_polygon, m)?)?;
    m.add_function(wrap_pyfunction!(chi_square, m)?)?;
    Ok(())
}
