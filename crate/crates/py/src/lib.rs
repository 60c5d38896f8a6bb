//! Python bindings: grids, preprocessing, estimators, surrogates and the
//! pairwise analysis engine. Series cross the boundary as lists of floats.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use extranormal::analysis::{self, MatrixKind, PairMatrix};
use extranormal::estimators::{self, CalibrationCurve};
use extranormal::grid::{self, GridFormat, NodeMeta, TimeSeriesGrid};
use extranormal::pipeline::{self, RunConfig};
use extranormal::preprocess::Pipeline;
use extranormal::surrogates::{self, SurrogateSpec};
use extranormal::synth::SynthSpec;
use extranormal::Error;

create_exception!(extranormal_py, ExtranormalError, PyValueError);
create_exception!(extranormal_py, ConfigError, ExtranormalError);
create_exception!(extranormal_py, DataError, ExtranormalError);
create_exception!(extranormal_py, NumericalError, ExtranormalError);

fn to_py(err: Error) -> PyErr {
    let msg = err.to_string();
    match err.exit_code() {
        2 => ConfigError::new_err(msg),
        3 => DataError::new_err(msg),
        4 => NumericalError::new_err(msg),
        _ => ExtranormalError::new_err(msg),
    }
}

trait IntoPyResult<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPyResult<T> for extranormal::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(name = "Grid", module = "extranormal_py", frozen)]
struct PyGrid {
    inner: TimeSeriesGrid,
}

#[pymethods]
impl PyGrid {
    /// `series[i]` is node i over time; `nodes` is a list of (lat, lon).
    #[new]
    #[pyo3(signature = (series, nodes, time_start = 1, period = 12, label = ""))]
    fn new(
        series: Vec<Vec<f64>>,
        nodes: Vec<(f64, f64)>,
        time_start: usize,
        period: usize,
        label: &str,
    ) -> PyResult<Self> {
        let nodes = nodes
            .into_iter()
            .enumerate()
            .map(|(k, (lat, lon))| NodeMeta::new(lat, lon, k))
            .collect();
        let inner = TimeSeriesGrid::from_series(series, nodes, time_start, period, label).py()?;
        Ok(PyGrid { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (path, format = "flatbin"))]
    fn load(path: PathBuf, format: &str) -> PyResult<Self> {
        let format: GridFormat = format.parse().py()?;
        Ok(PyGrid { inner: grid::load_grid(&path, format).py()? })
    }

    #[pyo3(signature = (path, format = "flatbin"))]
    fn save(&self, path: PathBuf, format: &str) -> PyResult<()> {
        let format: GridFormat = format.parse().py()?;
        grid::save_grid(&self.inner, &path, format).py()
    }

    /// Generates a synthetic grid from a JSON spec, e.g.
    /// `{"kind": "quadratic_coupled", "T": 720, "N": 4, "seed": 1}`.
    #[staticmethod]
    fn synth(spec: &str) -> PyResult<Self> {
        let spec: SynthSpec = serde_json::from_str(spec).map_err(|e| ConfigError::new_err(e.to_string()))?;
        Ok(PyGrid { inner: spec.generate().py()? })
    }

    #[getter(T)]
    fn len(&self) -> usize {
        self.inner.len()
    }

    #[getter(N)]
    fn n_nodes(&self) -> usize {
        self.inner.n_nodes()
    }

    #[getter]
    fn period(&self) -> usize {
        self.inner.period()
    }

    #[getter]
    fn time_start(&self) -> usize {
        self.inner.time_start()
    }

    #[getter]
    fn label(&self) -> String {
        self.inner.label().to_string()
    }

    #[getter]
    fn nodes(&self) -> Vec<(f64, f64)> {
        self.inner.nodes().iter().map(|n| (n.lat, n.lon)).collect()
    }

    fn series(&self, node: usize) -> PyResult<Vec<f64>> {
        if node >= self.inner.n_nodes() {
            return Err(to_py(Error::Bounds(format!("node {node} of {}", self.inner.n_nodes()))));
        }
        Ok(self.inner.series(node).to_vec())
    }

    /// Applies stages by name: anomaly, gaussianize, varnorm, detrend.
    fn preprocess(&self, stages: Vec<String>) -> PyResult<Self> {
        let pipeline = Pipeline::parse(&stages.join(",")).py()?;
        Ok(PyGrid { inner: pipeline.apply(&self.inner).py()? })
    }

    fn drop_poles(&self) -> Self {
        PyGrid { inner: grid::drop_poles(&self.inner) }
    }

    fn concat(&self, other: &PyGrid) -> PyResult<Self> {
        Ok(PyGrid { inner: grid::concat_time(&self.inner, &other.inner).py()? })
    }

    /// One multivariate FT surrogate drawn from the given stream seed.
    fn surrogate(&self, stream_seed: u64) -> PyResult<Self> {
        Ok(PyGrid { inner: surrogates::ft_surrogate(&self.inner, stream_seed).py()? })
    }

    fn phase_std(&self, node: usize) -> PyResult<Vec<f64>> {
        let series = self.series(node)?;
        Ok(extranormal::preprocess::phase_std(&self.inner, &series))
    }

    fn __repr__(&self) -> String {
        format!(
            "Grid(label={:?}, T={}, N={}, period={})",
            self.inner.label(),
            self.inner.len(),
            self.inner.n_nodes(),
            self.inner.period()
        )
    }
}

#[pyclass(name = "Calibration", module = "extranormal_py", frozen)]
struct PyCalibration {
    inner: CalibrationCurve,
}

#[pymethods]
impl PyCalibration {
    #[staticmethod]
    #[pyo3(signature = (length, bins = 8, replicates = 1000, seed = 1, rho_grid = None))]
    fn build(
        py: Python<'_>,
        length: usize,
        bins: usize,
        replicates: usize,
        seed: u64,
        rho_grid: Option<Vec<f64>>,
    ) -> PyResult<Self> {
        let rho = rho_grid.unwrap_or_else(estimators::default_rho_grid);
        let inner = py
            .detach(|| estimators::build_calibration(length, bins, &rho, replicates, seed))
            .py()?;
        Ok(PyCalibration { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyCalibration { inner: CalibrationCurve::from_json(text).py()? })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().py()
    }

    #[getter(T)]
    fn len(&self) -> usize {
        self.inner.len
    }

    #[getter]
    fn bins(&self) -> usize {
        self.inner.q
    }

    #[getter]
    fn knots(&self) -> Vec<(f64, f64)> {
        self.inner.knots.iter().map(|k| (k[0], k[1])).collect()
    }

    /// Maps a raw binned MI value to its bias-corrected value.
    fn apply(&self, raw: f64) -> f64 {
        self.inner.apply(raw)
    }
}

#[pyclass(name = "PairMatrix", module = "extranormal_py", frozen)]
struct PyPairMatrix {
    inner: PairMatrix,
}

#[pymethods]
impl PyPairMatrix {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyPairMatrix { inner: analysis::read_pmat(&path).py()? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        analysis::write_pmat(&self.inner, &path).py()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn kind(&self) -> String {
        format!("{:?}", self.inner.kind())
    }

    /// Condensed upper triangle, row by row.
    fn values(&self) -> Vec<f32> {
        self.inner.stat().to_vec()
    }

    fn get(&self, i: usize, j: usize) -> PyResult<f32> {
        let n = self.inner.n();
        if i == j || i >= n || j >= n {
            return Err(to_py(Error::Bounds(format!("pair ({i}, {j}) in {n} nodes"))));
        }
        Ok(self.inner.get(i, j))
    }

    fn __len__(&self) -> usize {
        self.inner.stat().len()
    }
}

#[pyfunction]
fn gaussian_mi(rho: f64) -> PyResult<f64> {
    estimators::gaussian_mi(rho).py()
}

#[pyfunction]
fn pearson(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    estimators::pearson(&x, &y).py()
}

#[pyfunction]
fn extra_normal(mi_data: f64, mi_linear: f64) -> f64 {
    estimators::extra_normal(mi_data, mi_linear)
}

#[pyfunction]
#[pyo3(signature = (x, bins = 8))]
fn equiquantal_bins(x: Vec<f64>, bins: usize) -> PyResult<Vec<u8>> {
    Ok(estimators::equiquantal_bins(&x, bins).py()?.labels().to_vec())
}

/// Raw (uncorrected) binned MI in nats.
#[pyfunction]
#[pyo3(signature = (x, y, bins = 8))]
fn mutual_information(x: Vec<f64>, y: Vec<f64>, bins: usize) -> PyResult<f64> {
    let bx = estimators::equiquantal_bins(&x, bins).py()?;
    let by = estimators::equiquantal_bins(&y, bins).py()?;
    estimators::mutual_information_binned(&bx, &by).py()
}

#[pyfunction]
fn derive_stream(master_seed: u64, index: u64) -> u64 {
    extranormal::rng::derive_stream(master_seed, index)
}

#[pyfunction]
#[pyo3(signature = (grid, calibration, bins = 8))]
fn pairwise_mi(py: Python<'_>, grid: &PyGrid, calibration: &PyCalibration, bins: usize) -> PyResult<PyPairMatrix> {
    let inner = py.detach(|| analysis::pairwise_mi(&grid.inner, bins, &calibration.inner)).py()?;
    Ok(PyPairMatrix { inner })
}

#[pyfunction]
fn pairwise_correlation(py: Python<'_>, grid: &PyGrid) -> PyResult<PyPairMatrix> {
    let inner = py.detach(|| analysis::pairwise_correlation(&grid.inner)).py()?;
    Ok(PyPairMatrix { inner })
}

/// Surrogate significance test of every pair. Returns
/// `(mi, mi_surr_mean, exceed_count, significant, summary)`.
#[pyfunction]
#[pyo3(signature = (grid, calibration, n_surr = 99, seed = 0, alpha = 0.05, bins = 8))]
#[allow(clippy::type_complexity)]
fn surrogate_test<'py>(
    py: Python<'py>,
    grid: &PyGrid,
    calibration: &PyCalibration,
    n_surr: usize,
    seed: u64,
    alpha: f64,
    bins: usize,
) -> PyResult<(PyPairMatrix, PyPairMatrix, PyPairMatrix, PyPairMatrix, Bound<'py, PyAny>)> {
    let (mi, mean, exceed, significant, summary) = py
        .detach(|| -> extranormal::Result<_> {
            analysis::significance_threshold(alpha, n_surr)?;
            let mi = analysis::pairwise_mi(&grid.inner, bins, &calibration.inner)?;
            let spec = SurrogateSpec::new(seed, n_surr);
            let (mean, exceed) = analysis::surrogate_mi_stats(&grid.inner, &spec, bins, &calibration.inner, &mi)?;
            let (significant, summary) = analysis::significance(&exceed, alpha, n_surr)?;
            Ok((mi, mean, exceed, significant, summary))
        })
        .py()?;
    let summary = json_to_py(py, &serde_json::to_string(&summary).map_err(|e| to_py(e.into()))?)?;
    let wrap = |inner| PyPairMatrix { inner };
    Ok((wrap(mi), wrap(mean), wrap(exceed), wrap(significant), summary))
}

/// Per-node mean of a pair statistic over the other N − 1 nodes.
#[pyfunction]
fn node_average(matrix: &PyPairMatrix, grid: &PyGrid) -> PyResult<Vec<f64>> {
    let field = analysis::node_average(&matrix.inner, grid.inner.nodes()).py()?;
    Ok(field.values().iter().map(|v| v.unwrap_or(f64::NAN)).collect())
}

type OptionalField = Vec<Option<f64>>;

/// `(extra_normal, relative)` node fields from MI and surrogate-mean fields;
/// undefined relative entries are `None`.
#[pyfunction]
fn extra_normal_fields(
    mi: &PyPairMatrix,
    surr_mean: &PyPairMatrix,
    grid: &PyGrid,
) -> PyResult<(OptionalField, OptionalField)> {
    if mi.inner.kind() != MatrixKind::MiCalibrated || surr_mean.inner.kind() != MatrixKind::MiSurrMean {
        return Err(to_py(Error::Consistency("expect calibrated MI and surrogate-mean matrices".into())));
    }
    let a = analysis::node_average(&mi.inner, grid.inner.nodes()).py()?;
    let b = analysis::node_average(&surr_mean.inner, grid.inner.nodes()).py()?;
    let (extra, relative) = analysis::extra_normal_fields(&a, &b).py()?;
    Ok((extra.values().to_vec(), relative.values().to_vec()))
}

/// Runs the full pipeline from a JSON configuration and returns the summary.
#[pyfunction]
fn run<'py>(py: Python<'py>, config: &str) -> PyResult<Bound<'py, PyDict>> {
    let config = RunConfig::from_json(config).py()?;
    let bundle = py.detach(|| pipeline::run(&config)).py()?;
    let summary = serde_json::to_string(&bundle.summary).map_err(|e| to_py(e.into()))?;
    let summary = json_to_py(py, &summary)?.cast_into::<PyDict>()?;
    let files: Vec<String> = bundle.files.iter().map(|p| p.display().to_string()).collect();
    summary.set_item("files", files)?;
    Ok(summary)
}

#[pymodule]
fn extranormal_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("ExtranormalError", py.get_type::<ExtranormalError>())?;
    m.add("ConfigError", py.get_type::<ConfigError>())?;
    m.add("DataError", py.get_type::<DataError>())?;
    m.add("NumericalError", py.get_type::<NumericalError>())?;
    m.add_class::<PyGrid>()?;
    m.add_class::<PyCalibration>()?;
    m.add_class::<PyPairMatrix>()?;
    m.add_function(wrap_pyfunction!(gaussian_mi, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(extra_normal, m)?)?;
    m.add_function(wrap_pyfunction!(equiquantal_bins, m)?)?;
    m.add_function(wrap_pyfunction!(mutual_information, m)?)?;
    m.add_function(wrap_pyfunction!(derive_stream, m)?)?;
    m.add_function(wrap_pyfunction!(pairwise_mi, m)?)?;
    m.add_function(wrap_pyfunction!(pairwise_correlation, m)?)?;
    m.add_function(wrap_pyfunction!(surrogate_test, m)?)?;
    m.add_function(wrap_pyfunction!(node_average, m)?)?;
    m.add_function(wrap_pyfunction!(extra_normal_fields, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
