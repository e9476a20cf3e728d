//! Python bindings for `modeconnect`.
//!
//! Weight vectors, datasets, and curves are opaque handles; reports come back
//! as plain dicts and lists. Long computations release the GIL.

use ndarray::Array2;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde::Serialize;
use serde_json::Value;

use modeconnect::curve_train::{train_curve, CurveTrainConfig};
use modeconnect::curves::{arclength, CurveKind, CurveSpec};
use modeconnect::data_io::{self, SyntheticKind};
use modeconnect::eval::{self, EnsembleMember, PlaneGridConfig};
use modeconnect::fge::{self, CyclicLrSchedule, FgeRunConfig};
use modeconnect::nn::{self, MlpConfig, WeightVector};
use modeconnect::train::{train_model, LrSchedule, TrainConfig};
use modeconnect::{rng, trivial, Error};

fn py_err(e: Error) -> PyErr {
    let msg = format!("[{}] {e}", e.code());
    match e {
        Error::Io(_) => PyOSError::new_err(msg),
        e if e.is_validation() => PyValueError::new_err(msg),
        _ => PyRuntimeError::new_err(msg),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for modeconnect::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn json_to_py<'py>(py: Python<'py>, value: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match value {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match (n.as_u64(), n.as_i64()) {
            (Some(u), _) => u.into_pyobject(py)?.into_any(),
            (None, Some(i)) => i.into_pyobject(py)?.into_any(),
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
            for (k, v) in map {
                dict.set_item(k, json_to_py(py, v)?)?;
            }
            dict.into_any()
        }
    })
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let value = serde_json::to_value(value).map_err(|e| py_err(e.into()))?;
    json_to_py(py, &value)
}

fn parse_kind(kind: &str) -> PyResult<CurveKind> {
    match kind {
        "segment" => Ok(CurveKind::Segment),
        "polychain" => Ok(CurveKind::Polychain),
        "bezier" => Ok(CurveKind::Bezier),
        other => Err(PyValueError::new_err(format!(
            "unknown curve kind '{other}'"
        ))),
    }
}

/// Fully connected ReLU network architecture.
#[pyclass(name = "Net", module = "pymodeconnect", frozen, skip_from_py_object)]
struct PyNet(MlpConfig);

#[pymethods]
impl PyNet {
    #[new]
    #[pyo3(signature = (layer_sizes, batch_norm = false, l2_coeff = 0.0))]
    fn new(layer_sizes: Vec<usize>, batch_norm: bool, l2_coeff: f64) -> PyResult<Self> {
        MlpConfig::new(layer_sizes, batch_norm, l2_coeff)
            .py()
            .map(PyNet)
    }

    #[getter]
    fn layer_sizes(&self) -> Vec<usize> {
        self.0.layer_sizes.clone()
    }

    #[getter]
    fn batch_norm(&self) -> bool {
        self.0.batch_norm
    }

    #[getter]
    fn l2_coeff(&self) -> f64 {
        self.0.l2_coeff
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.0.layout().param_count()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        format!(
            "Net(layer_sizes={:?}, batch_norm={}, l2_coeff={})",
            self.0.layer_sizes,
            if self.0.batch_norm { "True" } else { "False" },
            self.0.l2_coeff
        )
    }
}

/// Flat parameter vector of a network.
#[pyclass(
    name = "Weights",
    module = "pymodeconnect",
    frozen,
    skip_from_py_object
)]
struct PyWeights(WeightVector);

#[pymethods]
impl PyWeights {
    #[staticmethod]
    fn from_list(net: &PyNet, values: Vec<f64>) -> PyResult<Self> {
        WeightVector::from_values(net.0.layout(), values)
            .py()
            .map(PyWeights)
    }

    fn to_list(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }

    fn distance(&self, other: &Self) -> PyResult<f64> {
        self.0.check_layout(&other.0).py()?;
        Ok(self.0.distance(&other.0))
    }

    fn norm(&self) -> f64 {
        self.0.norm()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0.values() == other.0.values()
    }

    fn __repr__(&self) -> String {
        format!("Weights(len={}, norm={:.6})", self.0.len(), self.0.norm())
    }
}

#[pyclass(
    name = "Dataset",
    module = "pymodeconnect",
    frozen,
    skip_from_py_object
)]
struct PyDataset(data_io::Dataset);

#[pymethods]
impl PyDataset {
    /// `kind` is `"two_spirals"` or `"gaussian_blobs"`.
    #[staticmethod]
    fn synthetic(kind: &str, n: usize, noise: f64, seed: u64) -> PyResult<Self> {
        let kind: SyntheticKind = kind.parse().py()?;
        data_io::gen_synthetic(kind, n, noise, seed)
            .py()
            .map(PyDataset)
    }

    #[staticmethod]
    fn from_rows(features: Vec<Vec<f64>>, labels: Vec<usize>, classes: usize) -> PyResult<Self> {
        let cols = features.first().map_or(0, Vec::len);
        if features.iter().any(|r| r.len() != cols) {
            return Err(PyValueError::new_err("feature rows differ in length"));
        }
        let flat: Vec<f64> = features.into_iter().flatten().collect();
        let array = Array2::from_shape_vec((flat.len() / cols.max(1), cols), flat)
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        data_io::Dataset::new(array, labels, classes, data_io::Split::Train)
            .py()
            .map(PyDataset)
    }

    /// Unnormalized rows of a headed numeric CSV.
    #[staticmethod]
    #[pyo3(signature = (path, label_column, class_count = None))]
    fn load_csv(path: &str, label_column: &str, class_count: Option<usize>) -> PyResult<Self> {
        data_io::load_csv(path, label_column, class_count, data_io::Split::Train)
            .py()
            .map(PyDataset)
    }

    fn features(&self) -> Vec<Vec<f64>> {
        self.0
            .features()
            .rows()
            .into_iter()
            .map(|r| r.to_vec())
            .collect()
    }

    fn labels(&self) -> Vec<usize> {
        self.0.labels().to_vec()
    }

    #[getter]
    fn feature_dim(&self) -> usize {
        self.0.feature_dim()
    }

    #[getter]
    fn class_count(&self) -> usize {
        self.0.class_count()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

/// Parametric curve `φ(t)` between two weight vectors.
#[pyclass(name = "Curve", module = "pymodeconnect", frozen, skip_from_py_object)]
struct PyCurve(CurveSpec);

#[pymethods]
impl PyCurve {
    #[staticmethod]
    fn segment(start: &PyWeights, end: &PyWeights) -> PyResult<Self> {
        CurveSpec::segment(start.0.clone(), end.0.clone())
            .py()
            .map(PyCurve)
    }

    /// Bends placed evenly on the segment, ready for training.
    #[staticmethod]
    #[pyo3(signature = (kind, start, end, n_bends = 1))]
    fn initial(kind: &str, start: &PyWeights, end: &PyWeights, n_bends: usize) -> PyResult<Self> {
        CurveSpec::with_initial_bends(
            parse_kind(kind)?,
            start.0.clone(),
            end.0.clone(),
            n_bends,
            None,
        )
        .py()
        .map(PyCurve)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        match self.0.kind() {
            CurveKind::Segment => "segment",
            CurveKind::Polychain => "polychain",
            CurveKind::Bezier => "bezier",
        }
    }

    #[getter]
    fn n_bends(&self) -> usize {
        self.0.n_bends()
    }

    fn control_points(&self) -> Vec<PyWeights> {
        self.0.control_points().cloned().map(PyWeights).collect()
    }

    fn point_at(&self, t: f64) -> PyResult<PyWeights> {
        self.0.point_at(t).py().map(PyWeights)
    }

    fn speed_at(&self, t: f64) -> PyResult<f64> {
        self.0.speed_at(t).py()
    }

    /// `(length, length / chord)` on a polyline of `grid` points.
    #[pyo3(signature = (grid = 121))]
    fn length(&self, grid: usize) -> PyResult<(f64, f64)> {
        let a = arclength(&self.0, grid).py()?;
        Ok((a.length, a.ratio))
    }

    fn __repr__(&self) -> String {
        format!(
            "Curve(kind='{}', n_bends={})",
            self.kind(),
            self.0.n_bends()
        )
    }
}

/// Triangular cyclic learning rate used by FGE.
#[pyclass(
    name = "CyclicSchedule",
    module = "pymodeconnect",
    frozen,
    skip_from_py_object
)]
struct PyCyclicSchedule(CyclicLrSchedule);

#[pymethods]
impl PyCyclicSchedule {
    #[new]
    fn new(alpha1: f64, alpha2: f64, cycle: usize) -> PyResult<Self> {
        CyclicLrSchedule::new(alpha1, alpha2, cycle)
            .py()
            .map(PyCyclicSchedule)
    }

    fn lr_at(&self, iteration: usize) -> PyResult<f64> {
        if iteration == 0 {
            return Err(PyValueError::new_err("iterations are 1-based"));
        }
        Ok(self.0.lr_at(iteration))
    }

    fn is_collection(&self, iteration: usize) -> bool {
        self.0.is_collection(iteration)
    }

    fn collection_points(&self, n_iterations: usize) -> Vec<usize> {
        self.0.collection_points(n_iterations)
    }
}

#[pyfunction]
fn derive_seed(root: u64, stream: u64) -> u64 {
    rng::derive_seed(root, stream)
}

#[pyfunction]
fn init_params(net: &PyNet, seed: u64) -> PyWeights {
    PyWeights(nn::init_params(&net.0, seed))
}

/// SGD with momentum; the rate drops by 10 at half and three quarters of the run.
#[pyfunction]
#[pyo3(signature = (net, data, epochs, batch_size, lr, momentum = 0.9, seed = 0, init = None))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    net: &PyNet,
    data: &PyDataset,
    epochs: usize,
    batch_size: usize,
    lr: f64,
    momentum: f64,
    seed: u64,
    init: Option<&PyWeights>,
) -> PyResult<PyWeights> {
    let init = init.map_or_else(|| nn::init_params(&net.0, seed), |w| w.0.clone());
    let cfg = TrainConfig {
        epochs,
        batch_size,
        schedule: LrSchedule::standard(lr),
        momentum,
        seed,
    };
    py.detach(|| train_model(&init, &net.0, &data.0, &cfg))
        .py()
        .map(|(w, _)| PyWeights(w))
}

/// `{"error", "nll"}` on `data`; BN statistics come from `train` (default `data`).
#[pyfunction]
#[pyo3(signature = (weights, net, data, train = None))]
fn evaluate<'py>(
    py: Python<'py>,
    weights: &PyWeights,
    net: &PyNet,
    data: &PyDataset,
    train: Option<&PyDataset>,
) -> PyResult<Bound<'py, PyDict>> {
    let stats_set = train.unwrap_or(data);
    let stats = nn::stats_if_needed(&weights.0, &net.0, stats_set.0.features().view()).py()?;
    let p = nn::predict_eval(&weights.0, &net.0, data.0.batch(), stats.as_ref()).py()?;
    let d = PyDict::new(py);
    d.set_item("error", p.error_rate)?;
    d.set_item("nll", p.mean_nll)?;
    Ok(d)
}

/// Trains the bends of a curve from `start` to `end`.
#[pyfunction]
#[pyo3(signature = (
    net, data, start, end, kind = "bezier", n_bends = 1, iterations = 1000,
    batch_size = 64, lr = 0.05, momentum = 0.9, seed = 0
))]
#[allow(clippy::too_many_arguments)]
fn connect(
    py: Python<'_>,
    net: &PyNet,
    data: &PyDataset,
    start: &PyWeights,
    end: &PyWeights,
    kind: &str,
    n_bends: usize,
    iterations: usize,
    batch_size: usize,
    lr: f64,
    momentum: f64,
    seed: u64,
) -> PyResult<PyCurve> {
    let init = CurveSpec::with_initial_bends(
        parse_kind(kind)?,
        start.0.clone(),
        end.0.clone(),
        n_bends,
        None,
    )
    .py()?;
    let cfg = CurveTrainConfig {
        iterations,
        batch_size,
        learning_rate: LrSchedule::standard(lr),
        momentum,
        weight_decay_on_bends: false,
        seed,
    };
    py.detach(|| train_curve(&init, &net.0, &data.0, &cfg))
        .py()
        .map(|(c, _)| PyCurve(c))
}

/// Loss and error on an equally spaced `t` grid with min/max/int/mean aggregates.
#[pyfunction]
#[pyo3(signature = (curve, net, train, test, grid = 121))]
fn curve_report<'py>(
    py: Python<'py>,
    curve: &PyCurve,
    net: &PyNet,
    train: &PyDataset,
    test: &PyDataset,
    grid: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let report = py
        .detach(|| eval::curve_report(&curve.0, &net.0, &train.0, &test.0, grid))
        .py()?;
    to_py(py, &report)
}

/// Training loss over the plane through three weight vectors.
#[pyfunction]
#[pyo3(signature = (w1, w2, w3, net, data, resolution = 21, margin = 0.2, with_error = true))]
#[allow(clippy::too_many_arguments)]
fn plane_grid<'py>(
    py: Python<'py>,
    w1: &PyWeights,
    w2: &PyWeights,
    w3: &PyWeights,
    net: &PyNet,
    data: &PyDataset,
    resolution: usize,
    margin: f64,
    with_error: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = PlaneGridConfig {
        resolution,
        margin,
        with_error,
    };
    let grid = py
        .detach(|| eval::plane_grid(&w1.0, &w2.0, &w3.0, &net.0, &data.0, &cfg))
        .py()?;
    to_py(py, &grid)
}

/// Cyclic-rate SGD from `start`; returns `[(iteration, weights), ...]`.
#[pyfunction]
#[pyo3(signature = (net, data, start, n_iterations, schedule, batch_size = 64, momentum = 0.9, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn fge_run(
    py: Python<'_>,
    net: &PyNet,
    data: &PyDataset,
    start: &PyWeights,
    n_iterations: usize,
    schedule: &PyCyclicSchedule,
    batch_size: usize,
    momentum: f64,
    seed: u64,
) -> PyResult<Vec<(usize, PyWeights)>> {
    let cfg = FgeRunConfig {
        n_iterations,
        schedule: schedule.0,
        batch_size,
        momentum,
        seed,
    };
    let run = py
        .detach(|| fge::fge_run(&start.0, &net.0, &data.0, &cfg))
        .py()?;
    Ok(run
        .checkpoints
        .into_iter()
        .map(|c| (c.iteration, PyWeights(c.weights)))
        .collect())
}

fn members(
    weights: &[PyRef<'_, PyWeights>],
    net: &MlpConfig,
    train: &data_io::Dataset,
) -> PyResult<Vec<EnsembleMember>> {
    weights
        .iter()
        .map(|w| EnsembleMember::prepare(w.0.clone(), net, train))
        .collect::<modeconnect::Result<_>>()
        .py()
}

/// Probability-averaging ensemble: `{"error", "nll", "disagreement"}` on `test`.
#[pyfunction]
#[pyo3(signature = (weights, net, train, test, temperature = 1.0))]
fn ensemble<'py>(
    py: Python<'py>,
    weights: Vec<PyRef<'py, PyWeights>>,
    net: &PyNet,
    train: &PyDataset,
    test: &PyDataset,
    temperature: f64,
) -> PyResult<Bound<'py, PyDict>> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(PyValueError::new_err("temperature must be positive"));
    }
    let members = members(&weights, &net.0, &train.0)?;
    let p = eval::ensemble_predict_scaled(&members, &net.0, &test.0, temperature).py()?;
    let disagreement =
        eval::mean_pairwise_disagreement(&members, &net.0, test.0.features().view()).py()?;
    let d = PyDict::new(py);
    d.set_item("error", p.error_rate)?;
    d.set_item("nll", p.mean_nll)?;
    d.set_item("disagreement", disagreement)?;
    Ok(d)
}

/// Shared temperature minimizing the ensemble NLL on `heldout`.
#[pyfunction]
fn fit_temperature<'py>(
    py: Python<'py>,
    weights: Vec<PyRef<'py, PyWeights>>,
    net: &PyNet,
    train: &PyDataset,
    heldout: &PyDataset,
) -> PyResult<Bound<'py, PyAny>> {
    let members = members(&weights, &net.0, &train.0)?;
    let logits = members
        .iter()
        .map(|m| m.logits(&net.0, heldout.0.features().view()))
        .collect::<modeconnect::Result<Vec<_>>>()
        .py()?;
    let fit = eval::fit_temperature(&logits, heldout.0.labels()).py()?;
    to_py(py, &fit)
}

/// Scales weights by `t` and biases by `t^(layer+1)` and reports loss and error.
#[pyfunction]
fn trivial_check<'py>(
    py: Python<'py>,
    weights: &PyWeights,
    net: &PyNet,
    data: &PyDataset,
    t_grid: Vec<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let report = trivial::trivial_check(&weights.0, &net.0, &data.0, &t_grid).py()?;
    to_py(py, &report)
}

#[pyfunction]
#[pyo3(signature = (weights, net, path, seed = None))]
fn save_checkpoint(
    weights: &PyWeights,
    net: &PyNet,
    path: &str,
    seed: Option<u64>,
) -> PyResult<()> {
    data_io::save_checkpoint(&weights.0, &net.0, seed, path).py()
}

#[pyfunction]
fn load_checkpoint(path: &str) -> PyResult<(PyWeights, PyNet)> {
    let (w, net, _) = data_io::load_checkpoint(path).py()?;
    Ok((PyWeights(w), PyNet(net)))
}

#[pyfunction]
#[pyo3(signature = (curve, net, path, seed = None))]
fn save_curve(curve: &PyCurve, net: &PyNet, path: &str, seed: Option<u64>) -> PyResult<()> {
    data_io::save_curve(&curve.0, &net.0, seed, path).py()
}

#[pyfunction]
fn load_curve(path: &str) -> PyResult<(PyCurve, PyNet)> {
    let (c, net) = data_io::load_curve(path).py()?;
    Ok((PyCurve(c), PyNet(net)))
}

#[pymodule]
pub fn pymodeconnect(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNet>()?;
    m.add_class::<PyWeights>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyCurve>()?;
    m.add_class::<PyCyclicSchedule>()?;
    m.add_function(wrap_pyfunction!(derive_seed, m)?)?;
    m.add_function(wrap_pyfunction!(init_params, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(connect, m)?)?;
    m.add_function(wrap_pyfunction!(curve_report, m)?)?;
    m.add_function(wrap_pyfunction!(plane_grid, m)?)?;
    m.add_function(wrap_pyfunction!(fge_run, m)?)?;
    m.add_function(wrap_pyfunction!(ensemble, m)?)?;
    m.add_function(wrap_pyfunction!(fit_temperature, m)?)?;
    m.add_function(wrap_pyfunction!(trivial_check, m)?)?;
    m.add_function(wrap_pyfunction!(save_checkpoint, m)?)?;
    m.add_function(wrap_pyfunction!(load_checkpoint, m)?)?;
    m.add_function(wrap_pyfunction!(save_curve, m)?)?;
    m.add_function(wrap_pyfunction!(load_curve, m)?)?;
    Ok(())
}
