use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use tdcedn::evaluation::{self, MatchConfig};
use tdcedn::inference::{self, ProbMap};
use tdcedn::layers::Mode;
use tdcedn::loss::compute_beta;
use tdcedn::network::{load_checkpoint, save_checkpoint, NetworkConfig, NetworkGraph};
use tdcedn::trainer::TrainConfig;
use tdcedn::{Error, Tensor};

type Map = Vec<Vec<f64>>;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_probmap(rows: &Map) -> PyResult<ProbMap> {
    let h = rows.len();
    let w = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != w) {
        return Err(PyValueError::new_err("ragged map rows"));
    }
    ProbMap::new(h, w, rows.concat()).map_err(py_err)
}

fn from_probmap(m: &ProbMap) -> Map {
    m.data.chunks(m.width).map(<[f64]>::to_vec).collect()
}

fn plane_tensor(rows: &Map) -> PyResult<Tensor<f64>> {
    let m = to_probmap(rows)?;
    Tensor::from_values((1, 1, m.height, m.width), m.data).map_err(py_err)
}

/// Contour network in f32. `width_divisor` shrinks every stage's channels.
#[pyclass]
struct Network {
    graph: NetworkGraph<f32>,
}

#[pymethods]
impl Network {
    #[new]
    #[pyo3(signature = (seed=0, width_divisor=1))]
    fn new(seed: u64, width_divisor: usize) -> PyResult<Self> {
        let graph = NetworkGraph::new(NetworkConfig::narrow(width_divisor), seed).map_err(py_err)?;
        Ok(Network { graph })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Network {
            graph: load_checkpoint(&path).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_checkpoint(&self.graph, &path).map_err(py_err)
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.graph.param_count()
    }

    #[getter]
    fn encoder_param_count(&self) -> usize {
        self.graph.encoder_param_count()
    }

    fn layer_names(&self) -> Vec<String> {
        self.graph.layer_names()
    }

    /// Probability map for a `[channel][row][col]` image.
    #[pyo3(signature = (image, border=inference::DEFAULT_BORDER))]
    fn predict(&mut self, image: Vec<Map>, border: usize) -> PyResult<Map> {
        let c = image.len();
        let planes = image.iter().map(to_probmap).collect::<PyResult<Vec<_>>>()?;
        let (h, w) = planes.first().map_or((0, 0), |p| (p.height, p.width));
        if planes.iter().any(|p| (p.height, p.width) != (h, w)) {
            return Err(PyValueError::new_err("channels differ in size"));
        }
        let data: Vec<f32> = planes.iter().flat_map(|p| p.data.iter().map(|&v| v as f32)).collect();
        let x = Tensor::from_values((1, c, h, w), data).map_err(py_err)?;
        self.graph.set_mode(Mode::Infer);
        let m = inference::predict(&self.graph, &x, border).map_err(py_err)?;
        Ok(from_probmap(&m))
    }
}

#[pyfunction]
#[pyo3(signature = (iteration, base_lr=1e-6, max_iter=20000, power=0.8))]
fn poly_lr(iteration: u64, base_lr: f64, max_iter: u64, power: f64) -> PyResult<f64> {
    let cfg = TrainConfig {
        base_lr,
        max_iter,
        lr_power: power,
        ..TrainConfig::default()
    };
    tdcedn::trainer::poly_lr(iteration, &cfg).map_err(py_err)
}

/// Class-balanced cross-entropy of one probability map against a binary map.
#[pyfunction]
#[pyo3(signature = (pred, gt, clamp_eps=1e-12))]
fn balanced_bce(pred: Map, gt: Map, clamp_eps: f64) -> PyResult<f64> {
    let target = compute_beta(&plane_tensor(&gt)?).map_err(py_err)?;
    let v = tdcedn::loss::balanced_bce(&plane_tensor(&pred)?, &target, clamp_eps).map_err(py_err)?;
    Ok(v.value)
}

#[pyfunction]
#[pyo3(signature = (a, b, gamma=inference::DEFAULT_GAMMA))]
fn fuse(a: Map, b: Map, gamma: f64) -> PyResult<Map> {
    let m = inference::fuse(&to_probmap(&a)?, &to_probmap(&b)?, gamma).map_err(py_err)?;
    Ok(from_probmap(&m))
}

#[pyfunction]
fn nms_thin(map: Map) -> PyResult<Map> {
    Ok(from_probmap(&evaluation::nms_thin(&to_probmap(&map)?)))
}

/// ODS, OIS and AP of `maps` against `gts` (one list of annotator maps per
/// image). Maps are scored as given; thin them first with `nms_thin`.
#[pyfunction]
#[pyo3(signature = (maps, gts, tolerance_frac=evaluation::DEFAULT_TOLERANCE_FRAC, thresholds=evaluation::DEFAULT_THRESHOLDS))]
fn evaluate<'py>(
    py: Python<'py>,
    maps: Vec<Map>,
    gts: Vec<Vec<Map>>,
    tolerance_frac: f64,
    thresholds: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = MatchConfig {
        tolerance_frac,
        thresholds,
    };
    let thinned = maps.iter().map(to_probmap).collect::<PyResult<Vec<_>>>()?;
    let binary = gts
        .iter()
        .map(|per_image| {
            per_image
                .iter()
                .map(|g| to_probmap(g).map(|m| m.data.iter().map(|&v| v > 0.5).collect()))
                .collect::<PyResult<Vec<Vec<bool>>>>()
        })
        .collect::<PyResult<Vec<_>>>()?;
    let ids: Vec<String> = (0..maps.len()).map(|i| i.to_string()).collect();
    let records = evaluation::pr_sweep(&thinned, &binary, &ids, &cfg).map_err(py_err)?;
    let s = evaluation::ods_ois_ap(&records).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("ods", s.ods)?;
    d.set_item("ods_threshold", s.ods_threshold)?;
    d.set_item("ois", s.ois)?;
    d.set_item("ap", s.ap)?;
    Ok(d)
}

#[pymodule]
fn tdcedn_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Network>()?;
    m.add_function(wrap_pyfunction!(poly_lr, m)?)?;
    m.add_function(wrap_pyfunction!(balanced_bce, m)?)?;
    m.add_function(wrap_pyfunction!(fuse, m)?)?;
    m.add_function(wrap_pyfunction!(nms_thin, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
