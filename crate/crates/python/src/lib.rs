//! Python bindings. Boxes are `(x1, y1, x2, y2)` tuples; run summaries and
//! configs cross the boundary as plain dicts.

use ovdmine::simulator::{run_training_simulation, SceneObject, WorldConfig};
use ovdmine::{
    Candidate, CategorySpace, Error, MiningConfig, Origin, RegionEmbedding, ReliabilityIndicator, TrainingBox,
};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

type Box4 = (f64, f64, f64, f64);

fn err(e: Error) -> PyErr {
    match e {
        Error::Io(_) | Error::Json(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn bbox(b: Box4) -> PyResult<ovdmine::BBox> {
    ovdmine::BBox::new(b.0, b.1, b.2, b.3).map_err(err)
}

fn to_py<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: serde::de::DeserializeOwned>(py: Python<'_>, obj: Option<&Bound<'_, PyDict>>) -> PyResult<Option<T>> {
    let Some(obj) = obj else { return Ok(None) };
    let text: String = py.import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map(Some).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pyfunction]
fn iou(a: Box4, b: Box4) -> PyResult<f64> {
    Ok(ovdmine::iou(&bbox(a)?, &bbox(b)?))
}

/// Indices of the boxes kept by greedy NMS, best first.
#[pyfunction]
fn nms(boxes: Vec<Box4>, scores: Vec<f64>, iou_threshold: f64) -> PyResult<Vec<usize>> {
    if boxes.len() != scores.len() {
        return Err(PyValueError::new_err("boxes and scores differ in length"));
    }
    let input = boxes.into_iter().zip(scores).map(|(b, s)| Ok((bbox(b)?, s))).collect::<PyResult<Vec<_>>>()?;
    ovdmine::nms(&input, iou_threshold).map_err(err)
}

/// Category embeddings (base then novel) plus a background embedding.
#[pyclass(name = "CategorySpace", frozen)]
struct PyCategorySpace {
    inner: CategorySpace,
}

#[pymethods]
impl PyCategorySpace {
    #[new]
    #[pyo3(signature = (base, novel, embeddings, background, logit_scale=None))]
    fn new(
        base: Vec<String>,
        novel: Vec<String>,
        embeddings: Vec<Vec<f64>>,
        background: Vec<f64>,
        logit_scale: Option<f64>,
    ) -> PyResult<Self> {
        let mut inner = CategorySpace::new(base, novel, embeddings, background).map_err(err)?;
        if let Some(s) = logit_scale {
            inner = inner.with_logit_scale(s).map_err(err)?;
        }
        Ok(Self { inner })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner.base_names().iter().chain(self.inner.novel_names()).cloned().collect()
    }

    /// Posterior over the categories followed by background.
    fn classify(&self, region: Vec<f64>) -> PyResult<Vec<f64>> {
        let r = RegionEmbedding::new(region).map_err(err)?;
        Ok(ovdmine::classify(&r, &self.inner).map_err(err)?.probs().to_vec())
    }

    fn novelty_score(&self, region: Vec<f64>) -> PyResult<f64> {
        let r = RegionEmbedding::new(region).map_err(err)?;
        ovdmine::novelty_score(&r, &self.inner).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "CategorySpace(base={}, novel={}, dim={})",
            self.inner.num_base(),
            self.inner.num_novel(),
            self.inner.dim()
        )
    }
}

#[pyfunction]
fn max_norm(z: Vec<f64>) -> PyResult<Vec<f64>> {
    ovdmine::max_norm(&z).map_err(err)
}

#[pyfunction]
fn fuse(s_clip: f64, s_det: f64, lambda_: f64) -> PyResult<f64> {
    ovdmine::fuse(s_clip, s_det, lambda_).map_err(err)
}

#[pyfunction]
fn adaptive_weight(s: f64, r: f64, lambda_prime: f64) -> PyResult<f64> {
    ovdmine::adaptive_weight(s, r, lambda_prime).map_err(err)
}

/// `origins` holds "BASE", "NOVEL" or "BACKGROUND" per box; `weights`
/// only matter for NOVEL boxes.
#[pyfunction]
fn aggregate_loss(origins: Vec<String>, weights: Vec<f64>, losses: Vec<f64>, gamma: f64) -> PyResult<f64> {
    if origins.len() != weights.len() {
        return Err(PyValueError::new_err("origins and weights differ in length"));
    }
    let unit = ovdmine::BBox::new(0.0, 0.0, 1.0, 1.0).map_err(err)?;
    let boxes = origins
        .iter()
        .zip(&weights)
        .map(|(o, &w)| {
            let origin = match o.to_ascii_uppercase().as_str() {
                "BASE" => Origin::Base,
                "NOVEL" => Origin::Novel,
                "BACKGROUND" => Origin::Background,
                _ => return Err(PyValueError::new_err(format!("unknown origin {o:?}"))),
            };
            Ok(TrainingBox {
                bbox: unit,
                origin,
                target_index: None,
                background_score: 0.0,
                pseudo_confidence: None,
                weight: w,
            })
        })
        .collect::<PyResult<Vec<_>>>()?;
    ovdmine::aggregate_loss(&boxes, &losses, gamma).map_err(err)
}

/// Verdicts ("TP", "MIS_CLASS", "NOISE") for `(box, class, score)` labels
/// against `(box, class)` novel objects.
#[pyfunction]
fn judge(labels: Vec<(Box4, String, f64)>, novel_gt: Vec<(Box4, String)>) -> PyResult<Vec<&'static str>> {
    let cands = labels
        .into_iter()
        .map(|(b, c, s)| {
            Ok(Candidate {
                bbox: bbox(b)?,
                clip_score: s,
                clip_class: c.clone(),
                scores: [(c, s)].into(),
                novelty: None,
                fused: None,
            })
        })
        .collect::<PyResult<Vec<_>>>()?;
    let gt = novel_gt
        .into_iter()
        .map(|(b, c)| Ok(SceneObject { bbox: bbox(b)?, category: c }))
        .collect::<PyResult<Vec<_>>>()?;
    Ok(ovdmine::judge(&cands, &gt)
        .into_iter()
        .map(|v| match v.verdict {
            ovdmine::Verdict::Tp => "TP",
            ovdmine::Verdict::MisClass => "MIS_CLASS",
            ovdmine::Verdict::Noise => "NOISE",
        })
        .collect())
}

#[pyfunction]
fn default_mining_config(py: Python<'_>) -> PyResult<Bound<'_, PyAny>> {
    to_py(py, &MiningConfig::default())
}

#[pyfunction]
fn default_world_config(py: Python<'_>) -> PyResult<Bound<'_, PyAny>> {
    to_py(py, &WorldConfig::default())
}

/// Runs the simulator and returns `(summary, metrics)`. `mining` and
/// `world` are partial config dicts; missing keys take their defaults.
#[pyfunction]
#[pyo3(signature = (seed, iterations=3000, log_stride=100, indicator="ONE_MINUS_BG", mining=None, world=None))]
fn simulate<'py>(
    py: Python<'py>,
    seed: u64,
    iterations: u64,
    log_stride: u64,
    indicator: &str,
    mining: Option<&Bound<'py, PyDict>>,
    world: Option<&Bound<'py, PyDict>>,
) -> PyResult<(Bound<'py, PyAny>, Bound<'py, PyAny>)> {
    let mining: MiningConfig = from_py(py, mining)?.unwrap_or_default();
    let world: WorldConfig = from_py(py, world)?.unwrap_or_default();
    let indicator: ReliabilityIndicator = indicator.parse().map_err(err)?;
    let run =
        py.detach(|| run_training_simulation(&world, &mining, indicator, iterations, log_stride, seed)).map_err(err)?;
    Ok((to_py(py, &run.summary)?, to_py(py, &run.metrics)?))
}

#[pymodule]
fn ovdmine_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyCategorySpace>()?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(nms, m)?)?;
    m.add_function(wrap_pyfunction!(max_norm, m)?)?;
    m.add_function(wrap_pyfunction!(fuse, m)?)?;
    m.add_function(wrap_pyfunction!(adaptive_weight, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate_loss, m)?)?;
    m.add_function(wrap_pyfunction!(judge, m)?)?;
    m.add_function(wrap_pyfunction!(default_mining_config, m)?)?;
    m.add_function(wrap_pyfunction!(default_world_config, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
