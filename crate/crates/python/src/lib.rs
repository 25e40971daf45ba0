//! Python bindings: configuration, synthetic data, training, scoring and the
//! summarization operators.

use std::path::PathBuf;

use ndarray::{Array1, Array2};
use pyo3::exceptions::{PyFileNotFoundError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use shotsum::data::{self, LoadOptions, SyntheticSpec, VideoRecord};
use shotsum::eval::FscoreMode;
use shotsum::model::{count_params as count, Model as CoreModel};
use shotsum::nn::{checkpoint, loss, FocalParams, ParamSet};
use shotsum::summarize::{kts_fixed, kts_segment, knapsack_select, summarize_record};
use shotsum::train::{predict, summary_fscore, train_model};
use shotsum::{Error, RunConfig};

fn py_err(e: Error) -> PyErr {
    match e.root() {
        Error::NotFound(_) => PyFileNotFoundError::new_err(e.to_string()),
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => PyFileNotFoundError::new_err(e.to_string()),
        Error::Config(_) | Error::InvalidArgument(_) | Error::DimMismatch { .. } | Error::SequenceTooShort { .. } | Error::Format(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn matrix<T: Clone>(rows: Vec<Vec<T>>, what: &str) -> PyResult<Array2<T>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err(format!("{what}: rows have different lengths")));
    }
    let n = rows.len();
    Array2::from_shape_vec((n, cols), rows.into_iter().flatten().collect()).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn rows<T: Copy>(m: &Array2<T>) -> Vec<Vec<T>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Run configuration: `key = value` text with every key defaulted.
#[pyclass(name = "Config", module = "shotsum")]
struct PyConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (text = ""))]
    fn new(text: &str) -> PyResult<Self> {
        let inner = RunConfig::from_text(text).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        if !path.exists() {
            return Err(PyFileNotFoundError::new_err(path.display().to_string()));
        }
        Ok(Self {
            inner: RunConfig::from_file(&path).map_err(py_err)?,
        })
    }

    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        self.inner.set(key, value).map_err(py_err)
    }

    fn get(&self, key: &str) -> PyResult<String> {
        self.inner
            .entries()
            .into_iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| v)
            .ok_or_else(|| PyValueError::new_err(format!("unknown key `{key}`")))
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(py_err)
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn fingerprint(&self) -> String {
        self.inner.fingerprint()
    }

    fn __repr__(&self) -> String {
        format!("Config(fingerprint={})", &self.inner.fingerprint()[..12])
    }
}

/// One video: features, labels and annotator summaries.
#[pyclass(name = "Record", module = "shotsum", from_py_object)]
#[derive(Clone)]
struct PyRecord {
    inner: VideoRecord,
}

#[pymethods]
impl PyRecord {
    #[getter]
    fn video_id(&self) -> String {
        self.inner.video_id.clone()
    }

    #[getter]
    fn n_frames(&self) -> usize {
        self.inner.n_frames
    }

    #[getter]
    fn picks(&self) -> Vec<usize> {
        self.inner.picks.clone()
    }

    #[getter]
    fn labels(&self) -> Vec<u8> {
        self.inner.labels.to_vec()
    }

    #[getter]
    fn frame_features(&self) -> Vec<Vec<f32>> {
        rows(&self.inner.frame_feats)
    }

    #[getter]
    fn audio_features(&self) -> Vec<Vec<f32>> {
        rows(&self.inner.audio_feats)
    }

    #[getter]
    fn caption_embeddings(&self) -> Vec<Vec<f32>> {
        rows(&self.inner.caption_embeds)
    }

    #[getter]
    fn user_summaries(&self) -> Vec<Vec<u8>> {
        rows(&self.inner.user_summaries)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Record({}, T={}, n_frames={})", self.inner.video_id, self.inner.len(), self.inner.n_frames)
    }
}

/// Trained or freshly initialized network bound to its configuration.
#[pyclass(name = "Model", module = "shotsum")]
struct PyModel {
    config: RunConfig,
    model: CoreModel,
    params: ParamSet,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    #[pyo3(signature = (config, seed = 0))]
    fn init(config: &PyConfig, seed: u64) -> PyResult<Self> {
        let (model, params) = CoreModel::init(&config.inner.model, seed).map_err(py_err)?;
        Ok(Self {
            config: config.inner.clone(),
            model,
            params,
        })
    }

    #[staticmethod]
    fn load(config: &PyConfig, path: PathBuf) -> PyResult<Self> {
        let (model, mut params) = CoreModel::zeros(&config.inner.model).map_err(py_err)?;
        checkpoint::load_into(&path, &mut params).map_err(py_err)?;
        Ok(Self {
            config: config.inner.clone(),
            model,
            params,
        })
    }

    /// Trains on `records`; returns the model and the per-epoch mean losses.
    #[staticmethod]
    fn train(py: Python<'_>, config: &PyConfig, records: Vec<PyRecord>) -> PyResult<(Self, Vec<f64>)> {
        let cfg = config.inner.clone();
        let recs: Vec<VideoRecord> = records.into_iter().map(|r| r.inner).collect();
        let (params, history) = py
            .detach(|| train_model(&recs, &cfg.model, &cfg.train))
            .map_err(py_err)?;
        let model = CoreModel::bind(&cfg.model, &params).map_err(py_err)?;
        Ok((
            Self {
                config: cfg,
                model,
                params,
            },
            history.losses(),
        ))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        checkpoint::save(&path, &self.params).map_err(py_err)
    }

    /// Per-frame keyframe probabilities.
    fn predict(&self, record: &PyRecord) -> PyResult<Vec<f64>> {
        Ok(predict(&self.model, self.params.values(), &record.inner).map_err(py_err)?.to_vec())
    }

    /// Summary of one record: selected segments, mask and segment scores.
    fn summarize<'py>(&self, py: Python<'py>, record: &PyRecord) -> PyResult<Bound<'py, PyDict>> {
        let scores = self.predict(record)?;
        let (summary, seg_scores) = summarize_record(&record.inner, &scores, &self.config.train.summary).map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("video_id", &record.inner.video_id)?;
        d.set_item("segments", summary.segments.iter().map(|s| (s[0], s[1])).collect::<Vec<_>>())?;
        d.set_item("segment_scores", seg_scores)?;
        d.set_item("selected", &summary.selected)?;
        d.set_item("mask", &summary.mask)?;
        Ok(d)
    }

    /// Summary F-score against the record's annotators.
    #[pyo3(signature = (record, mode = "avg"))]
    fn fscore(&self, record: &PyRecord, mode: &str) -> PyResult<f64> {
        let mode: FscoreMode = mode.parse().map_err(py_err)?;
        let scores = self.predict(record)?;
        summary_fscore(&record.inner, &scores, &self.config.train.summary, mode).map_err(py_err)
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.params.scalar_count()
    }

    fn parameter_names(&self) -> Vec<String> {
        self.params.ids().map(|id| self.params.name(id).to_string()).collect()
    }
}

/// Deterministic synthetic video with planted events.
#[pyfunction]
#[pyo3(signature = (seed, frames, feat_dim, audio_dim, caption_dim, captions = 2, users = 3))]
fn synthetic_record(
    seed: u64,
    frames: usize,
    feat_dim: usize,
    audio_dim: usize,
    caption_dim: usize,
    captions: usize,
    users: usize,
) -> PyResult<PyRecord> {
    if frames < 2 || feat_dim == 0 || audio_dim == 0 || caption_dim == 0 || captions == 0 || users == 0 {
        return Err(PyValueError::new_err("synthetic dimensions must be positive and frames at least 2"));
    }
    let spec = SyntheticSpec::new(frames, feat_dim, audio_dim, captions, users).with_caption_dim(caption_dim);
    Ok(PyRecord {
        inner: data::make_synthetic_record(seed, &spec),
    })
}

#[pyfunction]
#[pyo3(signature = (path, strict = false, audio_dim = 128, caption_dim = 512))]
fn load_records(path: PathBuf, strict: bool, audio_dim: usize, caption_dim: usize) -> PyResult<Vec<PyRecord>> {
    let opts = LoadOptions {
        strict,
        audio_dim,
        caption_dim,
    };
    Ok(data::load_all(&path, &opts)
        .map_err(py_err)?
        .into_iter()
        .map(|inner| PyRecord { inner })
        .collect())
}

#[pyfunction]
fn write_records(path: PathBuf, records: Vec<PyRecord>) -> PyResult<()> {
    let recs: Vec<VideoRecord> = records.into_iter().map(|r| r.inner).collect();
    data::write_records(&path, &recs).map_err(py_err)
}

/// Parameter count per group plus `total`.
#[pyfunction]
fn count_params<'py>(py: Python<'py>, config: &PyConfig) -> PyResult<Bound<'py, PyDict>> {
    let c = count(&config.inner.model).map_err(py_err)?;
    let d = PyDict::new(py);
    for (g, n) in &c.groups {
        d.set_item(g, n)?;
    }
    d.set_item("total", c.total)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (pred, users, mode = "avg"))]
fn fscore(pred: Vec<u8>, users: Vec<Vec<u8>>, mode: &str) -> PyResult<f64> {
    let mode: FscoreMode = mode.parse().map_err(py_err)?;
    let u = matrix(users, "users")?;
    shotsum::eval::fscore(&pred, u.view(), mode).map_err(py_err)
}

/// Optimal 0/1 selection: `(indices, value)`.
#[pyfunction]
fn knapsack(values: Vec<f64>, weights: Vec<usize>, capacity: usize) -> PyResult<(Vec<usize>, f64)> {
    knapsack_select(&values, &weights, capacity).map_err(py_err)
}

/// Kernel temporal segmentation.
///
/// With `change_points` given, returns the optimal boundaries for exactly that
/// many change points; otherwise the count is chosen by the penalized cost.
#[pyfunction]
#[pyo3(signature = (features, change_points = None, max_change_points = None, penalty = 1.0))]
fn kts(
    features: Vec<Vec<f64>>,
    change_points: Option<usize>,
    max_change_points: Option<usize>,
    penalty: f64,
) -> PyResult<(Vec<usize>, f64)> {
    let x = matrix(features, "features")?;
    match change_points {
        Some(m) => kts_fixed(x.view(), m).map_err(py_err),
        None => {
            let t = x.nrows();
            let opts = shotsum::summarize::KtsOptions {
                max_change_points,
                penalty,
            };
            let r = kts_segment(x.view(), opts.resolve_max(t), penalty).map_err(py_err)?;
            Ok((r.change_points, r.cost))
        }
    }
}

#[pyfunction]
#[pyo3(signature = (p, y, alpha = 0.25, gamma = 2.0))]
fn focal_loss(p: Vec<f64>, y: Vec<u8>, alpha: f64, gamma: f64) -> PyResult<f64> {
    loss::focal_loss(Array1::from(p).view(), Array1::from(y).view(), FocalParams { alpha, gamma }).map_err(py_err)
}

/// Influenced output frames for every source frame, from forward perturbation.
#[pyfunction]
#[pyo3(signature = (config, frames, sources, seed = 0))]
fn trace(config: &PyConfig, frames: usize, sources: Vec<usize>, seed: u64) -> PyResult<Vec<(usize, Vec<usize>)>> {
    let report = shotsum::shotconv::propagation_report(&config.inner.model, frames, &sources, seed).map_err(py_err)?;
    Ok(report
        .influences()
        .into_iter()
        .map(|s| (s.source_frame, s.influenced_frames))
        .collect())
}

#[pymodule]
#[pyo3(name = "shotsum")]
fn shotsum_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyRecord>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(synthetic_record, m)?)?;
    m.add_function(wrap_pyfunction!(load_records, m)?)?;
    m.add_function(wrap_pyfunction!(write_records, m)?)?;
    m.add_function(wrap_pyfunction!(count_params, m)?)?;
    m.add_function(wrap_pyfunction!(fscore, m)?)?;
    m.add_function(wrap_pyfunction!(knapsack, m)?)?;
    m.add_function(wrap_pyfunction!(kts, m)?)?;
    m.add_function(wrap_pyfunction!(focal_loss, m)?)?;
    m.add_function(wrap_pyfunction!(trace, m)?)?;
    Ok(())
}
