//! Python bindings: `import hoiseg`.

use std::path::PathBuf;

use hoiseg_core::pipeline::{build_provider, run_pipeline as core_run_pipeline};
use hoiseg_core::render::{render_timeline_ascii, render_timeline_svg};
use hoiseg_core::trace::{parse_trace_str, trace_to_string};
use hoiseg_core::{fsm, fusion, metrics, BoundingBox, FrameInterval, HandSide};
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py_err(e: impl Into<hoiseg_core::Error>) -> PyErr {
    let e = e.into();
    if e.is_io() {
        PyOSError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

/// Per-frame detections of one video.
#[pyclass(frozen, skip_from_py_object, module = "hoiseg")]
#[derive(Clone)]
pub struct VideoTrace {
    inner: hoiseg_core::VideoTrace,
}

#[pymethods]
impl VideoTrace {
    /// Parse JSONL text: a header line followed by one record per frame.
    #[staticmethod]
    fn from_jsonl(text: &str) -> PyResult<Self> {
        parse_trace_str(text).map(|inner| Self { inner }).map_err(to_py_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let text = std::fs::read_to_string(&path).map_err(|e| PyOSError::new_err(format!("{}: {e}", path.display())))?;
        Self::from_jsonl(&text)
    }

    /// Synthetic trace from `(hand, start, end, object)` interactions.
    #[staticmethod]
    #[pyo3(signature = (video_id, fps, frame_count, interactions))]
    fn scripted(video_id: &str, fps: f64, frame_count: usize, interactions: Vec<(String, usize, usize, String)>) -> PyResult<Self> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(PyValueError::new_err(format!("fps must be positive, got {fps}")));
        }
        let mut s = hoiseg_core::synth::ScriptedTrace::new(video_id, fps, frame_count);
        for (hand, start, end, object) in interactions {
            let side: HandSide = hand.parse().map_err(PyValueError::new_err)?;
            if start > end || end >= frame_count {
                return Err(PyValueError::new_err(format!("interaction {start}..={end} outside {frame_count} frames")));
            }
            s = s.interaction(side, start, end, &object);
        }
        Ok(Self { inner: s.build() })
    }

    fn to_jsonl(&self) -> String {
        trace_to_string(&self.inner)
    }

    fn canonicalize(&self, min_score: f64) -> Self {
        Self { inner: self.inner.canonicalize(min_score) }
    }

    #[getter]
    fn video_id(&self) -> &str {
        &self.inner.video_id
    }

    #[getter]
    fn fps(&self) -> f64 {
        self.inner.fps
    }

    #[getter]
    fn frame_count(&self) -> usize {
        self.inner.frame_count
    }

    fn __repr__(&self) -> String {
        format!("VideoTrace(video_id={:?}, fps={}, frame_count={})", self.inner.video_id, self.inner.fps, self.inner.frame_count)
    }
}

/// Pipeline parameters; built from TOML text (empty text gives defaults).
#[pyclass(frozen, skip_from_py_object, module = "hoiseg")]
#[derive(Clone)]
pub struct PipelineConfig {
    inner: hoiseg_core::PipelineConfig,
}

#[pymethods]
impl PipelineConfig {
    #[new]
    #[pyo3(signature = (toml = ""))]
    fn new(toml: &str) -> PyResult<Self> {
        hoiseg_core::PipelineConfig::from_toml_str(toml).map(|inner| Self { inner }).map_err(to_py_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        hoiseg_core::PipelineConfig::from_path(&path).map(|inner| Self { inner }).map_err(to_py_err)
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml_string()
    }

    fn config_hash(&self) -> String {
        self.inner.config_hash()
    }

    /// `(window_len, threshold)` used at the given frame rate.
    fn window_params(&self, fps: f64) -> PyResult<(usize, usize)> {
        let p = self.inner.window_params(fps).map_err(to_py_err)?;
        Ok((p.window_len, p.threshold))
    }

    #[getter]
    fn min_score(&self) -> f64 {
        self.inner.min_score
    }

    #[getter]
    fn min_duration_s(&self) -> f64 {
        self.inner.min_duration_s
    }

    #[getter]
    fn iosa_threshold(&self) -> f64 {
        self.inner.iosa_threshold
    }

    #[getter]
    fn sim_threshold(&self) -> String {
        self.inner.sim_threshold.to_string()
    }
}

/// One hand's contiguous active interval.
#[pyclass(frozen, skip_from_py_object, module = "hoiseg")]
#[derive(Clone)]
pub struct Clip {
    inner: hoiseg_core::Clip,
}

#[pymethods]
impl Clip {
    #[getter]
    fn hand(&self) -> &'static str {
        self.inner.hand.as_str()
    }

    #[getter]
    fn start_frame(&self) -> usize {
        self.inner.start_frame
    }

    #[getter]
    fn end_frame(&self) -> usize {
        self.inner.end_frame
    }

    #[getter]
    fn crop_refs(&self) -> Vec<String> {
        self.inner.object_crops.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.len_frames()
    }

    fn __repr__(&self) -> String {
        format!("Clip({}, {}, {})", self.inner.hand, self.inner.start_frame, self.inner.end_frame)
    }
}

/// Ordered, non-overlapping task steps of one video.
#[pyclass(frozen, from_py_object, module = "hoiseg")]
#[derive(Clone)]
pub struct StepSegmentation {
    inner: hoiseg_core::StepSegmentation,
}

#[pymethods]
impl StepSegmentation {
    #[new]
    #[pyo3(signature = (video_id, fps, segments))]
    fn new(video_id: String, fps: f64, segments: Vec<(usize, usize)>) -> PyResult<Self> {
        let inner = hoiseg_core::StepSegmentation {
            video_id,
            fps,
            segments: segments.into_iter().map(|(s, e)| fusion::StepSegment::new(s, e, None)).collect(),
        };
        inner.validate().map_err(to_py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        hoiseg_core::StepSegmentation::from_json_str(text).map(|inner| Self { inner }).map_err(to_py_err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json_string()
    }

    #[getter]
    fn video_id(&self) -> &str {
        &self.inner.video_id
    }

    #[getter]
    fn fps(&self) -> f64 {
        self.inner.fps
    }

    /// `(start_frame, end_frame, source_hand)` per step.
    #[getter]
    fn segments(&self) -> Vec<(usize, usize, Option<String>)> {
        self.inner
            .segments
            .iter()
            .map(|s| {
                let source = s.source_hand.map(|h| {
                    serde_json::to_value(h).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
                });
                (s.start_frame, s.end_frame, source)
            })
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.segments.len()
    }

    fn __repr__(&self) -> String {
        format!("StepSegmentation(video_id={:?}, steps={})", self.inner.video_id, self.inner.segments.len())
    }
}

/// Everything `run_pipeline` produced.
#[pyclass(frozen, module = "hoiseg")]
pub struct PipelineResult {
    #[pyo3(get)]
    left: Vec<Clip>,
    #[pyo3(get)]
    right: Vec<Clip>,
    #[pyo3(get)]
    steps: StepSegmentation,
    #[pyo3(get)]
    window: (usize, usize),
    #[pyo3(get)]
    sim_threshold: Option<f64>,
}

#[pyfunction]
fn iou(a: [f64; 4], b: [f64; 4]) -> PyResult<f64> {
    let bx = |v: [f64; 4]| BoundingBox::new(v[0], v[1], v[2], v[3]).map_err(to_py_err);
    Ok(bx(a)?.iou(&bx(b)?))
}

/// Overlap of two inclusive frame intervals divided by the shorter length.
#[pyfunction]
fn temporal_iosa(a: (usize, usize), b: (usize, usize)) -> PyResult<f64> {
    for (s, e) in [a, b] {
        if s > e {
            return Err(PyValueError::new_err(format!("interval ({s}, {e}) ends before it starts")));
        }
    }
    Ok(fusion::temporal_iosa(FrameInterval::new(a.0, a.1), FrameInterval::new(b.0, b.1)))
}

#[pyfunction]
fn default_window_params(fps: f64) -> PyResult<(usize, usize)> {
    let p = fsm::default_window_params(fps).map_err(to_py_err)?;
    Ok((p.window_len, p.threshold))
}

/// Active (True) / idle (False) per frame from binary interaction scores.
#[pyfunction]
#[pyo3(signature = (scores, window_len, threshold, strict = false))]
fn run_fsm(scores: Vec<u8>, window_len: usize, threshold: usize, strict: bool) -> PyResult<Vec<bool>> {
    let series = fsm::ScoreSeries::new(HandSide::Left, scores).map_err(to_py_err)?;
    let params = fsm::WindowParams::new(window_len, threshold).map_err(to_py_err)?;
    let cmp = if strict { fsm::WindowComparison::GreaterThan } else { fsm::WindowComparison::AtLeast };
    let states = fsm::run_fsm(&series, params, cmp).map_err(to_py_err)?;
    Ok(states.states.iter().map(|s| *s == fsm::HandState::Active).collect())
}

#[pyfunction]
#[pyo3(signature = (trace, config = None))]
fn run_pipeline(py: Python<'_>, trace: &VideoTrace, config: Option<&PipelineConfig>) -> PyResult<PipelineResult> {
    let cfg = config.map(|c| c.inner.clone()).unwrap_or_default();
    let trace = trace.inner.clone();
    let out = py
        .detach(move || {
            let provider = cfg.provider.as_ref().map(build_provider).transpose()?;
            core_run_pipeline(&trace, &cfg, provider.as_deref())
        })
        .map_err(to_py_err)?;
    let clips = |set: &hoiseg_core::ClipSet| set.clips.iter().map(|c| Clip { inner: c.clone() }).collect();
    Ok(PipelineResult {
        left: clips(&out.segments.left.reconnected),
        right: clips(&out.segments.right.reconnected),
        steps: StepSegmentation { inner: out.steps },
        window: (out.segments.window.window_len, out.segments.window.threshold),
        sim_threshold: out.segments.sim_threshold,
    })
}

fn score_dict<'py>(py: Python<'py>, s: &metrics::SegmentalScore) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("k", s.k)?;
    d.set_item("precision", s.precision)?;
    d.set_item("recall", s.recall)?;
    d.set_item("f1", s.f1)?;
    d.set_item("tp", s.tp)?;
    d.set_item("fp", s.fp)?;
    d.set_item("fn", s.fn_)?;
    Ok(d)
}

#[pyfunction]
fn segmental_f1<'py>(py: Python<'py>, pred: &StepSegmentation, truth: &StepSegmentation, k: f64) -> PyResult<Bound<'py, PyDict>> {
    let s = metrics::segmental_f1(&pred.inner, &truth.inner, k).map_err(to_py_err)?;
    score_dict(py, &s)
}

/// F1 at 10 %, 30 % and 50 % overlap.
#[pyfunction]
fn f1_report<'py>(py: Python<'py>, pred: &StepSegmentation, truth: &StepSegmentation) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let scores = metrics::f1_report(&pred.inner, &truth.inner).map_err(to_py_err)?;
    scores.iter().map(|s| score_dict(py, s)).collect()
}

/// SVG timeline, one track per `(name, segmentation)`.
#[pyfunction]
#[pyo3(signature = (tracks, frames = None, ascii_width = None))]
fn render_timeline(tracks: Vec<(String, StepSegmentation)>, frames: Option<usize>, ascii_width: Option<usize>) -> String {
    let tracks: Vec<(String, hoiseg_core::StepSegmentation)> = tracks.into_iter().map(|(n, s)| (n, s.inner)).collect();
    match ascii_width {
        Some(w) => render_timeline_ascii(&tracks, frames, w),
        None => render_timeline_svg(&tracks, frames).svg,
    }
}

#[pymodule]
fn hoiseg(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<VideoTrace>()?;
    m.add_class::<PipelineConfig>()?;
    m.add_class::<Clip>()?;
    m.add_class::<StepSegmentation>()?;
    m.add_class::<PipelineResult>()?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(temporal_iosa, m)?)?;
    m.add_function(wrap_pyfunction!(default_window_params, m)?)?;
    m.add_function(wrap_pyfunction!(run_fsm, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(segmental_f1, m)?)?;
    m.add_function(wrap_pyfunction!(f1_report, m)?)?;
    m.add_function(wrap_pyfunction!(render_timeline, m)?)?;
    Ok(())
}
