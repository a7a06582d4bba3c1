//! End-to-end driver: trace → per-hand clips → fused steps.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{PipelineConfig, ProviderConfig, SimThreshold};
use crate::error::{Error, Result};
use crate::fsm::{run_fsm, score_series, HandSide, HandStateTrace, WindowParams};
use crate::fusion::{fuse_streams, StepSegmentation};
use crate::segmentation::{extract_clips, filter_short_clips, reconnect_clips, Clip, ClipSet, ReconnectParams};
use crate::similarity::{
    default_threshold_grid, read_labeled_pairs, roc_curve, select_threshold_roc, ConstantProvider,
    HistogramProvider, MatrixProvider, RocPoint, SimilarityError, SimilarityProvider,
};
use crate::trace::VideoTrace;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn build_provider(cfg: &ProviderConfig) -> Result<Box<dyn SimilarityProvider>> {
    Ok(match cfg {
        ProviderConfig::Constant { value } => Box::new(ConstantProvider::new(*value)?),
        ProviderConfig::Matrix { path } => Box::new(MatrixProvider::from_path(path)?),
        ProviderConfig::Histogram { crop_root, bins } => Box::new(HistogramProvider::new(crop_root, *bins)?),
    })
}

/// ROC calibration over a labeled pair CSV file.
pub fn calibrate_threshold(provider: &dyn SimilarityProvider, pairs_path: &Path) -> Result<(RocPoint, Vec<RocPoint>)> {
    let file = std::fs::File::open(pairs_path)
        .map_err(|source| SimilarityError::Io { path: pairs_path.into(), source })?;
    let pairs = read_labeled_pairs(std::io::BufReader::new(file))?;
    let curve = roc_curve(provider, &pairs, &default_threshold_grid())?;
    let best = select_threshold_roc(&curve).expect("default grid is non-empty");
    Ok((best, curve))
}

/// Resolves the configured threshold, running ROC calibration when asked.
pub fn resolve_sim_threshold(cfg: &PipelineConfig, provider: Option<&dyn SimilarityProvider>) -> Result<Option<f64>> {
    match (&cfg.sim_threshold, provider) {
        (SimThreshold::Fixed(v), _) => Ok(Some(*v)),
        (SimThreshold::Roc(path), Some(p)) => Ok(Some(calibrate_threshold(p, path)?.0.threshold)),
        (SimThreshold::Roc(_), None) => Ok(None),
    }
}

/// Intermediate and final clip sets for one hand.
#[derive(Debug, Clone)]
pub struct HandSegmentation {
    pub states: Option<HandStateTrace>,
    pub initial: ClipSet,
    pub filtered: ClipSet,
    pub reconnected: ClipSet,
}

pub fn segment_hand(
    canonical: &VideoTrace,
    hand: HandSide,
    cfg: &PipelineConfig,
    window: WindowParams,
    reconnect: Option<(&dyn SimilarityProvider, f64)>,
) -> Result<HandSegmentation> {
    if canonical.frame_count == 0 {
        let empty = ClipSet::new(hand, canonical.fps, Vec::new());
        return Ok(HandSegmentation { states: None, initial: empty.clone(), filtered: empty.clone(), reconnected: empty });
    }
    let scores = score_series(canonical, hand);
    let states = run_fsm(&scores, window, cfg.window_comparison)?;
    let initial = extract_clips(&states, canonical);
    let filtered = filter_short_clips(&initial, cfg.min_duration_s);
    let reconnected = match reconnect {
        Some((provider, sim_threshold)) => reconnect_clips(
            &filtered,
            provider,
            ReconnectParams { sim_threshold, boundary_fraction: cfg.boundary_fraction, polarity: cfg.similarity_polarity },
        )?,
        None => filtered.clone(),
    };
    Ok(HandSegmentation { states: Some(states), initial, filtered, reconnected })
}

#[derive(Debug, Clone)]
pub struct SegmentOutput {
    pub canonical: VideoTrace,
    pub window: WindowParams,
    pub sim_threshold: Option<f64>,
    pub left: HandSegmentation,
    pub right: HandSegmentation,
}

/// Canonicalizes the trace and segments both hands.
pub fn segment_video(trace: &VideoTrace, cfg: &PipelineConfig, provider: Option<&dyn SimilarityProvider>) -> Result<SegmentOutput> {
    cfg.validate()?;
    let canonical = trace.canonicalize(cfg.min_score);
    let window = cfg.window_params(trace.fps)?;
    let sim_threshold = resolve_sim_threshold(cfg, provider)?;
    let reconnect = provider.zip(sim_threshold);
    if reconnect.is_none() {
        log::info!("no similarity provider configured; clip reconnection skipped");
    }
    let left = segment_hand(&canonical, HandSide::Left, cfg, window, reconnect)?;
    let right = segment_hand(&canonical, HandSide::Right, cfg, window, reconnect)?;
    Ok(SegmentOutput { canonical, window, sim_threshold, left, right })
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub segments: SegmentOutput,
    pub steps: StepSegmentation,
}

pub fn run_pipeline(trace: &VideoTrace, cfg: &PipelineConfig, provider: Option<&dyn SimilarityProvider>) -> Result<PipelineOutput> {
    let segments = segment_video(trace, cfg, provider)?;
    let steps = fuse_streams(&segments.left.reconnected, &segments.right.reconnected, &segments.canonical, cfg.fusion_params())?;
    Ok(PipelineOutput { segments, steps })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub tool_version: String,
}

impl Provenance {
    pub fn new(cfg: &PipelineConfig) -> Self {
        Self { config_hash: cfg.config_hash(), tool_version: TOOL_VERSION.to_string() }
    }
}

/// On-disk form of one hand's clip set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipSetFile {
    pub video_id: String,
    pub hand: HandSide,
    pub fps: f64,
    pub provenance: Provenance,
    pub clips: Vec<Clip>,
}

impl ClipSetFile {
    pub fn new(video_id: &str, set: &ClipSet, provenance: Provenance) -> Self {
        Self { video_id: video_id.to_string(), hand: set.hand, fps: set.fps, provenance, clips: set.clips.clone() }
    }

    pub fn into_clip_set(self) -> Result<ClipSet> {
        let set = ClipSet::new(self.hand, self.fps, self.clips);
        set.validate().map_err(|reason| Error::Format { what: "clip set", reason })?;
        Ok(set)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format { what: "clip set", reason: e.to_string() })
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("clip set serializes");
        s.push('\n');
        s
    }
}
