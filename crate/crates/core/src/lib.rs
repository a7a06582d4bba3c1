//! Step segmentation of egocentric video from per-frame hand-object
//! interaction (HOI) detections.
//!
//! The pipeline consumes a detection trace (one record per frame), drives a
//! two-state active/idle machine per hand, cuts each hand stream into clips,
//! drops sub-half-second clips, reconnects over-segmented neighbours by crop
//! similarity and finally fuses the two hand streams into one ordered list of
//! task steps. Evaluation helpers (segmental F1, detection tables) and a
//! timeline renderer sit alongside.

pub mod config;
pub mod error;
pub mod fsm;
pub mod fusion;
pub mod metrics;
pub mod pipeline;
pub mod render;
pub mod segmentation;
pub mod similarity;
pub mod synth;
pub mod trace;

pub use config::{PipelineConfig, SimThreshold};
pub use error::{Error, Result};
pub use fsm::{HandSide, HandState, HandStateTrace, ScoreSeries, WindowComparison, WindowParams};
pub use fusion::{AttentionVerdict, FrameInterval, StepSegment, StepSegmentation, StepSource};
pub use metrics::{DetectionEvalRow, SegmentalScore};
pub use segmentation::{Clip, ClipSet, SimilarityPolarity};
pub use similarity::{LabeledPair, RocPoint, SimilarityProvider};
pub use trace::{BoundingBox, Detection, DetectionClass, FrameDetections, VideoTrace};
