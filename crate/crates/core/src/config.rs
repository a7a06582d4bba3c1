//! Pipeline configuration, read from TOML.
//!
//! ```toml
//! min_score = 0.8
//! # window_len = 5          # both or neither; default derives from fps
//! # window_threshold = 3
//! window_comparison = "at-least"
//! min_duration_s = 0.5
//! boundary_fraction = 0.2
//! sim_threshold = 0.5       # or "roc:pairs.csv"
//! similarity_polarity = "similarity"
//! iosa_threshold = 0.5
//! attention_fallback = "right"
//!
//! [provider]
//! kind = "histogram"        # or "matrix" (path = ...) / "constant" (value = ...)
//! crop_root = "crops"
//! bins = 8
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::fsm::{default_window_params, HandSide, WindowComparison, WindowParams};
use crate::fusion::{FusionParams, DEFAULT_IOSA_THRESHOLD};
use crate::segmentation::{
    SimilarityPolarity, DEFAULT_BOUNDARY_FRACTION, DEFAULT_MIN_DURATION_S, DEFAULT_SIM_THRESHOLD,
};
use crate::similarity::DEFAULT_HISTOGRAM_BINS;
use crate::trace::DEFAULT_MIN_SCORE;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Similarity threshold for clip reconnection: a fixed value or one
/// calibrated by ROC analysis over a labeled pair file.
#[derive(Debug, Clone, PartialEq)]
pub enum SimThreshold {
    Fixed(f64),
    Roc(PathBuf),
}

impl Default for SimThreshold {
    fn default() -> Self {
        SimThreshold::Fixed(DEFAULT_SIM_THRESHOLD)
    }
}

impl fmt::Display for SimThreshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimThreshold::Fixed(v) => write!(f, "{v}"),
            SimThreshold::Roc(p) => write!(f, "roc:{}", p.display()),
        }
    }
}

impl std::str::FromStr for SimThreshold {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(path) = s.strip_prefix("roc:") {
            if path.is_empty() {
                return Err(ConfigError::Invalid("sim_threshold \"roc:\" needs a pairs file".into()));
            }
            return Ok(SimThreshold::Roc(PathBuf::from(path)));
        }
        s.parse::<f64>()
            .map(SimThreshold::Fixed)
            .map_err(|_| ConfigError::Invalid(format!("sim_threshold {s:?} is neither a number nor roc:<file>")))
    }
}

impl Serialize for SimThreshold {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        match self {
            SimThreshold::Fixed(v) => ser.serialize_f64(*v),
            SimThreshold::Roc(_) => ser.serialize_str(&self.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for SimThreshold {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(de)? {
            Raw::Num(v) => Ok(SimThreshold::Fixed(v)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProviderConfig {
    Constant { value: f64 },
    Matrix { path: PathBuf },
    Histogram {
        crop_root: PathBuf,
        #[serde(default = "default_bins")]
        bins: usize,
    },
}

fn default_bins() -> usize {
    DEFAULT_HISTOGRAM_BINS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub min_score: f64,
    pub window_len: Option<usize>,
    pub window_threshold: Option<usize>,
    pub window_comparison: WindowComparison,
    pub min_duration_s: f64,
    pub boundary_fraction: f64,
    pub sim_threshold: SimThreshold,
    pub similarity_polarity: SimilarityPolarity,
    pub iosa_threshold: f64,
    pub attention_fallback: HandSide,
    /// Without a provider, clip reconnection is skipped.
    pub provider: Option<ProviderConfig>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            min_score: DEFAULT_MIN_SCORE,
            window_len: None,
            window_threshold: None,
            window_comparison: WindowComparison::AtLeast,
            min_duration_s: DEFAULT_MIN_DURATION_S,
            boundary_fraction: DEFAULT_BOUNDARY_FRACTION,
            sim_threshold: SimThreshold::default(),
            similarity_polarity: SimilarityPolarity::Similarity,
            iosa_threshold: DEFAULT_IOSA_THRESHOLD,
            attention_fallback: HandSide::Right,
            provider: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        let unit = |v: f64| v.is_finite() && (0.0..=1.0).contains(&v);
        if !unit(self.min_score) {
            return invalid(format!("min_score {} outside [0, 1]", self.min_score));
        }
        match (self.window_len, self.window_threshold) {
            (Some(n), Some(t)) => {
                WindowParams::new(n, t).map_err(|e| ConfigError::Invalid(e.to_string()))?;
            }
            (None, None) => {}
            _ => return invalid("window_len and window_threshold must be given together".into()),
        }
        if !(self.min_duration_s.is_finite() && self.min_duration_s >= 0.0) {
            return invalid(format!("min_duration_s {} must be >= 0", self.min_duration_s));
        }
        if !(self.boundary_fraction > 0.0 && self.boundary_fraction <= 1.0) {
            return invalid(format!("boundary_fraction {} outside (0, 1]", self.boundary_fraction));
        }
        if let SimThreshold::Fixed(v) = self.sim_threshold {
            if !unit(v) {
                return invalid(format!("sim_threshold {v} outside [0, 1]"));
            }
        }
        if !(self.iosa_threshold.is_finite() && self.iosa_threshold >= 0.0) {
            return invalid(format!("iosa_threshold {} must be >= 0", self.iosa_threshold));
        }
        match &self.provider {
            Some(ProviderConfig::Constant { value }) if !unit(*value) => {
                invalid(format!("constant similarity {value} outside [0, 1]"))
            }
            Some(ProviderConfig::Histogram { bins, .. }) if !(2..=256).contains(bins) => {
                invalid(format!("histogram bins {bins} outside 2..=256"))
            }
            _ => Ok(()),
        }
    }

    /// Explicit window parameters, or the fps-derived defaults.
    pub fn window_params(&self, fps: f64) -> Result<WindowParams, ConfigError> {
        match (self.window_len, self.window_threshold) {
            (Some(n), Some(t)) => WindowParams::new(n, t),
            _ => default_window_params(fps),
        }
        .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn fusion_params(&self) -> FusionParams {
        FusionParams { iosa_threshold: self.iosa_threshold, fallback: self.attention_fallback }
    }

    /// SHA-256 over the canonical JSON form of the config.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes to JSON");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
