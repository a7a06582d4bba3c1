//! Pairwise crop similarity and ROC-based threshold calibration.
//!
//! Similarity is a value in `[0, 1]` where 1 means "same object". Providers
//! must be symmetric, return 1.0 on identical refs and be shareable across
//! threads.

use std::collections::HashMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_HISTOGRAM_BINS: usize = 8;
const MATRIX_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SimilarityError {
    #[error("unknown crop ref {0:?}")]
    UnknownCropRef(String),
    #[error("clip has no object crops")]
    NoCrops,
    #[error("invalid similarity matrix: {0}")]
    InvalidMatrix(String),
    #[error("histogram bins must be in 2..=256, got {0}")]
    InvalidBins(usize),
    #[error("cannot read crop {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot decode crop {path}: {reason}")]
    Decode { path: PathBuf, reason: String },
    #[error("labeled pairs: {0}")]
    InvalidPairs(String),
    #[error("similarity {value} for ({a}, {b}) outside [0, 1]")]
    OutOfRange { a: String, b: String, value: f64 },
}

pub trait SimilarityProvider: Send + Sync {
    fn similarity(&self, a: &str, b: &str) -> Result<f64, SimilarityError>;
}

impl<P: SimilarityProvider + ?Sized> SimilarityProvider for &P {
    fn similarity(&self, a: &str, b: &str) -> Result<f64, SimilarityError> {
        (**self).similarity(a, b)
    }
}

impl<P: SimilarityProvider + ?Sized> SimilarityProvider for Box<P> {
    fn similarity(&self, a: &str, b: &str) -> Result<f64, SimilarityError> {
        (**self).similarity(a, b)
    }
}

impl<P: SimilarityProvider + ?Sized> SimilarityProvider for Arc<P> {
    fn similarity(&self, a: &str, b: &str) -> Result<f64, SimilarityError> {
        (**self).similarity(a, b)
    }
}

/// Same value for every pair of distinct refs, 1.0 for identical refs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantProvider {
    value: f64,
}

impl ConstantProvider {
    pub fn new(value: f64) -> Result<Self, SimilarityError> {
        if !(0.0..=1.0).contains(&value) {
            return Err(SimilarityError::OutOfRange { a: "*".into(), b: "*".into(), value });
        }
        Ok(Self { value })
    }
}

impl SimilarityProvider for ConstantProvider {
    fn similarity(&self, a: &str, b: &str) -> Result<f64, SimilarityError> {
        Ok(if a == b { 1.0 } else { self.value })
    }
}

/// On-disk form of a precomputed similarity matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrixFile {
    pub crop_refs: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
}

impl SimilarityMatrixFile {
    pub fn from_reader<R: Read>(reader: R) -> Result<Self, SimilarityError> {
        serde_json::from_reader(reader).map_err(|e| SimilarityError::InvalidMatrix(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), SimilarityError> {
        let n = self.crop_refs.len();
        let bad = |msg: String| Err(SimilarityError::InvalidMatrix(msg));
        if self.matrix.len() != n {
            return bad(format!("{} rows for {} crop refs", self.matrix.len(), n));
        }
        let mut seen = HashMap::new();
        for (i, r) in self.crop_refs.iter().enumerate() {
            if let Some(j) = seen.insert(r.as_str(), i) {
                return bad(format!("crop ref {r:?} listed twice (rows {j} and {i})"));
            }
        }
        for (i, row) in self.matrix.iter().enumerate() {
            if row.len() != n {
                return bad(format!("row {i} has {} entries, expected {n}", row.len()));
            }
            for (j, &v) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    return bad(format!("entry ({i}, {j}) = {v} outside [0, 1]"));
                }
                if (v - self.matrix[j][i]).abs() > MATRIX_TOLERANCE {
                    return bad(format!("entry ({i}, {j}) not symmetric"));
                }
            }
            if (row[i] - 1.0).abs() > MATRIX_TOLERANCE {
                return bad(format!("diagonal entry {i} is {}", row[i]));
            }
        }
        Ok(())
    }
}

/// Answers queries by lookup into a validated matrix.
#[derive(Debug, Clone)]
pub struct MatrixProvider {
    index: HashMap<String, usize>,
    matrix: Vec<Vec<f64>>,
}

impl MatrixProvider {
    pub fn new(file: SimilarityMatrixFile) -> Result<Self, SimilarityError> {
        file.validate()?;
        let index = file.crop_refs.into_iter().enumerate().map(|(i, r)| (r, i)).collect();
        Ok(Self { index, matrix: file.matrix })
    }

    pub fn from_path(path: &Path) -> Result<Self, SimilarityError> {
        let f = std::fs::File::open(path).map_err(|source| SimilarityError::Io { path: path.into(), source })?;
        Self::new(SimilarityMatrixFile::from_reader(std::io::BufReader::new(f))?)
    }

    fn lookup(&self, r: &str) -> Result<usize, SimilarityError> {
        self.index.get(r).copied().ok_or_else(|| SimilarityError::UnknownCropRef(r.to_string()))
    }
}

impl SimilarityProvider for MatrixProvider {
    fn similarity(&self, a: &str, b: &str) -> Result<f64, SimilarityError> {
        let (i, j) = (self.lookup(a)?, self.lookup(b)?);
        if i == j {
            return Ok(1.0);
        }
        // average the two halves so tiny asymmetries never leak out
        Ok((self.matrix[i][j] + self.matrix[j][i]) / 2.0)
    }
}

#[derive(Debug)]
struct ColorHistogram {
    counts: Vec<u64>,
    total: u64,
}

/// Color-histogram intersection over crops stored as image files.
///
/// Pixels are quantized into `bins` levels per RGB channel and counted in a
/// joint `bins^3` histogram. Similarity is the intersection of the two
/// normalized histograms, computed in integer arithmetic so identical crops
/// score exactly 1.0. Histograms are cached per crop ref.
#[derive(Debug)]
pub struct HistogramProvider {
    root: PathBuf,
    bins: usize,
    cache: RwLock<HashMap<String, Arc<ColorHistogram>>>,
}

impl HistogramProvider {
    pub fn new(root: impl Into<PathBuf>, bins: usize) -> Result<Self, SimilarityError> {
        if !(2..=256).contains(&bins) {
            return Err(SimilarityError::InvalidBins(bins));
        }
        Ok(Self { root: root.into(), bins, cache: RwLock::new(HashMap::new()) })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    fn histogram(&self, crop_ref: &str) -> Result<Arc<ColorHistogram>, SimilarityError> {
        if let Some(h) = self.cache.read().expect("histogram cache poisoned").get(crop_ref) {
            return Ok(h.clone());
        }
        let path = self.root.join(crop_ref);
        if !path.is_file() {
            return Err(SimilarityError::UnknownCropRef(crop_ref.to_string()));
        }
        let bytes = std::fs::read(&path).map_err(|source| SimilarityError::Io { path: path.clone(), source })?;
        let img = image::load_from_memory(&bytes)
            .map_err(|e| SimilarityError::Decode { path: path.clone(), reason: e.to_string() })?
            .to_rgb8();
        let mut counts = vec![0u64; self.bins * self.bins * self.bins];
        let q = |v: u8| v as usize * self.bins / 256;
        for px in img.pixels() {
            let [r, g, b] = px.0;
            counts[(q(r) * self.bins + q(g)) * self.bins + q(b)] += 1;
        }
        let total = counts.iter().sum();
        if total == 0 {
            return Err(SimilarityError::Decode { path, reason: "image has no pixels".into() });
        }
        let hist = Arc::new(ColorHistogram { counts, total });
        // racing writers compute identical histograms, so first insert wins
        let mut cache = self.cache.write().expect("histogram cache poisoned");
        Ok(cache.entry(crop_ref.to_string()).or_insert(hist).clone())
    }
}

impl SimilarityProvider for HistogramProvider {
    fn similarity(&self, a: &str, b: &str) -> Result<f64, SimilarityError> {
        let ha = self.histogram(a)?;
        if a == b {
            return Ok(1.0);
        }
        let hb = self.histogram(b)?;
        // sum_i min(ca_i / na, cb_i / nb) == sum_i min(ca_i * nb, cb_i * na) / (na * nb)
        let (na, nb) = (ha.total as u128, hb.total as u128);
        let shared: u128 = ha
            .counts
            .iter()
            .zip(&hb.counts)
            .map(|(&ca, &cb)| (ca as u128 * nb).min(cb as u128 * na))
            .sum();
        Ok(shared as f64 / (na * nb) as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub crop_a: String,
    pub crop_b: String,
    pub same: bool,
}

#[derive(Debug, Deserialize)]
struct PairRow {
    crop_a: String,
    crop_b: String,
    same: u8,
}

/// Reads `crop_a,crop_b,same` CSV rows (`same` is 0 or 1).
pub fn read_labeled_pairs<R: Read>(reader: R) -> Result<Vec<LabeledPair>, SimilarityError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut pairs = Vec::new();
    for (i, row) in rdr.deserialize::<PairRow>().enumerate() {
        let row = row.map_err(|e| SimilarityError::InvalidPairs(format!("row {}: {e}", i + 1)))?;
        if row.same > 1 {
            return Err(SimilarityError::InvalidPairs(format!("row {}: same must be 0 or 1", i + 1)));
        }
        pairs.push(LabeledPair { crop_a: row.crop_a, crop_b: row.crop_b, same: row.same == 1 });
    }
    if pairs.is_empty() {
        return Err(SimilarityError::InvalidPairs("no pairs".into()));
    }
    Ok(pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
}

impl RocPoint {
    pub fn youden_j(&self) -> f64 {
        self.tpr - self.fpr
    }
}

/// `0.00, 0.01, ..., 1.00` followed by one point above 1 so the curve always
/// reaches (0, 0).
pub fn default_threshold_grid() -> Vec<f64> {
    let mut grid: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
    grid.push(1.01);
    grid
}

/// Similarity of every labeled pair, in input order.
pub fn score_pairs(
    provider: &dyn SimilarityProvider,
    pairs: &[LabeledPair],
) -> Result<Vec<(f64, bool)>, SimilarityError> {
    pairs
        .iter()
        .map(|p| Ok((provider.similarity(&p.crop_a, &p.crop_b)?, p.same)))
        .collect()
}

/// TPR/FPR at each threshold, classifying a pair as "same" when its
/// similarity is at least the threshold. Output is sorted by threshold.
pub fn roc_curve(
    provider: &dyn SimilarityProvider,
    pairs: &[LabeledPair],
    thresholds: &[f64],
) -> Result<Vec<RocPoint>, SimilarityError> {
    roc_from_scores(&score_pairs(provider, pairs)?, thresholds)
}

pub fn roc_from_scores(scored: &[(f64, bool)], thresholds: &[f64]) -> Result<Vec<RocPoint>, SimilarityError> {
    let positives = scored.iter().filter(|(_, same)| *same).count();
    let negatives = scored.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(SimilarityError::InvalidPairs(
            "need at least one positive and one negative pair".into(),
        ));
    }
    let mut grid = thresholds.to_vec();
    grid.sort_by(f64::total_cmp);
    Ok(grid
        .into_iter()
        .map(|theta| {
            let tp = scored.iter().filter(|(s, same)| *same && *s >= theta).count();
            let fp = scored.iter().filter(|(s, same)| !*same && *s >= theta).count();
            RocPoint { threshold: theta, tpr: tp as f64 / positives as f64, fpr: fp as f64 / negatives as f64 }
        })
        .collect())
}

/// Point maximizing Youden's J = TPR - FPR; ties go to the larger threshold.
pub fn select_threshold_roc(curve: &[RocPoint]) -> Option<RocPoint> {
    curve.iter().copied().reduce(|best, p| {
        let (jb, jp) = (best.youden_j(), p.youden_j());
        if jp > jb || (jp == jb && p.threshold > best.threshold) {
            p
        } else {
            best
        }
    })
}

/// Area under the ROC curve as the Mann-Whitney statistic
/// P(pos > neg) + P(pos == neg) / 2.
pub fn auc(scored: &[(f64, bool)]) -> Option<f64> {
    let pos: Vec<f64> = scored.iter().filter(|(_, s)| *s).map(|(v, _)| *v).collect();
    let neg: Vec<f64> = scored.iter().filter(|(_, s)| !*s).map(|(v, _)| *v).collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut wins = 0.0;
    for p in &pos {
        for n in &neg {
            wins += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    Some(wins / (pos.len() * neg.len()) as f64)
}
