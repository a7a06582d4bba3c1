//! Segmental F1@k and per-frame detection evaluation.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::{FrameInterval, StepSegment, StepSegmentation};
use crate::trace::{iou, BoundingBox, DetectionClass, FrameDetections, VideoTrace};

/// Overlap thresholds reported by [`f1_report`].
pub const REPORT_THRESHOLDS: [f64; 3] = [0.10, 0.30, 0.50];
pub const DEFAULT_IOU_MATCH: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("video metadata differs: {0}")]
    MetadataMismatch(String),
    #[error("threshold {0} outside (0, 1]")]
    InvalidThreshold(f64),
    #[error("frame count differs: predicted {predicted}, truth {truth}")]
    FrameCountMismatch { predicted: usize, truth: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentalScore {
    pub k: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// No predicted segments: precision reported as 0.
    pub precision_undefined: bool,
    /// No ground-truth segments: recall reported as 0.
    pub recall_undefined: bool,
}

impl SegmentalScore {
    fn from_counts(k: f64, tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        Self {
            k,
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
            precision_undefined: tp + fp == 0,
            recall_undefined: tp + fn_ == 0,
        }
    }
}

/// Temporal IOU of two inclusive frame intervals.
pub fn interval_iou(a: FrameInterval, b: FrameInterval) -> f64 {
    match a.intersect(&b) {
        Some(i) => {
            let inter = i.len();
            inter as f64 / (a.len() + b.len() - inter) as f64
        }
        None => 0.0,
    }
}

/// Labels are compared only when every segment on both sides carries one.
fn label_aware(predicted: &StepSegmentation, truth: &StepSegmentation) -> bool {
    let labelled = |s: &StepSegmentation| !s.segments.is_empty() && s.segments.iter().all(|x| x.label.is_some());
    labelled(predicted) && labelled(truth)
}

fn check_metadata(predicted: &StepSegmentation, truth: &StepSegmentation) -> Result<(), MetricsError> {
    if predicted.video_id != truth.video_id {
        return Err(MetricsError::MetadataMismatch(format!(
            "video_id {:?} vs {:?}",
            predicted.video_id, truth.video_id
        )));
    }
    if predicted.fps != truth.fps {
        return Err(MetricsError::MetadataMismatch(format!("fps {} vs {}", predicted.fps, truth.fps)));
    }
    Ok(())
}

/// Pairwise match quality used by the matcher: temporal IOU, zeroed when
/// labels are compared and differ.
pub fn match_matrix(predicted: &[StepSegment], truth: &[StepSegment], use_labels: bool) -> Vec<Vec<f64>> {
    predicted
        .iter()
        .map(|p| {
            truth
                .iter()
                .map(|t| {
                    if use_labels && p.label != t.label {
                        0.0
                    } else {
                        interval_iou(p.interval(), t.interval())
                    }
                })
                .collect()
        })
        .collect()
}

/// Greedy segmental F1: predictions in temporal order each take the unmatched
/// ground-truth segment with the highest IOU (earliest on ties); the match is
/// a true positive when that IOU is at least `k`.
pub fn segmental_f1(predicted: &StepSegmentation, truth: &StepSegmentation, k: f64) -> Result<SegmentalScore, MetricsError> {
    check_metadata(predicted, truth)?;
    if !(k > 0.0 && k <= 1.0) {
        return Err(MetricsError::InvalidThreshold(k));
    }
    let overlaps = match_matrix(&predicted.segments, &truth.segments, label_aware(predicted, truth));
    let mut used = vec![false; truth.segments.len()];
    let mut tp = 0;
    for row in &overlaps {
        let best = row
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .fold(None::<(usize, f64)>, |best, (j, &v)| match best {
                Some((_, bv)) if bv >= v => best,
                _ => Some((j, v)),
            });
        if let Some((j, v)) = best {
            if v >= k {
                used[j] = true;
                tp += 1;
            }
        }
    }
    let fp = predicted.segments.len() - tp;
    let fn_ = truth.segments.len() - tp;
    Ok(SegmentalScore::from_counts(k, tp, fp, fn_))
}

/// F1 at 10 %, 30 % and 50 % overlap.
pub fn f1_report(predicted: &StepSegmentation, truth: &StepSegmentation) -> Result<Vec<SegmentalScore>, MetricsError> {
    REPORT_THRESHOLDS.iter().map(|&k| segmental_f1(predicted, truth, k)).collect()
}

pub fn format_f1_table(name: &str, scores: &[SegmentalScore]) -> String {
    let mut out = String::new();
    let width = name.len().max(6);
    let _ = write!(out, "{:<width$}", "");
    for s in scores {
        let _ = write!(out, "  {:>7}", format!("F1@{:.0}", s.k * 100.0));
    }
    out.push('\n');
    let _ = write!(out, "{name:<width$}");
    for s in scores {
        let _ = write!(out, "  {:>7.2}", s.f1 * 100.0);
    }
    out.push('\n');
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DetectionCategory {
    #[serde(rename = "AH")]
    ActiveHand,
    #[serde(rename = "AO")]
    ActiveObject,
    #[serde(rename = "HOI")]
    Hoi,
}

impl DetectionCategory {
    pub fn as_str(&self) -> &'static str {
        match self {
            DetectionCategory::ActiveHand => "AH",
            DetectionCategory::ActiveObject => "AO",
            DetectionCategory::Hoi => "HOI",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvalRow {
    pub category: DetectionCategory,
    pub instances: usize,
    pub tp: usize,
    pub fp: usize,
    pub tpr: f64,
    pub precision: f64,
    pub tpr_undefined: bool,
    pub precision_undefined: bool,
}

impl DetectionEvalRow {
    fn new(category: DetectionCategory, instances: usize, tp: usize, fp: usize) -> Self {
        let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        Self {
            category,
            instances,
            tp,
            fp,
            tpr: ratio(tp, instances),
            precision: ratio(tp, tp + fp),
            tpr_undefined: instances == 0,
            precision_undefined: tp + fp == 0,
        }
    }

    pub fn fn_(&self) -> usize {
        self.instances - self.tp
    }
}

struct Item {
    class: DetectionClass,
    bbox: BoundingBox,
}

/// Greedy one-to-one assignment by descending IOU among same-class pairs
/// with IOU >= `min_iou`. Returns `truth index` per prediction.
fn greedy_assign(pred: &[Item], truth: &[Item], min_iou: f64) -> Vec<Option<usize>> {
    let mut pairs = Vec::new();
    for (i, p) in pred.iter().enumerate() {
        for (j, t) in truth.iter().enumerate() {
            if p.class == t.class {
                let v = iou(&p.bbox, &t.bbox);
                if v >= min_iou {
                    pairs.push((v, i, j));
                }
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut assigned = vec![None; pred.len()];
    let mut taken = vec![false; truth.len()];
    for (_, i, j) in pairs {
        if assigned[i].is_none() && !taken[j] {
            assigned[i] = Some(j);
            taken[j] = true;
        }
    }
    assigned
}

fn items(frame: Option<&FrameDetections>, keep: impl Fn(DetectionClass) -> bool) -> Vec<Item> {
    frame
        .map(|f| {
            f.detections
                .iter()
                .filter(|d| keep(d.class))
                .map(|d| Item { class: d.class, bbox: d.bbox })
                .collect()
        })
        .unwrap_or_default()
}

/// Interaction pairs `(hand index, object index)` of a frame: each active
/// hand paired with its best-overlapping active object (IOU > 0).
fn hoi_pairs(hands: &[Item], objects: &[Item]) -> Vec<(usize, usize)> {
    hands
        .iter()
        .enumerate()
        .filter_map(|(h, hand)| {
            objects
                .iter()
                .enumerate()
                .map(|(o, obj)| (o, iou(&hand.bbox, &obj.bbox)))
                .filter(|(_, v)| *v > 0.0)
                .fold(None::<(usize, f64)>, |best, (o, v)| match best {
                    Some((_, bv)) if bv >= v => best,
                    _ => Some((o, v)),
                })
                .map(|(o, _)| (h, o))
        })
        .collect()
}

/// Active-hand, active-object and HOI detection counts over every frame.
///
/// Hands and objects are matched to ground truth per frame with greedy
/// highest-IOU assignment (same class, IOU >= `iou_match`). A predicted
/// interaction is a true positive when its hand and object are matched to a
/// ground-truth hand and object that interact in the ground truth.
pub fn detection_eval(predicted: &VideoTrace, truth: &VideoTrace, iou_match: f64) -> Result<Vec<DetectionEvalRow>, MetricsError> {
    if predicted.frame_count != truth.frame_count {
        return Err(MetricsError::FrameCountMismatch { predicted: predicted.frame_count, truth: truth.frame_count });
    }
    if !(iou_match > 0.0 && iou_match <= 1.0) {
        return Err(MetricsError::InvalidThreshold(iou_match));
    }
    let mut counts = [(0usize, 0usize, 0usize); 3];
    let mut frames: Vec<usize> = predicted.frames.iter().chain(&truth.frames).map(|f| f.frame_index).collect();
    frames.sort_unstable();
    frames.dedup();

    let is_hand = |c: DetectionClass| c.is_active_hand();
    let is_obj = |c: DetectionClass| c == DetectionClass::ActiveObject;
    for t in frames {
        let (pf, tf) = (predicted.frame(t), truth.frame(t));
        let (ph, th) = (items(pf, is_hand), items(tf, is_hand));
        let (po, to) = (items(pf, is_obj), items(tf, is_obj));
        let hand_match = greedy_assign(&ph, &th, iou_match);
        let obj_match = greedy_assign(&po, &to, iou_match);

        let tally = |slot: &mut (usize, usize, usize), instances: usize, matched: usize, predictions: usize| {
            slot.0 += instances;
            slot.1 += matched;
            slot.2 += predictions - matched;
        };
        tally(&mut counts[0], th.len(), hand_match.iter().flatten().count(), ph.len());
        tally(&mut counts[1], to.len(), obj_match.iter().flatten().count(), po.len());

        let truth_pairs = hoi_pairs(&th, &to);
        let pred_pairs = hoi_pairs(&ph, &po);
        let hoi_tp = pred_pairs
            .iter()
            .filter(|&&(h, o)| match (hand_match[h], obj_match[o]) {
                (Some(th_i), Some(to_i)) => truth_pairs.contains(&(th_i, to_i)),
                _ => false,
            })
            .count();
        tally(&mut counts[2], truth_pairs.len(), hoi_tp, pred_pairs.len());
    }

    Ok([DetectionCategory::ActiveHand, DetectionCategory::ActiveObject, DetectionCategory::Hoi]
        .into_iter()
        .zip(counts)
        .map(|(cat, (inst, tp, fp))| DetectionEvalRow::new(cat, inst, tp, fp))
        .collect())
}

pub fn format_detection_table(rows: &[DetectionEvalRow]) -> String {
    let mut out = String::from("category  instances      tp      fp      tpr  precision\n");
    for r in rows {
        let pct = |v: f64, undefined: bool| if undefined { "n/a".to_string() } else { format!("{:.2}%", v * 100.0) };
        let _ = writeln!(
            out,
            "{:<8}  {:>9}  {:>6}  {:>6}  {:>7}  {:>9}",
            r.category.as_str(),
            r.instances,
            r.tp,
            r.fp,
            pct(r.tpr, r.tpr_undefined),
            pct(r.precision, r.precision_undefined)
        );
    }
    out
}
