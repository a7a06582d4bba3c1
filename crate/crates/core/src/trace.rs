//! Detection trace data model and the JSON Lines trace format.
//!
//! A trace file starts with a header line
//! `{"video_id": .., "fps": .., "frame_count": ..}` followed by one line per
//! frame that has detections:
//! `{"frame": 12, "detections": [{"class": "active_object", "score": 0.93,
//! "box": [x_min, y_min, x_max, y_max], "crop_ref": "crops/12_0.png"}]}`.

use std::cmp::Ordering;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fsm::HandSide;

/// Default per-detection confidence cut applied by [`canonicalize_frame`].
pub const DEFAULT_MIN_SCORE: f64 = 0.8;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: duplicate frame index {frame}")]
    DuplicateFrame { line: usize, frame: usize },
    #[error("fps must be positive and finite, got {0}")]
    InvalidFps(f64),
    #[error("missing header line")]
    MissingHeader,
    #[error("invalid bounding box {0:?}")]
    InvalidBox([f64; 4]),
    #[error("score {0} outside [0, 1]")]
    InvalidScore(f64),
    #[error("active_object detection without crop_ref")]
    MissingCropRef,
    #[error("unknown detection class {0:?}")]
    UnknownClass(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Axis-aligned box in image coordinates (y grows downward).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, TraceError> {
        let coords = [x_min, y_min, x_max, y_max];
        let valid = coords.iter().all(|c| c.is_finite() && *c >= 0.0) && x_min < x_max && y_min < y_max;
        if !valid {
            return Err(TraceError::InvalidBox(coords));
        }
        Ok(Self { x_min, y_min, x_max, y_max })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn y_min(&self) -> f64 {
        self.y_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    pub fn iou(&self, other: &BoundingBox) -> f64 {
        iou(self, other)
    }
}

/// Intersection over union of two boxes; 0 when they do not intersect.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionClass {
    NormalObject,
    ActiveObject,
    IdleLeftHand,
    IdleRightHand,
    ActiveLeftHand,
    ActiveRightHand,
}

impl DetectionClass {
    pub const ALL: [DetectionClass; 6] = [
        DetectionClass::NormalObject,
        DetectionClass::ActiveObject,
        DetectionClass::IdleLeftHand,
        DetectionClass::IdleRightHand,
        DetectionClass::ActiveLeftHand,
        DetectionClass::ActiveRightHand,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            DetectionClass::NormalObject => "normal_object",
            DetectionClass::ActiveObject => "active_object",
            DetectionClass::IdleLeftHand => "idle_left_hand",
            DetectionClass::IdleRightHand => "idle_right_hand",
            DetectionClass::ActiveLeftHand => "active_left_hand",
            DetectionClass::ActiveRightHand => "active_right_hand",
        }
    }

    /// Side of the hand for hand classes, `None` for objects.
    pub fn hand_side(&self) -> Option<HandSide> {
        match self {
            DetectionClass::IdleLeftHand | DetectionClass::ActiveLeftHand => Some(HandSide::Left),
            DetectionClass::IdleRightHand | DetectionClass::ActiveRightHand => Some(HandSide::Right),
            _ => None,
        }
    }

    pub fn is_active_hand(&self) -> bool {
        matches!(self, DetectionClass::ActiveLeftHand | DetectionClass::ActiveRightHand)
    }

    pub fn active_hand(side: HandSide) -> Self {
        match side {
            HandSide::Left => DetectionClass::ActiveLeftHand,
            HandSide::Right => DetectionClass::ActiveRightHand,
        }
    }

    pub fn idle_hand(side: HandSide) -> Self {
        match side {
            HandSide::Left => DetectionClass::IdleLeftHand,
            HandSide::Right => DetectionClass::IdleRightHand,
        }
    }
}

impl fmt::Display for DetectionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DetectionClass {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DetectionClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| TraceError::UnknownClass(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub class: DetectionClass,
    pub score: f64,
    pub crop_ref: Option<String>,
}

impl Detection {
    pub fn new(
        bbox: BoundingBox,
        class: DetectionClass,
        score: f64,
        crop_ref: Option<String>,
    ) -> Result<Self, TraceError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(TraceError::InvalidScore(score));
        }
        if class == DetectionClass::ActiveObject && crop_ref.is_none() {
            return Err(TraceError::MissingCropRef);
        }
        Ok(Self { bbox, class, score, crop_ref })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameDetections {
    pub frame_index: usize,
    pub detections: Vec<Detection>,
}

impl FrameDetections {
    pub fn new(frame_index: usize, detections: Vec<Detection>) -> Self {
        Self { frame_index, detections }
    }

    /// First hand detection (idle or active) on the given side.
    pub fn hand(&self, side: HandSide) -> Option<&Detection> {
        self.detections.iter().find(|d| d.class.hand_side() == Some(side))
    }

    /// The active-hand detection on the given side, if any.
    pub fn active_hand(&self, side: HandSide) -> Option<&Detection> {
        let class = DetectionClass::active_hand(side);
        self.detections.iter().find(|d| d.class == class)
    }

    pub fn active_objects(&self) -> impl Iterator<Item = &Detection> {
        self.detections.iter().filter(|d| d.class == DetectionClass::ActiveObject)
    }

    /// The active object paired with this side's active hand: the one with the
    /// largest positive IOU against the hand box (first wins on ties).
    pub fn paired_object(&self, side: HandSide) -> Option<&Detection> {
        let hand = self.active_hand(side)?;
        let mut best: Option<(&Detection, f64)> = None;
        for obj in self.active_objects() {
            let overlap = iou(&hand.bbox, &obj.bbox);
            if overlap > 0.0 && best.is_none_or(|(_, b)| overlap > b) {
                best = Some((obj, overlap));
            }
        }
        best.map(|(d, _)| d)
    }
}

/// Ordering used when several detections compete for one slot: higher score
/// first, lower `x_min` on equal scores.
fn preference(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.bbox.x_min.total_cmp(&b.bbox.x_min))
}

/// Applies the score cut and the per-frame cardinality limits: one hand per
/// side (idle and active variants counted together) and at most two active
/// objects. Surviving detections keep their original relative order.
pub fn canonicalize_frame(frame: &FrameDetections, min_score: f64) -> FrameDetections {
    let passing: Vec<(usize, &Detection)> = frame
        .detections
        .iter()
        .enumerate()
        .filter(|(_, d)| d.score >= min_score)
        .collect();

    let best_of = |pred: &dyn Fn(&Detection) -> bool, limit: usize| -> Vec<usize> {
        let mut group: Vec<(usize, &Detection)> = passing.iter().copied().filter(|(_, d)| pred(d)).collect();
        group.sort_by(|(ia, a), (ib, b)| preference(a, b).then(ia.cmp(ib)));
        group.into_iter().take(limit).map(|(i, _)| i).collect()
    };

    let mut keep = best_of(&|d| d.class.hand_side() == Some(HandSide::Left), 1);
    keep.extend(best_of(&|d| d.class.hand_side() == Some(HandSide::Right), 1));
    keep.extend(best_of(&|d| d.class == DetectionClass::ActiveObject, 2));
    keep.extend(
        passing
            .iter()
            .filter(|(_, d)| d.class == DetectionClass::NormalObject)
            .map(|(i, _)| *i),
    );
    keep.sort_unstable();

    FrameDetections {
        frame_index: frame.frame_index,
        detections: keep.into_iter().map(|i| frame.detections[i].clone()).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoTrace {
    pub video_id: String,
    pub fps: f64,
    pub frame_count: usize,
    /// Sorted by `frame_index`; indices absent here had no detections.
    pub frames: Vec<FrameDetections>,
}

impl VideoTrace {
    pub fn new(
        video_id: impl Into<String>,
        fps: f64,
        frame_count: usize,
        mut frames: Vec<FrameDetections>,
    ) -> Result<Self, TraceError> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(TraceError::InvalidFps(fps));
        }
        frames.sort_by_key(|f| f.frame_index);
        for pair in frames.windows(2) {
            if pair[0].frame_index == pair[1].frame_index {
                return Err(TraceError::DuplicateFrame { line: 0, frame: pair[1].frame_index });
            }
        }
        if let Some(last) = frames.last() {
            if last.frame_index >= frame_count {
                return Err(TraceError::Malformed {
                    line: 0,
                    reason: format!("frame {} outside frame_count {}", last.frame_index, frame_count),
                });
            }
        }
        Ok(Self { video_id: video_id.into(), fps, frame_count, frames })
    }

    pub fn frame(&self, index: usize) -> Option<&FrameDetections> {
        self.frames
            .binary_search_by_key(&index, |f| f.frame_index)
            .ok()
            .map(|pos| &self.frames[pos])
    }

    pub fn canonicalize(&self, min_score: f64) -> VideoTrace {
        VideoTrace {
            video_id: self.video_id.clone(),
            fps: self.fps,
            frame_count: self.frame_count,
            frames: self.frames.iter().map(|f| canonicalize_frame(f, min_score)).collect(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireHeader {
    #[serde(default)]
    video_id: String,
    fps: f64,
    frame_count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct WireDetection {
    class: String,
    score: f64,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    #[serde(default)]
    crop_ref: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct WireRecord {
    frame: usize,
    detections: Vec<WireDetection>,
}

impl WireDetection {
    fn into_detection(self) -> Result<Detection, TraceError> {
        let [x0, y0, x1, y1] = self.bbox;
        let bbox = BoundingBox::new(x0, y0, x1, y1)?;
        Detection::new(bbox, self.class.parse()?, self.score, self.crop_ref)
    }
}

/// Reads a JSONL trace. Frames come back sorted; detections are kept as
/// written (no canonicalization). Blank lines are ignored.
pub fn parse_trace<R: BufRead>(reader: R) -> Result<VideoTrace, TraceError> {
    let mut header: Option<WireHeader> = None;
    let mut frames: Vec<FrameDetections> = Vec::new();
    let mut seen = std::collections::HashMap::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| TraceError::Malformed { line: line_no, reason };
        let Some(h) = &header else {
            let parsed: WireHeader = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
            if !(parsed.fps.is_finite() && parsed.fps > 0.0) {
                return Err(TraceError::InvalidFps(parsed.fps));
            }
            header = Some(parsed);
            continue;
        };
        let record: WireRecord = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        if record.frame >= h.frame_count {
            return Err(malformed(format!("frame {} outside frame_count {}", record.frame, h.frame_count)));
        }
        if seen.insert(record.frame, line_no).is_some() {
            return Err(TraceError::DuplicateFrame { line: line_no, frame: record.frame });
        }
        let detections = record
            .detections
            .into_iter()
            .map(WireDetection::into_detection)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| malformed(e.to_string()))?;
        frames.push(FrameDetections { frame_index: record.frame, detections });
    }

    let header = header.ok_or(TraceError::MissingHeader)?;
    frames.sort_by_key(|f| f.frame_index);
    Ok(VideoTrace { video_id: header.video_id, fps: header.fps, frame_count: header.frame_count, frames })
}

pub fn parse_trace_str(text: &str) -> Result<VideoTrace, TraceError> {
    parse_trace(text.as_bytes())
}

/// Writes a trace in the JSONL wire format. Floats use the shortest
/// round-tripping representation so parse → write → parse is lossless.
pub fn write_trace<W: Write>(trace: &VideoTrace, mut out: W) -> Result<(), TraceError> {
    let header = WireHeader { video_id: trace.video_id.clone(), fps: trace.fps, frame_count: trace.frame_count };
    serde_json::to_writer(&mut out, &header).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    for frame in &trace.frames {
        let record = WireRecord {
            frame: frame.frame_index,
            detections: frame
                .detections
                .iter()
                .map(|d| WireDetection {
                    class: d.class.as_str().to_string(),
                    score: d.score,
                    bbox: d.bbox.to_array(),
                    crop_ref: d.crop_ref.clone(),
                })
                .collect(),
        };
        serde_json::to_writer(&mut out, &record).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn trace_to_string(trace: &VideoTrace) -> String {
    let mut buf = Vec::new();
    write_trace(trace, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(x0: f64, y0: f64, x1: f64, y1: f64) -> BoundingBox {
        BoundingBox::new(x0, y0, x1, y1).unwrap()
    }

    fn det(class: DetectionClass, score: f64, x0: f64) -> Detection {
        let crop = (class == DetectionClass::ActiveObject).then(|| format!("c{x0}"));
        Detection::new(bx(x0, 0.0, x0 + 10.0, 10.0), class, score, crop).unwrap()
    }

    /// Counts unit cells of the integer lattice covered by each box.
    fn lattice_iou(a: [i64; 4], b: [i64; 4]) -> f64 {
        let lo = a[0].min(b[0]).min(a[1]).min(b[1]);
        let hi = a[2].max(b[2]).max(a[3]).max(b[3]);
        let inside = |r: [i64; 4], x: i64, y: i64| x >= r[0] && x < r[2] && y >= r[1] && y < r[3];
        let (mut inter, mut union) = (0u64, 0u64);
        for x in lo..hi {
            for y in lo..hi {
                let (ia, ib) = (inside(a, x, y), inside(b, x, y));
                inter += (ia && ib) as u64;
                union += (ia || ib) as u64;
            }
        }
        inter as f64 / union as f64
    }

    #[test]
    fn iou_examples() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bx(20.0, 20.0, 30.0, 30.0)), 0.0);
        // touching edges share no area
        assert_eq!(iou(&a, &bx(10.0, 0.0, 20.0, 10.0)), 0.0);
        let oracle = lattice_iou([0, 0, 10, 10], [5, 5, 15, 15]);
        assert_eq!(oracle, 25.0 / 175.0);
        assert!((iou(&a, &bx(5.0, 5.0, 15.0, 15.0)) - oracle).abs() < 1e-15);
    }

    #[test]
    fn box_invariants() {
        assert!(BoundingBox::new(5.0, 0.0, 1.0, 3.0).is_err());
        assert!(BoundingBox::new(0.0, 0.0, 0.0, 3.0).is_err());
        assert!(BoundingBox::new(-1.0, 0.0, 1.0, 3.0).is_err());
        assert!(BoundingBox::new(0.0, 0.0, f64::INFINITY, 3.0).is_err());
    }

    #[test]
    fn detection_requires_crop_for_active_object() {
        let b = bx(0.0, 0.0, 1.0, 1.0);
        assert!(matches!(
            Detection::new(b, DetectionClass::ActiveObject, 0.9, None),
            Err(TraceError::MissingCropRef)
        ));
        assert!(Detection::new(b, DetectionClass::NormalObject, 1.2, None).is_err());
    }

    #[test]
    fn class_names_are_stable() {
        for c in DetectionClass::ALL {
            assert_eq!(c.as_str().parse::<DetectionClass>().unwrap(), c);
            assert_eq!(serde_json::to_string(&c).unwrap(), format!("\"{}\"", c.as_str()));
        }
        assert!("hand".parse::<DetectionClass>().is_err());
    }

    #[test]
    fn canonicalize_keeps_best_hand() {
        let frame = FrameDetections::new(
            0,
            vec![det(DetectionClass::IdleLeftHand, 0.9, 0.0), det(DetectionClass::IdleLeftHand, 0.7, 50.0)],
        );
        let out = canonicalize_frame(&frame, 0.5);
        assert_eq!(out.detections.len(), 1);
        assert_eq!(out.detections[0].score, 0.9);
    }

    #[test]
    fn canonicalize_counts_idle_and_active_together() {
        let frame = FrameDetections::new(
            0,
            vec![det(DetectionClass::IdleRightHand, 0.85, 0.0), det(DetectionClass::ActiveRightHand, 0.95, 50.0)],
        );
        let out = canonicalize_frame(&frame, 0.8);
        assert_eq!(out.detections.len(), 1);
        assert_eq!(out.detections[0].class, DetectionClass::ActiveRightHand);
    }

    #[test]
    fn canonicalize_top_two_objects() {
        let frame = FrameDetections::new(
            3,
            vec![
                det(DetectionClass::ActiveObject, 0.7, 0.0),
                det(DetectionClass::ActiveObject, 0.9, 20.0),
                det(DetectionClass::ActiveObject, 0.8, 40.0),
            ],
        );
        let out = canonicalize_frame(&frame, 0.0);
        let scores: Vec<f64> = out.detections.iter().map(|d| d.score).collect();
        assert_eq!(scores, vec![0.9, 0.8]);
        assert_eq!(out.frame_index, 3);
    }

    #[test]
    fn canonicalize_drops_everything_below_threshold() {
        let frame = FrameDetections::new(
            0,
            vec![det(DetectionClass::ActiveLeftHand, 0.79, 0.0), det(DetectionClass::NormalObject, 0.5, 20.0)],
        );
        assert!(canonicalize_frame(&frame, DEFAULT_MIN_SCORE).detections.is_empty());
    }

    #[test]
    fn canonicalize_tie_prefers_lower_x_min() {
        let frame = FrameDetections::new(
            0,
            vec![det(DetectionClass::IdleLeftHand, 0.9, 80.0), det(DetectionClass::ActiveLeftHand, 0.9, 10.0)],
        );
        let out = canonicalize_frame(&frame, 0.8);
        assert_eq!(out.detections[0].bbox.x_min(), 10.0);
    }

    #[test]
    fn parse_empty_trace() {
        let t = parse_trace_str("{\"video_id\":\"v\",\"fps\":30,\"frame_count\":0}\n").unwrap();
        assert_eq!(t.frames.len(), 0);
        assert_eq!(t.fps, 30.0);
        assert!(matches!(parse_trace_str(""), Err(TraceError::MissingHeader)));
    }

    #[test]
    fn parse_single_detection() {
        let text = "{\"video_id\":\"v\",\"fps\":30,\"frame_count\":5}\n\
            {\"frame\":2,\"detections\":[{\"class\":\"active_left_hand\",\"score\":0.9,\"box\":[1,2,3,4],\"crop_ref\":null}]}\n";
        let t = parse_trace_str(text).unwrap();
        assert_eq!(t.frames.len(), 1);
        assert_eq!(t.frames[0].detections[0].class, DetectionClass::ActiveLeftHand);
        assert_eq!(t.frame(2).unwrap().detections.len(), 1);
        assert!(t.frame(1).is_none());
    }

    #[test]
    fn parse_errors_report_lines() {
        let bad_box = "{\"video_id\":\"v\",\"fps\":30,\"frame_count\":5}\n\
            {\"frame\":0,\"detections\":[]}\n\
            {\"frame\":1,\"detections\":[{\"class\":\"normal_object\",\"score\":0.9,\"box\":[9,0,3,4]}]}\n";
        assert!(matches!(parse_trace_str(bad_box), Err(TraceError::Malformed { line: 3, .. })));

        let dup = "{\"video_id\":\"v\",\"fps\":30,\"frame_count\":5}\n\
            {\"frame\":1,\"detections\":[]}\n{\"frame\":1,\"detections\":[]}\n";
        assert!(matches!(parse_trace_str(dup), Err(TraceError::DuplicateFrame { line: 3, frame: 1 })));

        let fps = "{\"video_id\":\"v\",\"fps\":0,\"frame_count\":5}\n";
        assert!(matches!(parse_trace_str(fps), Err(TraceError::InvalidFps(_))));

        let garbage = "{\"video_id\":\"v\",\"fps\":30,\"frame_count\":5}\nnot json\n";
        assert!(matches!(parse_trace_str(garbage), Err(TraceError::Malformed { line: 2, .. })));

        let range = "{\"video_id\":\"v\",\"fps\":30,\"frame_count\":5}\n{\"frame\":5,\"detections\":[]}\n";
        assert!(matches!(parse_trace_str(range), Err(TraceError::Malformed { line: 2, .. })));
    }

    #[test]
    fn parse_sorts_frames() {
        let text = "{\"video_id\":\"v\",\"fps\":25,\"frame_count\":9}\n\
            {\"frame\":7,\"detections\":[]}\n{\"frame\":2,\"detections\":[]}\n";
        let t = parse_trace_str(text).unwrap();
        let idx: Vec<usize> = t.frames.iter().map(|f| f.frame_index).collect();
        assert_eq!(idx, vec![2, 7]);
    }

    fn arb_box() -> impl Strategy<Value = BoundingBox> {
        (0.0..500.0f64, 0.0..500.0f64, 0.5..200.0f64, 0.5..200.0f64)
            .prop_map(|(x, y, w, h)| BoundingBox::new(x, y, x + w, y + h).unwrap())
    }

    fn arb_detection() -> impl Strategy<Value = Detection> {
        (arb_box(), 0..6usize, 0.0..=1.0f64, proptest::option::of("[a-z]{1,6}")).prop_map(|(b, c, s, crop)| {
            let class = DetectionClass::ALL[c];
            let crop = if class == DetectionClass::ActiveObject { Some(crop.unwrap_or_else(|| "x".into())) } else { crop };
            Detection::new(b, class, s, crop).unwrap()
        })
    }

    fn arb_trace() -> impl Strategy<Value = VideoTrace> {
        (1.0..120.0f64, proptest::collection::btree_map(0..50usize, proptest::collection::vec(arb_detection(), 0..6), 0..10))
            .prop_map(|(fps, frames)| {
                let frames = frames.into_iter().map(|(i, d)| FrameDetections::new(i, d)).collect();
                VideoTrace::new("prop", fps, 50, frames).unwrap()
            })
    }

    proptest! {
        #[test]
        fn iou_symmetric(a in arb_box(), b in arb_box()) {
            prop_assert_eq!(iou(&a, &b), iou(&b, &a));
            let v = iou(&a, &b);
            prop_assert!((0.0..=1.0).contains(&v));
        }

        #[test]
        fn iou_translation_and_scale_invariant(a in arb_box(), b in arb_box(), dx in 0.0..300.0f64, dy in 0.0..300.0f64, s in 0.1..10.0f64) {
            let map = |r: &BoundingBox| BoundingBox::new(
                r.x_min() * s + dx, r.y_min() * s + dy, r.x_max() * s + dx, r.y_max() * s + dy,
            ).unwrap();
            prop_assert!((iou(&a, &b) - iou(&map(&a), &map(&b))).abs() < 1e-9);
        }

        #[test]
        fn canonicalize_idempotent(dets in proptest::collection::vec(arb_detection(), 0..12), min in 0.0..1.0f64) {
            let frame = FrameDetections::new(4, dets);
            let once = canonicalize_frame(&frame, min);
            prop_assert_eq!(&canonicalize_frame(&once, min), &once);
            let lefts = once.detections.iter().filter(|d| d.class.hand_side() == Some(HandSide::Left)).count();
            let rights = once.detections.iter().filter(|d| d.class.hand_side() == Some(HandSide::Right)).count();
            let objs = once.active_objects().count();
            prop_assert!(lefts <= 1 && rights <= 1 && objs <= 2);
            prop_assert!(once.detections.iter().all(|d| d.score >= min));
        }

        #[test]
        fn write_then_parse_is_identity(trace in arb_trace()) {
            let text = trace_to_string(&trace);
            let back = parse_trace_str(&text).unwrap();
            prop_assert_eq!(&back, &trace);
            prop_assert_eq!(trace_to_string(&back), text);
        }
    }
}
