//! Fusion of the left- and right-hand clip streams into one step list.
//!
//! Overlapping left/right clips whose temporal IOSA (intersection over the
//! shorter interval) reaches the threshold are merged into a single step that
//! takes the interval of the principal hand's clip. Overlaps that remain are
//! split at the overlap midpoint, with the middle frame going to the
//! principal side, so the output never overlaps.
//!
//! The principal hand is predicted from hand positions: the hand whose box
//! centre sits higher in the image on most co-detected frames wins.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsm::HandSide;
use crate::segmentation::{Clip, ClipSet};
use crate::trace::VideoTrace;

pub const DEFAULT_IOSA_THRESHOLD: f64 = 0.5;

/// Inclusive frame interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FrameInterval {
    pub start: usize,
    pub end: usize,
}

impl FrameInterval {
    pub fn new(start: usize, end: usize) -> Self {
        assert!(start <= end, "interval start {start} after end {end}");
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn intersect(&self, other: &FrameInterval) -> Option<FrameInterval> {
        let start = self.start.max(other.start);
        let end = self.end.min(other.end);
        (start <= end).then_some(FrameInterval { start, end })
    }

    pub fn contains(&self, other: &FrameInterval) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

impl From<&Clip> for FrameInterval {
    fn from(c: &Clip) -> Self {
        FrameInterval { start: c.start_frame, end: c.end_frame }
    }
}

/// `|a ∩ b| / min(|a|, |b|)` over inclusive frame counts.
pub fn temporal_iosa(a: FrameInterval, b: FrameInterval) -> f64 {
    match a.intersect(&b) {
        Some(i) => i.len() as f64 / a.len().min(b.len()) as f64,
        None => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepSource {
    Left,
    Right,
    Both,
}

impl From<HandSide> for StepSource {
    fn from(h: HandSide) -> Self {
        match h {
            HandSide::Left => StepSource::Left,
            HandSide::Right => StepSource::Right,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepSegment {
    pub start_frame: usize,
    pub end_frame: usize,
    #[serde(default)]
    pub source_hand: Option<StepSource>,
    #[serde(default)]
    pub label: Option<String>,
}

impl StepSegment {
    pub fn new(start_frame: usize, end_frame: usize, source_hand: Option<StepSource>) -> Self {
        Self { start_frame, end_frame, source_hand, label: None }
    }

    pub fn interval(&self) -> FrameInterval {
        FrameInterval { start: self.start_frame, end: self.end_frame }
    }

    pub fn len_frames(&self) -> usize {
        self.end_frame - self.start_frame + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSegmentation {
    pub video_id: String,
    pub fps: f64,
    pub segments: Vec<StepSegment>,
}

impl StepSegmentation {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::Format { what: "step segmentation", reason });
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return bad(format!("fps {} must be positive", self.fps));
        }
        for s in &self.segments {
            if s.start_frame > s.end_frame {
                return bad(format!("segment start {} after end {}", s.start_frame, s.end_frame));
            }
        }
        for w in self.segments.windows(2) {
            if w[0].end_frame >= w[1].start_frame {
                return bad(format!(
                    "segments [{}, {}] and [{}, {}] overlap or are out of order",
                    w[0].start_frame, w[0].end_frame, w[1].start_frame, w[1].end_frame
                ));
            }
        }
        Ok(())
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let seg: StepSegmentation = serde_json::from_reader(reader)
            .map_err(|e| Error::Format { what: "step segmentation", reason: e.to_string() })?;
        seg.validate()?;
        Ok(seg)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Self::from_reader(text.as_bytes())
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("step segmentation serializes");
        s.push('\n');
        s
    }

    /// Largest end frame plus one, i.e. the frame span the segments need.
    pub fn frame_span(&self) -> usize {
        self.segments.iter().map(|s| s.end_frame + 1).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttentionVerdict {
    pub principal: HandSide,
    pub confidence: f64,
    /// Set when the positional rule could not decide (no co-detected frames
    /// or an even split) and the configured fallback hand was used.
    pub fallback_used: bool,
}

/// Principal hand over the frames of `window`: per co-detected frame the hand
/// whose box centre has the smaller y wins; the majority winner is principal
/// with confidence = its share of co-detected frames.
pub fn attention_over(trace: &VideoTrace, window: FrameInterval, fallback: HandSide) -> AttentionVerdict {
    let (mut frames, mut left_higher, mut right_higher) = (0usize, 0usize, 0usize);
    for t in window.start..=window.end {
        let Some(frame) = trace.frame(t) else { continue };
        let (Some(l), Some(r)) = (frame.hand(HandSide::Left), frame.hand(HandSide::Right)) else {
            continue;
        };
        frames += 1;
        let (ly, ry) = (l.bbox.center().1, r.bbox.center().1);
        if ly < ry {
            left_higher += 1;
        } else if ry < ly {
            right_higher += 1;
        }
    }
    if frames == 0 {
        return AttentionVerdict { principal: fallback, confidence: 0.0, fallback_used: true };
    }
    let (principal, votes, fallback_used) = if left_higher > right_higher {
        (HandSide::Left, left_higher, false)
    } else if right_higher > left_higher {
        (HandSide::Right, right_higher, false)
    } else {
        let votes = if fallback == HandSide::Left { left_higher } else { right_higher };
        (fallback, votes, true)
    };
    AttentionVerdict { principal, confidence: votes as f64 / frames as f64, fallback_used }
}

/// Attention between two temporally overlapping clips of different hands,
/// judged over their overlap. Without overlap the fallback applies.
pub fn predict_attention(trace: &VideoTrace, a: &Clip, b: &Clip, fallback: HandSide) -> AttentionVerdict {
    match FrameInterval::from(a).intersect(&FrameInterval::from(b)) {
        Some(overlap) if a.hand != b.hand => attention_over(trace, overlap, fallback),
        _ => AttentionVerdict { principal: fallback, confidence: 0.0, fallback_used: true },
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionParams {
    pub iosa_threshold: f64,
    pub fallback: HandSide,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self { iosa_threshold: DEFAULT_IOSA_THRESHOLD, fallback: HandSide::Right }
    }
}

/// A fused step together with the input clips it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedStep {
    pub interval: FrameInterval,
    pub source: StepSource,
    /// Hand whose clip defines the step.
    pub principal: HandSide,
    /// `(hand, index into that hand's ClipSet)` of every absorbed clip.
    pub members: Vec<(HandSide, usize)>,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }
}

/// Same as [`fuse_streams`] but keeps clip provenance for every step.
pub fn fuse_detailed(left: &ClipSet, right: &ClipSet, trace: &VideoTrace, params: FusionParams) -> Result<Vec<FusedStep>> {
    for (set, side) in [(left, HandSide::Left), (right, HandSide::Right)] {
        if set.hand != side {
            return Err(Error::Invariant(format!("expected a {side} clip set, got {}", set.hand)));
        }
        set.validate().map_err(Error::Invariant)?;
    }

    let nl = left.clips.len();
    let clip_at = |id: usize| if id < nl { &left.clips[id] } else { &right.clips[id - nl] };
    let member = |id: usize| if id < nl { (HandSide::Left, id) } else { (HandSide::Right, id - nl) };

    // Merge edges: overlapping left/right pairs at or above the IOSA threshold.
    // Ordered by IOSA (high first) then overlap position, which is a total
    // order on edges because two edges sharing a clip cannot share an overlap
    // start.
    let mut edges = Vec::new();
    for (i, l) in left.clips.iter().enumerate() {
        for (j, r) in right.clips.iter().enumerate() {
            let (li, ri) = (FrameInterval::from(l), FrameInterval::from(r));
            if let Some(overlap) = li.intersect(&ri) {
                let iosa = temporal_iosa(li, ri);
                if iosa >= params.iosa_threshold {
                    edges.push((iosa, overlap, i, j));
                }
            }
        }
    }
    edges.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)).then(a.3.cmp(&b.3)));

    let total = nl + right.clips.len();
    // a root's own clip is the one whose interval the group takes
    let mut uf = UnionFind { parent: (0..total).collect() };
    for (_, _, i, j) in edges {
        let (ra, rb) = (uf.find(i), uf.find(nl + j));
        if ra == rb {
            continue;
        }
        let verdict = predict_attention(trace, &left.clips[i], &right.clips[j], params.fallback);
        let (winner, loser) = if verdict.principal == HandSide::Left { (ra, rb) } else { (rb, ra) };
        uf.parent[loser] = winner;
    }

    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = std::collections::BTreeMap::new();
    for id in 0..total {
        let root = uf.find(id);
        groups.entry(root).or_default().push(id);
    }

    let mut pieces: Vec<FusedStep> = groups
        .into_iter()
        .map(|(root, ids)| {
            let head = clip_at(root);
            FusedStep {
                interval: FrameInterval::from(head),
                source: if ids.len() > 1 { StepSource::Both } else { head.hand.into() },
                principal: head.hand,
                members: ids.into_iter().map(member).collect(),
            }
        })
        .collect();

    resolve_overlaps(&mut pieces, trace, params.fallback)?;
    Ok(pieces)
}

/// Repeatedly takes the earliest overlapping pair and trims it apart.
fn resolve_overlaps(pieces: &mut Vec<FusedStep>, trace: &VideoTrace, fallback: HandSide) -> Result<()> {
    loop {
        pieces.sort_by(|a, b| a.interval.cmp(&b.interval).then(a.principal.cmp(&b.principal)));
        let Some((i, j)) = first_overlap(pieces) else {
            return Ok(());
        };
        if pieces[i].principal == pieces[j].principal {
            return Err(Error::Invariant(format!(
                "two {} steps overlap at [{}, {}]",
                pieces[i].principal, pieces[j].interval.start, pieces[i].interval.end
            )));
        }
        let overlap = pieces[i].interval.intersect(&pieces[j].interval).expect("pair overlaps");
        let verdict = attention_over(trace, overlap, fallback);
        let (p, q) = if pieces[i].principal == verdict.principal { (i, j) } else { (j, i) };
        let (pi, qi) = (pieces[p].interval, pieces[q].interval);

        if pi.contains(&qi) {
            pieces.remove(q);
        } else if qi.contains(&pi) {
            let mut tail = pieces[q].clone();
            let mut keep_head = false;
            if qi.start < pi.start {
                pieces[q].interval = FrameInterval::new(qi.start, pi.start - 1);
                keep_head = true;
            }
            if pi.end < qi.end {
                tail.interval = FrameInterval::new(pi.end + 1, qi.end);
                if keep_head {
                    pieces.push(tail);
                } else {
                    pieces[q] = tail;
                }
            } else if !keep_head {
                pieces.remove(q);
            }
        } else {
            // partial overlap: i starts first and ends first
            let len = overlap.len();
            let earlier_keeps = if p == i { len.div_ceil(2) } else { len / 2 };
            let split = overlap.start + earlier_keeps;
            pieces[i].interval.end = split - 1;
            pieces[j].interval.start = split;
        }
    }
}

/// With pieces sorted by start, any overlap shows up between neighbours.
fn first_overlap(pieces: &[FusedStep]) -> Option<(usize, usize)> {
    pieces
        .windows(2)
        .position(|w| w[1].interval.start <= w[0].interval.end)
        .map(|i| (i, i + 1))
}

/// Fuses the two hand streams into an ordered, non-overlapping step list.
pub fn fuse_streams(left: &ClipSet, right: &ClipSet, trace: &VideoTrace, params: FusionParams) -> Result<StepSegmentation> {
    let steps = fuse_detailed(left, right, trace, params)?;
    let seg = StepSegmentation {
        video_id: trace.video_id.clone(),
        fps: trace.fps,
        segments: steps
            .iter()
            .map(|s| StepSegment::new(s.interval.start, s.interval.end, Some(s.source)))
            .collect(),
    };
    seg.validate().map_err(|e| Error::Invariant(e.to_string()))?;
    Ok(seg)
}
