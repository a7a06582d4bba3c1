//! Per-hand clip extraction, short-clip filtering and similarity-driven
//! reconnection of over-segmented neighbours.

use serde::{Deserialize, Serialize};

use crate::fsm::{HandSide, HandState, HandStateTrace};
use crate::similarity::{SimilarityError, SimilarityProvider};
use crate::trace::VideoTrace;

pub const DEFAULT_MIN_DURATION_S: f64 = 0.5;
pub const DEFAULT_BOUNDARY_FRACTION: f64 = 0.2;
pub const DEFAULT_SIM_THRESHOLD: f64 = 0.5;

/// A maximal run of Active frames for one hand, inclusive on both ends.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clip {
    pub hand: HandSide,
    pub start_frame: usize,
    pub end_frame: usize,
    /// Crop refs of the object paired with this hand, one per paired frame,
    /// in frame order.
    #[serde(rename = "crop_refs")]
    pub object_crops: Vec<String>,
}

impl Clip {
    pub fn new(hand: HandSide, start_frame: usize, end_frame: usize) -> Self {
        assert!(start_frame <= end_frame, "clip start {start_frame} after end {end_frame}");
        Self { hand, start_frame, end_frame, object_crops: Vec::new() }
    }

    pub fn with_crops(mut self, crops: impl IntoIterator<Item = impl Into<String>>) -> Self {
        self.object_crops = crops.into_iter().map(Into::into).collect();
        self
    }

    pub fn len_frames(&self) -> usize {
        self.end_frame - self.start_frame + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipSet {
    pub hand: HandSide,
    pub fps: f64,
    pub clips: Vec<Clip>,
}

impl ClipSet {
    pub fn new(hand: HandSide, fps: f64, clips: Vec<Clip>) -> Self {
        Self { hand, fps, clips }
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    /// Checks ordering, disjointness and hand consistency.
    pub fn validate(&self) -> Result<(), String> {
        if let Some(c) = self.clips.iter().find(|c| c.hand != self.hand) {
            return Err(format!("clip [{}, {}] belongs to the {} hand", c.start_frame, c.end_frame, c.hand));
        }
        if let Some(c) = self.clips.iter().find(|c| c.start_frame > c.end_frame) {
            return Err(format!("clip start {} after end {}", c.start_frame, c.end_frame));
        }
        for w in self.clips.windows(2) {
            if w[0].end_frame >= w[1].start_frame {
                return Err(format!(
                    "clips [{}, {}] and [{}, {}] overlap or are out of order",
                    w[0].start_frame, w[0].end_frame, w[1].start_frame, w[1].end_frame
                ));
            }
        }
        Ok(())
    }

    /// Rebuilds the per-frame state sequence these clips describe.
    pub fn to_states(&self, frame_count: usize) -> Vec<HandState> {
        let mut states = vec![HandState::Idle; frame_count];
        for c in &self.clips {
            for s in &mut states[c.start_frame..=c.end_frame.min(frame_count.saturating_sub(1))] {
                *s = HandState::Active;
            }
        }
        states
    }
}

/// Which side of the threshold counts as "same object".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimilarityPolarity {
    /// Scores are similarities: merge when the mean is at least the threshold.
    #[default]
    Similarity,
    /// Scores are distances: merge when the mean is below the threshold.
    Distance,
}

impl SimilarityPolarity {
    pub fn same_object(self, mean: f64, threshold: f64) -> bool {
        match self {
            SimilarityPolarity::Similarity => mean >= threshold,
            SimilarityPolarity::Distance => mean < threshold,
        }
    }
}

/// Maximal Active runs as inclusive `(start, end)` pairs.
pub fn active_runs(states: &[HandState]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (t, s) in states.iter().enumerate() {
        match (s, start) {
            (HandState::Active, None) => start = Some(t),
            (HandState::Idle, Some(s0)) => {
                runs.push((s0, t - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s0) = start {
        runs.push((s0, states.len() - 1));
    }
    runs
}

/// One clip per maximal Active run. Object crops are collected from the
/// frames of `trace` (canonicalized) where this hand is paired with an
/// active object.
pub fn extract_clips(states: &HandStateTrace, trace: &VideoTrace) -> ClipSet {
    let hand = states.hand;
    let clips = active_runs(&states.states)
        .into_iter()
        .map(|(start, end)| {
            let crops: Vec<String> = (start..=end)
                .filter_map(|t| trace.frame(t))
                .filter_map(|f| f.paired_object(hand))
                .filter_map(|d| d.crop_ref.clone())
                .collect();
            if crops.is_empty() {
                log::warn!("{hand} clip [{start}, {end}] has no paired object crops");
            }
            Clip { hand, start_frame: start, end_frame: end, object_crops: crops }
        })
        .collect();
    ClipSet { hand, fps: trace.fps, clips }
}

/// Drops clips shorter than `min_duration_s` seconds.
pub fn filter_short_clips(clips: &ClipSet, min_duration_s: f64) -> ClipSet {
    ClipSet {
        hand: clips.hand,
        fps: clips.fps,
        clips: clips
            .clips
            .iter()
            .filter(|c| c.len_frames() as f64 / clips.fps >= min_duration_s)
            .cloned()
            .collect(),
    }
}

/// Number of boundary crops taken from a list of `len` crops.
fn boundary_count(len: usize, fraction: f64) -> usize {
    // the epsilon keeps e.g. 0.2 * 15 = 3.0000000000000004 from rounding up to 4
    let raw = (fraction * len as f64 - 1e-9).ceil();
    (raw.max(1.0) as usize).min(len)
}

/// Mean pairwise similarity between the last `ceil(f * |a|)` crops of `a`
/// and the first `ceil(f * |b|)` crops of `b`.
pub fn clip_pair_similarity(
    a: &Clip,
    b: &Clip,
    provider: &dyn SimilarityProvider,
    boundary_fraction: f64,
) -> Result<f64, SimilarityError> {
    boundary_similarity(&a.object_crops, &b.object_crops, provider, boundary_fraction)
}

fn boundary_similarity(
    earlier: &[String],
    later: &[String],
    provider: &dyn SimilarityProvider,
    boundary_fraction: f64,
) -> Result<f64, SimilarityError> {
    if earlier.is_empty() || later.is_empty() {
        return Err(SimilarityError::NoCrops);
    }
    let x = boundary_count(earlier.len(), boundary_fraction);
    let y = boundary_count(later.len(), boundary_fraction);
    let tail = &earlier[earlier.len() - x..];
    let head = &later[..y];
    let mut total = 0.0;
    for ci in tail {
        for cj in head {
            total += provider.similarity(ci, cj)?;
        }
    }
    Ok(total / (x * y) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconnectParams {
    pub sim_threshold: f64,
    pub boundary_fraction: f64,
    pub polarity: SimilarityPolarity,
}

impl Default for ReconnectParams {
    fn default() -> Self {
        Self {
            sim_threshold: DEFAULT_SIM_THRESHOLD,
            boundary_fraction: DEFAULT_BOUNDARY_FRACTION,
            polarity: SimilarityPolarity::Similarity,
        }
    }
}

/// Walks adjacent clips left to right and merges a pair when their boundary
/// crops are judged the same object. A merged clip spans both inputs (the gap
/// between them included) and is compared with the next clip through the
/// right-boundary crops of the clip it absorbed last.
///
/// Pairs where either side has no crops are never merged. Provider failures
/// (unknown refs, unreadable crops) are returned as errors.
pub fn reconnect_clips(
    clips: &ClipSet,
    provider: &dyn SimilarityProvider,
    params: ReconnectParams,
) -> Result<ClipSet, SimilarityError> {
    let mut out: Vec<Clip> = Vec::with_capacity(clips.clips.len());
    // crops of the original clip that currently ends the last merged clip
    let mut last_original: Option<&[String]> = None;

    for clip in &clips.clips {
        let merge = match (out.last(), last_original) {
            (Some(_), Some(prev_crops)) => {
                match boundary_similarity(prev_crops, &clip.object_crops, provider, params.boundary_fraction) {
                    Ok(mean) => params.polarity.same_object(mean, params.sim_threshold),
                    Err(SimilarityError::NoCrops) => false,
                    Err(e) => return Err(e),
                }
            }
            _ => false,
        };
        if merge {
            let current = out.last_mut().expect("merge implies a previous clip");
            current.end_frame = clip.end_frame;
            current.object_crops.extend(clip.object_crops.iter().cloned());
        } else {
            out.push(clip.clone());
        }
        last_original = Some(&clip.object_crops);
    }

    Ok(ClipSet { hand: clips.hand, fps: clips.fps, clips: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fsm::WindowParams;
    use crate::similarity::{ConstantProvider, MatrixProvider, SimilarityMatrixFile};
    use proptest::prelude::*;
    use HandState::{Active as A, Idle as I};

    fn states(hand: HandSide, s: Vec<HandState>) -> HandStateTrace {
        HandStateTrace::from_states(hand, s, WindowParams { window_len: 5, threshold: 3 })
    }

    fn empty_trace(n: usize) -> VideoTrace {
        VideoTrace::new("v", 30.0, n, vec![]).unwrap()
    }

    fn spans(set: &ClipSet) -> Vec<(usize, usize)> {
        set.clips.iter().map(|c| (c.start_frame, c.end_frame)).collect()
    }

    /// Run-length encoding computed independently of `active_runs`.
    fn rle_runs(s: &[HandState]) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = Vec::new();
        for (t, st) in s.iter().enumerate() {
            if *st == A {
                match out.last_mut() {
                    Some(r) if r.1 + 1 == t => r.1 = t,
                    _ => out.push((t, t)),
                }
            }
        }
        out
    }

    #[test]
    fn extract_examples() {
        let trace = empty_trace(10);
        assert!(extract_clips(&states(HandSide::Left, vec![I; 10]), &trace).is_empty());

        let s = vec![I, I, A, A, A, I, A, I];
        let set = extract_clips(&states(HandSide::Left, s.clone()), &trace);
        assert_eq!(spans(&set), rle_runs(&s));
        assert_eq!(spans(&set), vec![(2, 4), (6, 6)]);

        let set = extract_clips(&states(HandSide::Right, vec![A; 10]), &trace);
        assert_eq!(spans(&set), vec![(0, 9)]);
        assert_eq!(set.hand, HandSide::Right);
    }

    #[test]
    fn filter_half_second_boundary() {
        let set = ClipSet::new(
            HandSide::Left,
            30.0,
            vec![Clip::new(HandSide::Left, 0, 13), Clip::new(HandSide::Left, 20, 34), Clip::new(HandSide::Left, 40, 40)],
        );
        assert_eq!(spans(&filter_short_clips(&set, 0.5)), vec![(20, 34)]);
        assert_eq!(filter_short_clips(&set, 0.0), set);
    }

    fn four_crop_provider() -> MatrixProvider {
        // a1,a2 (end of first clip) vs b1,b2 (start of second)
        let refs = ["a1", "a2", "b1", "b2"];
        let m = vec![
            vec![1.0, 0.5, 0.9, 0.7],
            vec![0.5, 1.0, 0.5, 0.3],
            vec![0.9, 0.5, 1.0, 0.5],
            vec![0.7, 0.3, 0.5, 1.0],
        ];
        MatrixProvider::new(SimilarityMatrixFile { crop_refs: refs.iter().map(|s| s.to_string()).collect(), matrix: m })
            .unwrap()
    }

    #[test]
    fn pair_similarity_examples() {
        let c = ConstantProvider::new(0.8).unwrap();
        let a = Clip::new(HandSide::Left, 0, 9).with_crops((0..7).map(|i| format!("a{i}")));
        let b = Clip::new(HandSide::Left, 20, 29).with_crops((0..3).map(|i| format!("b{i}")));
        assert!((clip_pair_similarity(&a, &b, &c, 0.2).unwrap() - 0.8).abs() < 1e-12);

        let p = four_crop_provider();
        let a = Clip::new(HandSide::Left, 0, 9).with_crops(["a1", "a2"]);
        let b = Clip::new(HandSide::Left, 20, 29).with_crops(["b1", "b2"]);
        assert!((clip_pair_similarity(&a, &b, &p, 1.0).unwrap() - 0.6).abs() < 1e-12);

        let a = Clip::new(HandSide::Left, 0, 9).with_crops(["a1"]);
        let b = Clip::new(HandSide::Left, 20, 29).with_crops(["b2"]);
        assert_eq!(clip_pair_similarity(&a, &b, &p, 1.0).unwrap(), 0.7);

        let empty = Clip::new(HandSide::Left, 40, 49);
        assert!(matches!(clip_pair_similarity(&a, &empty, &p, 0.2), Err(SimilarityError::NoCrops)));
    }

    #[test]
    fn boundary_counts_use_ceiling() {
        assert_eq!(boundary_count(1, 0.2), 1);
        assert_eq!(boundary_count(5, 0.2), 1);
        assert_eq!(boundary_count(6, 0.2), 2);
        assert_eq!(boundary_count(15, 0.2), 3);
        assert_eq!(boundary_count(16, 0.2), 4);
        assert_eq!(boundary_count(10, 1.0), 10);
    }

    fn crops_clip(start: usize, end: usize, prefix: &str) -> Clip {
        Clip::new(HandSide::Left, start, end).with_crops((start..=end).map(|t| format!("{prefix}{t}")))
    }

    #[test]
    fn reconnect_examples() {
        let set = ClipSet::new(HandSide::Left, 30.0, vec![crops_clip(0, 10, "x"), crops_clip(20, 30, "y")]);
        let low = ConstantProvider::new(0.1).unwrap();
        let high = ConstantProvider::new(0.9).unwrap();
        let params = ReconnectParams::default();

        assert_eq!(reconnect_clips(&set, &low, params).unwrap(), set);
        let merged = reconnect_clips(&set, &high, params).unwrap();
        assert_eq!(spans(&merged), vec![(0, 30)]);
        assert_eq!(merged.clips[0].object_crops.len(), 22);
        assert_eq!(merged.clips[0].object_crops[11], "y20");

        let three = ClipSet::new(
            HandSide::Left,
            30.0,
            vec![crops_clip(0, 10, "x"), crops_clip(20, 30, "y"), crops_clip(40, 50, "z")],
        );
        assert_eq!(spans(&reconnect_clips(&three, &high, params).unwrap()), vec![(0, 50)]);

        // distance polarity flips the verdict
        let dist = ReconnectParams { polarity: SimilarityPolarity::Distance, ..params };
        assert_eq!(spans(&reconnect_clips(&set, &low, dist).unwrap()), vec![(0, 30)]);
        assert_eq!(reconnect_clips(&set, &high, dist).unwrap(), set);
    }

    #[test]
    fn reconnect_skips_cropless_pairs_and_reports_provider_errors() {
        let set = ClipSet::new(
            HandSide::Right,
            30.0,
            vec![
                Clip::new(HandSide::Right, 0, 10).with_crops(["a1"]),
                Clip::new(HandSide::Right, 20, 30),
                Clip::new(HandSide::Right, 40, 50).with_crops(["b1"]),
            ],
        );
        let high = ConstantProvider::new(0.9).unwrap();
        // the middle clip has no crops, so neither neighbour links through it
        assert_eq!(reconnect_clips(&set, &high, ReconnectParams::default()).unwrap(), set);

        let p = four_crop_provider();
        let bad = ClipSet::new(
            HandSide::Right,
            30.0,
            vec![Clip::new(HandSide::Right, 0, 10).with_crops(["a1"]), Clip::new(HandSide::Right, 20, 30).with_crops(["nope"])],
        );
        assert!(matches!(
            reconnect_clips(&bad, &p, ReconnectParams::default()),
            Err(SimilarityError::UnknownCropRef(_))
        ));
    }

    #[test]
    fn cascaded_merge_uses_last_absorbed_clip() {
        // x ~ y and y ~ z only; x vs z would fail. Left-to-right chaining
        // compares (x+y) with z through y's crops.
        let refs = ["x", "y", "z"];
        let m = vec![vec![1.0, 0.9, 0.0], vec![0.9, 1.0, 0.9], vec![0.0, 0.9, 1.0]];
        let p = MatrixProvider::new(SimilarityMatrixFile { crop_refs: refs.iter().map(|s| s.to_string()).collect(), matrix: m })
            .unwrap();
        let set = ClipSet::new(
            HandSide::Left,
            30.0,
            vec![
                Clip::new(HandSide::Left, 0, 5).with_crops(["x"]),
                Clip::new(HandSide::Left, 10, 15).with_crops(["y"]),
                Clip::new(HandSide::Left, 20, 25).with_crops(["z"]),
            ],
        );
        let out = reconnect_clips(&set, &p, ReconnectParams::default()).unwrap();
        assert_eq!(spans(&out), vec![(0, 25)]);
        assert_eq!(out.clips[0].object_crops, vec!["x", "y", "z"]);
    }

    fn arb_states() -> impl Strategy<Value = Vec<HandState>> {
        proptest::collection::vec(prop_oneof![Just(A), Just(I)], 1..150)
    }

    fn arb_clipset() -> impl Strategy<Value = ClipSet> {
        (arb_states(), proptest::collection::vec(0..4usize, 150)).prop_map(|(s, objs)| {
            let mut set = extract_clips(&states(HandSide::Left, s), &empty_trace(150));
            for c in &mut set.clips {
                let obj = objs[c.start_frame];
                c.object_crops = (c.start_frame..=c.end_frame).map(|t| format!("o{obj}_{t}")).collect();
            }
            set
        })
    }

    /// Same object id prefix scores 0.9, else 0.1.
    struct PrefixProvider;

    impl SimilarityProvider for PrefixProvider {
        fn similarity(&self, a: &str, b: &str) -> Result<f64, SimilarityError> {
            Ok(if a == b {
                1.0
            } else if a.split('_').next() == b.split('_').next() {
                0.9
            } else {
                0.1
            })
        }
    }

    proptest! {
        #[test]
        fn extract_round_trips(s in arb_states()) {
            let set = extract_clips(&states(HandSide::Left, s.clone()), &empty_trace(s.len()));
            prop_assert!(set.validate().is_ok());
            prop_assert_eq!(set.to_states(s.len()), s);
        }

        #[test]
        fn filter_returns_subset(set in arb_clipset(), min in 0.0..2.0f64) {
            let out = filter_short_clips(&set, min);
            prop_assert!(out.clips.iter().all(|c| set.clips.contains(c)));
            prop_assert!(out.len() <= set.len());
        }

        #[test]
        fn reconnect_only_grows(set in arb_clipset()) {
            let out = reconnect_clips(&set, &PrefixProvider, ReconnectParams::default()).unwrap();
            prop_assert!(out.validate().is_ok());
            prop_assert!(out.len() <= set.len());
            // every input clip lies inside exactly one output clip, order kept
            let mut j = 0;
            for c in &set.clips {
                while out.clips[j].end_frame < c.start_frame {
                    j += 1;
                }
                prop_assert!(out.clips[j].start_frame <= c.start_frame && c.end_frame <= out.clips[j].end_frame);
            }
            let covered = |s: &ClipSet| s.clips.iter().map(Clip::len_frames).sum::<usize>();
            prop_assert!(covered(&out) >= covered(&set));
            let again = reconnect_clips(&set, &PrefixProvider, ReconnectParams::default()).unwrap();
            prop_assert_eq!(serde_json::to_string(&again).unwrap(), serde_json::to_string(&out).unwrap());
        }
    }
}
