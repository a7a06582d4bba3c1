//! Per-hand active/idle state control.
//!
//! Each frame gets a binary interaction score per hand (1 when that hand's
//! active-hand box overlaps an active object). A trailing window of
//! `window_len` frames is summed and the hand is Active on frames where the
//! sum reaches `threshold`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{iou, FrameDetections, VideoTrace};

#[derive(Debug, Error, PartialEq)]
pub enum FsmError {
    #[error("fps must be positive and finite, got {0}")]
    InvalidFps(f64),
    #[error("window_len and threshold must be >= 1 with threshold <= window_len (got window_len={window_len}, threshold={threshold})")]
    InvalidWindow { window_len: usize, threshold: usize },
    #[error("score series is empty")]
    EmptySeries,
    #[error("score at frame {frame} is {value}, expected 0 or 1")]
    NonBinaryScore { frame: usize, value: u8 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HandSide {
    Left,
    Right,
}

impl HandSide {
    pub const BOTH: [HandSide; 2] = [HandSide::Left, HandSide::Right];

    pub fn other(self) -> HandSide {
        match self {
            HandSide::Left => HandSide::Right,
            HandSide::Right => HandSide::Left,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            HandSide::Left => "left",
            HandSide::Right => "right",
        }
    }
}

impl fmt::Display for HandSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HandSide {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "left" => Ok(HandSide::Left),
            "right" => Ok(HandSide::Right),
            other => Err(format!("unknown hand side {other:?} (expected left or right)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HandState {
    Active,
    Idle,
}

/// How the window sum is compared against the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowComparison {
    /// Active when the sum is at least the threshold.
    #[default]
    AtLeast,
    /// Active only when the sum strictly exceeds the threshold.
    GreaterThan,
}

impl WindowComparison {
    fn passes(self, sum: usize, threshold: usize) -> bool {
        match self {
            WindowComparison::AtLeast => sum >= threshold,
            WindowComparison::GreaterThan => sum > threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowParams {
    pub window_len: usize,
    pub threshold: usize,
}

impl WindowParams {
    pub fn new(window_len: usize, threshold: usize) -> Result<Self, FsmError> {
        if window_len == 0 || threshold == 0 || threshold > window_len {
            return Err(FsmError::InvalidWindow { window_len, threshold });
        }
        Ok(Self { window_len, threshold })
    }
}

/// Window length `fps / 6` and threshold `fps / 10`, rounded half-up and
/// clamped to at least one frame.
pub fn default_window_params(fps: f64) -> Result<WindowParams, FsmError> {
    if !(fps.is_finite() && fps > 0.0) {
        return Err(FsmError::InvalidFps(fps));
    }
    let round_half_up = |v: f64| ((v + 0.5).floor() as usize).max(1);
    let window_len = round_half_up(fps / 6.0);
    let threshold = round_half_up(fps / 10.0).min(window_len);
    Ok(WindowParams { window_len, threshold })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoreSeries {
    pub hand: HandSide,
    scores: Vec<u8>,
}

impl ScoreSeries {
    pub fn new(hand: HandSide, scores: Vec<u8>) -> Result<Self, FsmError> {
        if let Some((frame, &value)) = scores.iter().enumerate().find(|(_, &v)| v > 1) {
            return Err(FsmError::NonBinaryScore { frame, value });
        }
        Ok(Self { hand, scores })
    }

    pub fn from_bools(hand: HandSide, scores: impl IntoIterator<Item = bool>) -> Self {
        Self { hand, scores: scores.into_iter().map(u8::from).collect() }
    }

    pub fn scores(&self) -> &[u8] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// 1 when the frame holds an active-hand box of this side overlapping any
/// active-object box, else 0.
pub fn frame_score(frame: &FrameDetections, hand: HandSide) -> u8 {
    let Some(hand_det) = frame.active_hand(hand) else {
        return 0;
    };
    u8::from(frame.active_objects().any(|obj| iou(&hand_det.bbox, &obj.bbox) > 0.0))
}

/// Scores every frame of a (canonicalized) trace. Frames missing from the
/// trace score 0.
pub fn score_series(trace: &VideoTrace, hand: HandSide) -> ScoreSeries {
    let mut scores = vec![0u8; trace.frame_count];
    for frame in &trace.frames {
        if let Some(slot) = scores.get_mut(frame.frame_index) {
            *slot = frame_score(frame, hand);
        }
    }
    ScoreSeries { hand, scores }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HandStateTrace {
    pub hand: HandSide,
    pub states: Vec<HandState>,
    pub window_len: usize,
    pub threshold: usize,
}

impl HandStateTrace {
    pub fn from_states(hand: HandSide, states: Vec<HandState>, params: WindowParams) -> Self {
        Self { hand, states, window_len: params.window_len, threshold: params.threshold }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Frame `t` is Active when the sum of scores over
/// `[max(0, t - window_len + 1), t]` passes the comparison; early frames use
/// the truncated window.
pub fn run_fsm(
    scores: &ScoreSeries,
    params: WindowParams,
    comparison: WindowComparison,
) -> Result<HandStateTrace, FsmError> {
    let params = WindowParams::new(params.window_len, params.threshold)?;
    if scores.is_empty() {
        return Err(FsmError::EmptySeries);
    }
    let s = scores.scores();
    let mut sum = 0usize;
    let states = (0..s.len())
        .map(|t| {
            sum += s[t] as usize;
            if t >= params.window_len {
                sum -= s[t - params.window_len] as usize;
            }
            if comparison.passes(sum, params.threshold) {
                HandState::Active
            } else {
                HandState::Idle
            }
        })
        .collect();
    Ok(HandStateTrace::from_states(scores.hand, states, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{BoundingBox, Detection, DetectionClass};
    use proptest::prelude::*;
    use HandState::{Active as A, Idle as I};

    /// Recomputes every window sum from scratch.
    fn naive(scores: &[u8], n: usize, thr: usize) -> Vec<HandState> {
        (0..scores.len())
            .map(|t| {
                let lo = (t + 1).saturating_sub(n);
                let sum: usize = scores[lo..=t].iter().map(|&v| v as usize).sum();
                if sum >= thr {
                    A
                } else {
                    I
                }
            })
            .collect()
    }

    fn run(scores: &[u8], n: usize, thr: usize) -> Vec<HandState> {
        let series = ScoreSeries::new(HandSide::Left, scores.to_vec()).unwrap();
        run_fsm(&series, WindowParams::new(n, thr).unwrap(), WindowComparison::AtLeast).unwrap().states
    }

    fn det(class: DetectionClass, b: [f64; 4]) -> Detection {
        let crop = (class == DetectionClass::ActiveObject).then(|| "obj".to_string());
        Detection::new(BoundingBox::new(b[0], b[1], b[2], b[3]).unwrap(), class, 0.95, crop).unwrap()
    }

    #[test]
    fn window_params_from_fps() {
        assert_eq!(default_window_params(30.0).unwrap(), WindowParams { window_len: 5, threshold: 3 });
        assert_eq!(default_window_params(60.0).unwrap(), WindowParams { window_len: 10, threshold: 6 });
        assert_eq!(default_window_params(6.0).unwrap(), WindowParams { window_len: 1, threshold: 1 });
        assert_eq!(default_window_params(1.0).unwrap(), WindowParams { window_len: 1, threshold: 1 });
        // 25 / 6 = 4.17, 25 / 10 = 2.5 rounds up
        assert_eq!(default_window_params(25.0).unwrap(), WindowParams { window_len: 4, threshold: 3 });
        assert_eq!(default_window_params(0.0), Err(FsmError::InvalidFps(0.0)));
        assert!(default_window_params(-3.0).is_err());
    }

    #[test]
    fn frame_score_rules() {
        let overlap = FrameDetections::new(
            0,
            vec![
                det(DetectionClass::ActiveLeftHand, [0.0, 0.0, 10.0, 10.0]),
                det(DetectionClass::ActiveObject, [5.0, 5.0, 20.0, 20.0]),
            ],
        );
        assert_eq!(frame_score(&overlap, HandSide::Left), 1);
        assert_eq!(frame_score(&overlap, HandSide::Right), 0);

        let idle = FrameDetections::new(0, vec![det(DetectionClass::IdleLeftHand, [0.0, 0.0, 10.0, 10.0])]);
        assert_eq!(frame_score(&idle, HandSide::Left), 0);

        let apart = FrameDetections::new(
            0,
            vec![
                det(DetectionClass::ActiveLeftHand, [0.0, 0.0, 10.0, 10.0]),
                det(DetectionClass::ActiveObject, [50.0, 50.0, 60.0, 60.0]),
            ],
        );
        assert_eq!(frame_score(&apart, HandSide::Left), 0);
    }

    #[test]
    fn missing_frames_score_zero() {
        let frame = FrameDetections::new(
            2,
            vec![
                det(DetectionClass::ActiveRightHand, [0.0, 0.0, 10.0, 10.0]),
                det(DetectionClass::ActiveObject, [5.0, 5.0, 20.0, 20.0]),
            ],
        );
        let trace = VideoTrace::new("v", 30.0, 4, vec![frame]).unwrap();
        assert_eq!(score_series(&trace, HandSide::Right).scores(), &[0, 0, 1, 0]);
    }

    #[test]
    fn fsm_examples() {
        assert!(run(&[0; 12], 5, 3).iter().all(|s| *s == I));
        assert_eq!(run(&[1; 7], 5, 3), vec![I, I, A, A, A, A, A]);
        assert_eq!(naive(&[1; 7], 5, 3), vec![I, I, A, A, A, A, A]);
        assert_eq!(run(&[1, 1, 0, 0, 0, 0, 0], 5, 3), vec![I; 7]);
    }

    #[test]
    fn strict_comparison() {
        let series = ScoreSeries::new(HandSide::Right, vec![1; 6]).unwrap();
        let states = run_fsm(&series, WindowParams::new(5, 3).unwrap(), WindowComparison::GreaterThan).unwrap();
        assert_eq!(states.states, vec![I, I, I, A, A, A]);
    }

    #[test]
    fn fsm_errors() {
        let empty = ScoreSeries::new(HandSide::Left, vec![]).unwrap();
        assert_eq!(
            run_fsm(&empty, WindowParams { window_len: 5, threshold: 3 }, WindowComparison::AtLeast),
            Err(FsmError::EmptySeries)
        );
        let one = ScoreSeries::new(HandSide::Left, vec![1]).unwrap();
        assert!(run_fsm(&one, WindowParams { window_len: 2, threshold: 3 }, WindowComparison::AtLeast).is_err());
        assert!(WindowParams::new(0, 0).is_err());
        assert!(ScoreSeries::new(HandSide::Left, vec![0, 2]).is_err());
    }

    fn arb_case() -> impl Strategy<Value = (Vec<u8>, usize, usize)> {
        (1..=10usize)
            .prop_flat_map(|n| (proptest::collection::vec(0..=1u8, 1..=200), Just(n), 1..=n))
    }

    proptest! {
        #[test]
        fn matches_naive_window((scores, n, thr) in arb_case()) {
            prop_assert_eq!(run(&scores, n, thr), naive(&scores, n, thr));
        }

        #[test]
        fn raising_a_score_never_deactivates((scores, n, thr) in arb_case(), pick in any::<prop::sample::Index>()) {
            let before = run(&scores, n, thr);
            let mut raised = scores.clone();
            raised[pick.index(scores.len())] = 1;
            let after = run(&raised, n, thr);
            for (b, a) in before.iter().zip(&after) {
                prop_assert!(!(*b == A && *a == I));
            }
        }

        #[test]
        fn full_threshold_needs_full_window(scores in proptest::collection::vec(0..=1u8, 1..=120), n in 1..=10usize) {
            let states = run(&scores, n, n);
            for (t, s) in states.iter().enumerate() {
                let all_ones = t + 1 >= n && scores[t + 1 - n..=t].iter().all(|&v| v == 1);
                prop_assert_eq!(*s == A, all_ones);
            }
        }

        #[test]
        fn changes_happen_at_threshold_crossings((scores, n, thr) in arb_case()) {
            let states = run(&scores, n, thr);
            let sums: Vec<usize> = (0..scores.len())
                .map(|t| scores[(t + 1).saturating_sub(n)..=t].iter().map(|&v| v as usize).sum())
                .collect();
            for t in 1..states.len() {
                if states[t - 1] == I && states[t] == A {
                    // becoming active: the sum just reached the threshold
                    prop_assert_eq!(sums[t], thr);
                }
                if states[t - 1] == A && states[t] == I {
                    prop_assert_eq!(sums[t], thr - 1);
                }
            }
        }
    }
}
