//! Scripted synthetic traces for tests, demos and benchmarks.
//!
//! Each hand gets a fixed horizontal lane (left hand around x=140, right
//! around x=440). An interaction places an active hand box plus an
//! overlapping active object whose crop refs are `"{object}#{frame}"`.

use std::collections::BTreeMap;

use crate::fsm::HandSide;
use crate::trace::{BoundingBox, Detection, DetectionClass, FrameDetections, VideoTrace};

const HAND_HALF_HEIGHT: f64 = 40.0;
const SCORE: f64 = 0.95;

fn lane(side: HandSide) -> f64 {
    match side {
        HandSide::Left => 100.0,
        HandSide::Right => 400.0,
    }
}

#[derive(Debug, Clone, Default)]
struct Slot {
    hand: [Option<Detection>; 2],
    objects: Vec<Detection>,
}

#[derive(Debug, Clone)]
pub struct ScriptedTrace {
    video_id: String,
    fps: f64,
    frame_count: usize,
    hand_y: [f64; 2],
    frames: BTreeMap<usize, Slot>,
}

fn idx(side: HandSide) -> usize {
    match side {
        HandSide::Left => 0,
        HandSide::Right => 1,
    }
}

/// Object part of a synthetic crop ref.
pub fn crop_object(crop_ref: &str) -> &str {
    crop_ref.split_once('#').map_or(crop_ref, |(o, _)| o)
}

impl ScriptedTrace {
    pub fn new(video_id: &str, fps: f64, frame_count: usize) -> Self {
        Self { video_id: video_id.to_string(), fps, frame_count, hand_y: [300.0, 300.0], frames: BTreeMap::new() }
    }

    /// Vertical centre used for this hand's boxes from here on.
    pub fn hand_y(mut self, side: HandSide, y: f64) -> Self {
        self.hand_y[idx(side)] = y;
        self
    }

    fn hand_box(&self, side: HandSide) -> BoundingBox {
        let (x, y) = (lane(side), self.hand_y[idx(side)]);
        BoundingBox::new(x, y - HAND_HALF_HEIGHT, x + 80.0, y + HAND_HALF_HEIGHT).expect("valid hand box")
    }

    fn object_box(&self, side: HandSide) -> BoundingBox {
        let (x, y) = (lane(side) + 60.0, self.hand_y[idx(side)]);
        BoundingBox::new(x, y - 30.0, x + 80.0, y + 30.0).expect("valid object box")
    }

    fn frames_in(&self, start: usize, end: usize) -> std::ops::RangeInclusive<usize> {
        assert!(start <= end && end < self.frame_count, "frames {start}..={end} outside video");
        start..=end
    }

    /// Hand visible but not interacting on frames `start..=end`.
    pub fn idle(mut self, side: HandSide, start: usize, end: usize) -> Self {
        let bbox = self.hand_box(side);
        for t in self.frames_in(start, end) {
            let det = Detection::new(bbox, DetectionClass::idle_hand(side), SCORE, None).expect("valid detection");
            self.frames.entry(t).or_default().hand[idx(side)] = Some(det);
        }
        self
    }

    /// Hand holding `object` on frames `start..=end`.
    pub fn interaction(mut self, side: HandSide, start: usize, end: usize, object: &str) -> Self {
        let (hand, obj) = (self.hand_box(side), self.object_box(side));
        for t in self.frames_in(start, end) {
            let slot = self.frames.entry(t).or_default();
            slot.hand[idx(side)] =
                Some(Detection::new(hand, DetectionClass::active_hand(side), SCORE, None).expect("valid detection"));
            slot.objects.push(
                Detection::new(obj, DetectionClass::ActiveObject, SCORE, Some(format!("{object}#{t}")))
                    .expect("valid detection"),
            );
        }
        self
    }

    pub fn build(self) -> VideoTrace {
        let frames = self
            .frames
            .into_iter()
            .map(|(t, slot)| {
                let mut dets: Vec<Detection> = slot.hand.into_iter().flatten().collect();
                dets.extend(slot.objects);
                FrameDetections::new(t, dets)
            })
            .collect();
        VideoTrace::new(self.video_id, self.fps, self.frame_count, frames).expect("scripted trace is consistent")
    }
}
