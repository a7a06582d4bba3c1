use std::path::Path;

use hoiseg_core::pipeline::{build_provider, run_pipeline};
use hoiseg_core::similarity::SimilarityError;
use hoiseg_core::synth::{crop_object, ScriptedTrace};
use hoiseg_core::trace::{parse_trace, trace_to_string};
use hoiseg_core::{Error, HandSide, PipelineConfig, StepSource, VideoTrace};
use image::{Rgb, RgbImage};

fn base_color(object: &str) -> [u8; 3] {
    match object {
        "cup" => [200, 30, 30],
        "plate" => [30, 30, 200],
        _ => [30, 200, 30],
    }
}

/// One small image per crop ref: the object's colour with a frame-dependent
/// speckle so crops of one object are similar but not identical.
fn write_crops(root: &Path, trace: &VideoTrace) {
    for frame in &trace.frames {
        for det in frame.active_objects() {
            let crop = det.crop_ref.as_deref().unwrap();
            let [r, g, b] = base_color(crop_object(crop));
            let img = RgbImage::from_fn(16, 16, |x, y| {
                if (x * 7 + y * 3 + frame.frame_index as u32).is_multiple_of(11) {
                    Rgb([255, 255, 255])
                } else {
                    Rgb([r, g, b])
                }
            });
            img.save_with_format(root.join(crop), image::ImageFormat::Png).unwrap();
        }
    }
}

fn kitchen_trace() -> VideoTrace {
    ScriptedTrace::new("kitchen", 30.0, 300)
        .interaction(HandSide::Right, 0, 59, "cup")
        .interaction(HandSide::Right, 66, 125, "cup")
        .interaction(HandSide::Right, 200, 259, "plate")
        .hand_y(HandSide::Left, 100.0)
        .interaction(HandSide::Left, 190, 269, "board")
        .build()
}

#[test]
fn histogram_provider_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let crops = dir.path().join("crops");
    std::fs::create_dir(&crops).unwrap();
    let trace = kitchen_trace();
    write_crops(&crops, &trace);

    let trace_path = dir.path().join("kitchen.jsonl");
    std::fs::write(&trace_path, trace_to_string(&trace)).unwrap();
    let cfg_path = dir.path().join("hoiseg.toml");
    std::fs::write(
        &cfg_path,
        format!("sim_threshold = 0.5\n\n[provider]\nkind = \"histogram\"\ncrop_root = {:?}\nbins = 4\n", crops.display().to_string()),
    )
    .unwrap();

    let parsed = parse_trace(std::io::BufReader::new(std::fs::File::open(&trace_path).unwrap())).unwrap();
    assert_eq!(parsed, trace);
    let cfg = PipelineConfig::from_path(&cfg_path).unwrap();
    let provider = build_provider(cfg.provider.as_ref().unwrap()).unwrap();
    let out = run_pipeline(&parsed, &cfg, Some(provider.as_ref())).unwrap();

    let right: Vec<(usize, usize)> = out.segments.right.reconnected.clips.iter().map(|c| (c.start_frame, c.end_frame)).collect();
    assert_eq!(right, vec![(2, 127), (202, 261)]);
    let steps: Vec<(usize, usize, Option<StepSource>)> =
        out.steps.segments.iter().map(|s| (s.start_frame, s.end_frame, s.source_hand)).collect();
    // board (left, held higher) absorbs the plate interval it contains
    assert_eq!(steps, vec![(2, 127, Some(StepSource::Right)), (192, 271, Some(StepSource::Both))]);
}

#[test]
fn missing_crop_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let trace = kitchen_trace();
    let cfg = PipelineConfig::from_toml_str(&format!(
        "[provider]\nkind = \"histogram\"\ncrop_root = {:?}\n",
        dir.path().display().to_string()
    ))
    .unwrap();
    let provider = build_provider(cfg.provider.as_ref().unwrap()).unwrap();
    let err = run_pipeline(&trace, &cfg, Some(provider.as_ref())).unwrap_err();
    assert!(matches!(err, Error::Similarity(SimilarityError::UnknownCropRef(_))), "{err}");
    assert!(!err.is_io());
}

#[test]
fn without_provider_clips_stay_split() {
    let out = run_pipeline(&kitchen_trace(), &PipelineConfig::default(), None).unwrap();
    assert_eq!(out.segments.right.reconnected.len(), 3);
    assert_eq!(out.segments.sim_threshold, Some(0.5));
}

#[test]
fn provider_is_shareable_across_threads() {
    let dir = tempfile::tempdir().unwrap();
    let trace = kitchen_trace();
    write_crops(dir.path(), &trace);
    let cfg = PipelineConfig::from_toml_str(&format!(
        "[provider]\nkind = \"histogram\"\ncrop_root = {:?}\n",
        dir.path().display().to_string()
    ))
    .unwrap();
    let provider = build_provider(cfg.provider.as_ref().unwrap()).unwrap();
    let results: Vec<String> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..4)
            .map(|_| s.spawn(|| run_pipeline(&trace, &cfg, Some(provider.as_ref())).unwrap().steps.to_json_string()))
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    assert!(results.windows(2).all(|w| w[0] == w[1]));
}
