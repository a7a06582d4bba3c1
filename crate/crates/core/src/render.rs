//! Timeline and ROC rendering (SVG plus a plain-text fallback).
//!
//! Output depends only on the inputs; all coordinates are printed with two
//! decimals so files are byte-stable.

use std::fmt::Write as _;

use crate::fusion::{StepSegmentation, StepSource};
use crate::similarity::RocPoint;

const LABEL_W: f64 = 160.0;
const PLOT_W: f64 = 800.0;
const MARGIN: f64 = 20.0;
const TITLE_H: f64 = 30.0;
const TRACK_H: f64 = 24.0;
const TRACK_GAP: f64 = 12.0;
const AXIS_H: f64 = 40.0;

const PALETTE: [&str; 10] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac",
];

const TICK_STEPS_S: [f64; 12] = [0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 15.0, 30.0, 60.0, 120.0, 300.0];

#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    pub svg: String,
    pub warnings: Vec<String>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn source_name(s: Option<StepSource>) -> &'static str {
    match s {
        Some(StepSource::Left) => "left",
        Some(StepSource::Right) => "right",
        Some(StepSource::Both) => "both",
        None => "unknown",
    }
}

/// Frame span shared by all tracks: `frames` if given, else the largest
/// segment end plus one.
pub fn timeline_span(tracks: &[(String, StepSegmentation)], frames: Option<usize>) -> usize {
    frames.unwrap_or_else(|| tracks.iter().map(|(_, s)| s.frame_span()).max().unwrap_or(0)).max(1)
}

/// Inconsistencies between tracks that make a shared axis misleading.
pub fn timeline_warnings(tracks: &[(String, StepSegmentation)], frames: Option<usize>) -> Vec<String> {
    let mut out = Vec::new();
    let Some((first_name, first)) = tracks.first() else { return out };
    for (name, seg) in &tracks[1..] {
        if seg.video_id != first.video_id {
            out.push(format!("{name}: video_id {:?} differs from {first_name} ({:?})", seg.video_id, first.video_id));
        }
        if seg.fps != first.fps {
            out.push(format!("{name}: fps {} differs from {first_name} ({})", seg.fps, first.fps));
        }
    }
    if let Some(n) = frames {
        for (name, seg) in tracks {
            if seg.frame_span() > n {
                out.push(format!("{name}: segments reach frame {} beyond duration of {n} frames", seg.frame_span() - 1));
            }
        }
    }
    out
}

fn tick_step(span_s: f64) -> f64 {
    TICK_STEPS_S.into_iter().find(|s| span_s / s <= 10.0).unwrap_or(600.0)
}

/// One horizontal track per segmentation, segments colored by index.
pub fn render_timeline_svg(tracks: &[(String, StepSegmentation)], frames: Option<usize>) -> Timeline {
    let span = timeline_span(tracks, frames);
    let fps = tracks.first().map_or(30.0, |(_, s)| s.fps);
    let width = LABEL_W + PLOT_W + 2.0 * MARGIN;
    let tracks_h = tracks.len() as f64 * (TRACK_H + TRACK_GAP);
    let height = TITLE_H + tracks_h + AXIS_H + MARGIN;
    let x_of = |frame: f64| MARGIN + LABEL_W + frame / span as f64 * PLOT_W;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.2}" height="{height:.2}" viewBox="0 0 {width:.2} {height:.2}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{width:.2}" height="{height:.2}" fill="white"/>"#);
    let title = tracks.first().map_or(String::new(), |(_, s)| s.video_id.clone());
    let _ = writeln!(svg, r#"<text x="{MARGIN:.2}" y="20.00" font-weight="bold">{}</text>"#, escape(&title));

    for (i, (name, seg)) in tracks.iter().enumerate() {
        let y = TITLE_H + i as f64 * (TRACK_H + TRACK_GAP);
        let _ = writeln!(
            svg,
            r#"<text x="{MARGIN:.2}" y="{:.2}">{}</text>"#,
            y + TRACK_H * 0.7,
            escape(name)
        );
        let _ = writeln!(
            svg,
            r##"<rect x="{:.2}" y="{y:.2}" width="{PLOT_W:.2}" height="{TRACK_H:.2}" fill="#f2f2f2"/>"##,
            MARGIN + LABEL_W
        );
        for (j, s) in seg.segments.iter().enumerate() {
            let x0 = x_of(s.start_frame as f64);
            let x1 = x_of((s.end_frame + 1) as f64).min(MARGIN + LABEL_W + PLOT_W);
            let mut tip = format!("{}-{} ({})", s.start_frame, s.end_frame, source_name(s.source_hand));
            if let Some(label) = &s.label {
                tip = format!("{label}: {tip}");
            }
            let _ = writeln!(
                svg,
                r#"<rect x="{x0:.2}" y="{y:.2}" width="{:.2}" height="{TRACK_H:.2}" fill="{}"><title>{}</title></rect>"#,
                (x1 - x0).max(0.0),
                PALETTE[j % PALETTE.len()],
                escape(&tip)
            );
        }
    }

    let axis_y = TITLE_H + tracks_h;
    let _ = writeln!(
        svg,
        r#"<line x1="{:.2}" y1="{axis_y:.2}" x2="{:.2}" y2="{axis_y:.2}" stroke="black"/>"#,
        x_of(0.0),
        x_of(span as f64)
    );
    let span_s = span as f64 / fps;
    let step = tick_step(span_s);
    let mut k = 0u32;
    loop {
        let sec = f64::from(k) * step;
        if sec > span_s + 1e-9 {
            break;
        }
        let frame = (sec * fps).round();
        let x = x_of(frame);
        let _ = writeln!(svg, r#"<line x1="{x:.2}" y1="{axis_y:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, axis_y + 5.0);
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{sec:.1}s</text>"#,
            axis_y + 18.0
        );
        let _ = writeln!(
            svg,
            r##"<text x="{x:.2}" y="{:.2}" text-anchor="middle" fill="#777777" font-size="9">f{frame}</text>"##,
            axis_y + 30.0
        );
        k += 1;
    }
    svg.push_str("</svg>\n");
    Timeline { svg, warnings: timeline_warnings(tracks, frames) }
}

/// Text rendering: one row per track, `width` columns; each column shows the
/// segment covering its first frame as a letter (A, B, ... cycling) or `.`.
pub fn render_timeline_ascii(tracks: &[(String, StepSegmentation)], frames: Option<usize>, width: usize) -> String {
    let span = timeline_span(tracks, frames);
    let width = width.max(1);
    let name_w = tracks.iter().map(|(n, _)| n.chars().count()).max().unwrap_or(0);
    let mut out = String::new();
    for (name, seg) in tracks {
        let row: String = (0..width)
            .map(|c| {
                let frame = c * span / width;
                seg.segments
                    .iter()
                    .position(|s| s.start_frame <= frame && frame <= s.end_frame)
                    .map_or('.', |j| char::from(b'A' + (j % 26) as u8))
            })
            .collect();
        let _ = writeln!(out, "{name:<name_w$} |{row}|");
    }
    let fps = tracks.first().map_or(30.0, |(_, s)| s.fps);
    let _ = writeln!(out, "{:<name_w$}  0{:>w$}", "", format!("{span} frames / {:.2}s", span as f64 / fps), w = width);
    out
}

/// ROC curve (FPR on x, TPR on y) with the chance diagonal and the
/// selected operating point.
pub fn render_roc_svg(curve: &[RocPoint], selected: Option<&RocPoint>) -> String {
    const SIZE: f64 = 400.0;
    const PAD: f64 = 50.0;
    let full = SIZE + 2.0 * PAD;
    let px = |fpr: f64| PAD + fpr * SIZE;
    let py = |tpr: f64| PAD + (1.0 - tpr) * SIZE;
    let mut pts: Vec<&RocPoint> = curve.iter().collect();
    pts.sort_by(|a, b| a.fpr.total_cmp(&b.fpr).then(a.tpr.total_cmp(&b.tpr)));

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{full:.2}" height="{full:.2}" viewBox="0 0 {full:.2} {full:.2}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{full:.2}" height="{full:.2}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<rect x="{PAD:.2}" y="{PAD:.2}" width="{SIZE:.2}" height="{SIZE:.2}" fill="none" stroke="black"/>"#);
    let _ = writeln!(
        svg,
        r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#aaaaaa" stroke-dasharray="4 4"/>"##,
        px(0.0),
        py(0.0),
        px(1.0),
        py(1.0)
    );
    let line: Vec<String> = pts.iter().map(|p| format!("{:.2},{:.2}", px(p.fpr), py(p.tpr))).collect();
    let _ = writeln!(svg, r##"<polyline points="{}" fill="none" stroke="#4e79a7" stroke-width="2"/>"##, line.join(" "));
    if let Some(p) = selected {
        let _ = writeln!(
            svg,
            r##"<circle cx="{:.2}" cy="{:.2}" r="5" fill="#e15759"><title>threshold {:.2}</title></circle>"##,
            px(p.fpr),
            py(p.tpr),
            p.threshold
        );
    }
    let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">false positive rate</text>"#, PAD + SIZE / 2.0, full - 15.0);
    let _ = writeln!(
        svg,
        r#"<text x="15.00" y="{:.2}" text-anchor="middle" transform="rotate(-90 15.00 {:.2})">true positive rate</text>"#,
        PAD + SIZE / 2.0,
        PAD + SIZE / 2.0
    );
    svg.push_str("</svg>\n");
    svg
}
