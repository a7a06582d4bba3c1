use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use hoiseg_core::config::ProviderConfig;
use hoiseg_core::fusion::fuse_streams;
use hoiseg_core::metrics::{detection_eval, f1_report, format_detection_table, format_f1_table};
use hoiseg_core::pipeline::{build_provider, segment_video, ClipSetFile, HandSegmentation, Provenance, TOOL_VERSION};
use hoiseg_core::render::{render_roc_svg, render_timeline_ascii, render_timeline_svg};
use hoiseg_core::similarity::{auc, default_threshold_grid, read_labeled_pairs, roc_from_scores, score_pairs, select_threshold_roc};
use hoiseg_core::trace::parse_trace;
use hoiseg_core::{HandSide, PipelineConfig, SimThreshold, SimilarityProvider, StepSegmentation, VideoTrace};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::{Cli, Command, EvalArgs, EvalMode, FuseArgs, Overrides, RenderArgs, RocArgs, SegmentArgs};

pub fn run(cli: Cli) -> CliResult<()> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::Segment(args) => segment(config, args, false),
        Command::Pipeline(args) => segment(config, args, true),
        Command::Fuse(args) => fuse(config, args),
        Command::Eval(args) => eval(config, args),
        Command::Roc(args) => roc(config, args),
        Command::Render(args) => render(args),
    }
}

fn load_config(path: Option<&Path>, o: &Overrides) -> CliResult<PipelineConfig> {
    let mut cfg = match path {
        Some(p) => PipelineConfig::from_path(p).map_err(|e| CliError::from(e).context(p.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = o.min_score {
        cfg.min_score = v;
    }
    if let (Some(n), Some(t)) = (o.window_len, o.window_threshold) {
        cfg.window_len = Some(n);
        cfg.window_threshold = Some(t);
    }
    if let Some(v) = o.min_duration {
        cfg.min_duration_s = v;
    }
    if let Some(v) = o.boundary_fraction {
        cfg.boundary_fraction = v;
    }
    if let Some(v) = &o.sim_threshold {
        cfg.sim_threshold = v.clone();
    }
    if let Some(v) = o.iosa_threshold {
        cfg.iosa_threshold = v;
    }
    if let Some(v) = o.fallback {
        cfg.attention_fallback = v;
    }
    if let Some(path) = &o.matrix {
        cfg.provider = Some(ProviderConfig::Matrix { path: path.clone() });
    }
    if let Some(root) = &o.crop_root {
        let bins = o.bins.unwrap_or(hoiseg_core::similarity::DEFAULT_HISTOGRAM_BINS);
        cfg.provider = Some(ProviderConfig::Histogram { crop_root: root.clone(), bins });
    }
    cfg.validate()?;
    if matches!(cfg.sim_threshold, SimThreshold::Roc(_)) && cfg.provider.is_none() {
        return Err(CliError::Validation("a roc: similarity threshold needs a similarity provider".into()));
    }
    Ok(cfg)
}

fn load_provider(cfg: &PipelineConfig) -> CliResult<Option<Box<dyn SimilarityProvider>>> {
    cfg.provider.as_ref().map(|p| build_provider(p).map_err(CliError::from)).transpose()
}

fn read_trace(path: &Path) -> CliResult<VideoTrace> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    parse_trace(BufReader::new(file)).map_err(|e| CliError::from(e).context(path.display()))
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn read_steps(path: &Path) -> CliResult<StepSegmentation> {
    StepSegmentation::from_json_str(&read_text(path)?).map_err(|e| CliError::from(e).context(path.display()))
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

/// File-name-safe stem for a video.
fn output_stem(video_id: &str, path: &Path) -> String {
    let raw = if video_id.is_empty() {
        path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "video".into())
    } else {
        video_id.to_string()
    };
    raw.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect()
}

/// Runs `f` over `items` on up to `jobs` threads; results keep input order.
fn run_jobs<T, R, F>(items: &[T], jobs: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, items.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(i) else { break };
                *slots[i].lock().expect("result slot") = Some(f(item));
            });
        }
    });
    slots.into_iter().map(|m| m.into_inner().expect("result slot").expect("every item ran")).collect()
}

#[derive(Serialize)]
struct ClipCounts {
    initial: usize,
    filtered: usize,
    reconnected: usize,
}

impl From<&HandSegmentation> for ClipCounts {
    fn from(h: &HandSegmentation) -> Self {
        Self { initial: h.initial.len(), filtered: h.filtered.len(), reconnected: h.reconnected.len() }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool_version: &'a str,
    command: &'a str,
    config_hash: String,
    config: &'a PipelineConfig,
    video_id: &'a str,
    trace: String,
    window_len: usize,
    window_threshold: usize,
    sim_threshold: Option<f64>,
    left: ClipCounts,
    right: ClipCounts,
    steps: Option<usize>,
    outputs: Vec<String>,
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn segment_one(
    path: &Path,
    cfg: &PipelineConfig,
    provider: Option<&dyn SimilarityProvider>,
    out_dir: &Path,
    full: bool,
) -> CliResult<String> {
    let trace = read_trace(path)?;
    let seg = segment_video(&trace, cfg, provider).map_err(|e| CliError::from(e).context(path.display()))?;
    let stem = output_stem(&trace.video_id, path);
    let provenance = Provenance::new(cfg);

    let mut files: Vec<(PathBuf, String)> = Vec::new();
    for (hand, h) in [(HandSide::Left, &seg.left), (HandSide::Right, &seg.right)] {
        let file = ClipSetFile::new(&trace.video_id, &h.reconnected, provenance.clone());
        files.push((out_dir.join(format!("{stem}.{hand}.clips.json")), file.to_json_string()));
    }
    let mut steps_count = None;
    if full {
        let steps = fuse_streams(&seg.left.reconnected, &seg.right.reconnected, &seg.canonical, cfg.fusion_params())?;
        steps_count = Some(steps.segments.len());
        let timeline = render_timeline_svg(&[(stem.clone(), steps.clone())], Some(trace.frame_count));
        for w in &timeline.warnings {
            log::warn!("{w}");
        }
        files.push((out_dir.join(format!("{stem}.steps.json")), steps.to_json_string()));
        files.push((out_dir.join(format!("{stem}.timeline.svg")), timeline.svg));
    }
    let manifest_path = out_dir.join(format!("{stem}.manifest.json"));
    let manifest = Manifest {
        tool_version: TOOL_VERSION,
        command: if full { "pipeline" } else { "segment" },
        config_hash: provenance.config_hash.clone(),
        config: cfg,
        video_id: &trace.video_id,
        trace: path.display().to_string(),
        window_len: seg.window.window_len,
        window_threshold: seg.window.threshold,
        sim_threshold: seg.sim_threshold,
        left: (&seg.left).into(),
        right: (&seg.right).into(),
        steps: steps_count,
        outputs: files.iter().map(|(p, _)| file_name(p)).collect(),
    };
    files.push((manifest_path, to_json(&manifest)));
    for (p, contents) in &files {
        write_file(p, contents)?;
    }

    let mut summary = format!(
        "{}: {} left clips, {} right clips",
        path.display(),
        seg.left.reconnected.len(),
        seg.right.reconnected.len()
    );
    if let Some(n) = steps_count {
        summary.push_str(&format!(", {n} steps"));
    }
    Ok(summary)
}

fn segment(config: Option<&Path>, args: SegmentArgs, full: bool) -> CliResult<()> {
    let cfg = load_config(config, &args.overrides)?;
    let provider = load_provider(&cfg)?;
    let results = run_jobs(&args.traces, args.jobs, |path| {
        segment_one(path, &cfg, provider.as_deref(), &args.out_dir, full)
    });
    let mut worst: Option<CliError> = None;
    for r in results {
        match r {
            Ok(summary) => println!("{summary}"),
            Err(e) => {
                if args.traces.len() > 1 {
                    eprintln!("error: {e}");
                }
                if worst.as_ref().is_none_or(|w| e.exit_code() > w.exit_code()) {
                    worst = Some(e);
                }
            }
        }
    }
    worst.map_or(Ok(()), Err)
}

fn read_clip_file(path: &Path, hand: HandSide) -> CliResult<(String, hoiseg_core::ClipSet)> {
    let file = ClipSetFile::from_json_str(&read_text(path)?).map_err(|e| CliError::from(e).context(path.display()))?;
    if file.hand != hand {
        return Err(CliError::Validation(format!("{}: expected {hand} clips, found {}", path.display(), file.hand)));
    }
    let video_id = file.video_id.clone();
    let set = file.into_clip_set().map_err(|e| CliError::from(e).context(path.display()))?;
    Ok((video_id, set))
}

fn fuse(config: Option<&Path>, args: FuseArgs) -> CliResult<()> {
    let cfg = load_config(config, &args.overrides)?;
    let (left_id, left) = read_clip_file(&args.left, HandSide::Left)?;
    let (right_id, right) = read_clip_file(&args.right, HandSide::Right)?;
    let trace = read_trace(&args.trace)?;
    if left_id != right_id || left_id != trace.video_id {
        return Err(CliError::Validation(format!(
            "video ids differ: left {left_id:?}, right {right_id:?}, trace {:?}",
            trace.video_id
        )));
    }
    if left.fps != trace.fps || right.fps != trace.fps {
        return Err(CliError::Validation(format!(
            "fps differ: left {}, right {}, trace {}",
            left.fps, right.fps, trace.fps
        )));
    }
    let canonical = trace.canonicalize(cfg.min_score);
    let steps = fuse_streams(&left, &right, &canonical, cfg.fusion_params())?;
    write_file(&args.out, &steps.to_json_string())?;
    println!("{}: {} steps", args.out.display(), steps.segments.len());
    Ok(())
}

fn eval(config: Option<&Path>, args: EvalArgs) -> CliResult<()> {
    let cfg = load_config(config, &args.overrides)?;
    let report = match args.mode {
        EvalMode::Steps => {
            let pred = read_steps(&args.pred)?;
            let truth = read_steps(&args.truth)?;
            let scores = f1_report(&pred, &truth)?;
            let name = args.pred.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            print!("{}", format_f1_table(&name, &scores));
            to_json(&serde_json::json!({ "mode": "steps", "video_id": pred.video_id, "scores": scores }))
        }
        EvalMode::Detections => {
            let pred = read_trace(&args.pred)?.canonicalize(cfg.min_score);
            let truth = read_trace(&args.truth)?.canonicalize(0.0);
            let rows = detection_eval(&pred, &truth, args.iou)?;
            print!("{}", format_detection_table(&rows));
            to_json(&serde_json::json!({ "mode": "detections", "video_id": pred.video_id, "iou": args.iou, "rows": rows }))
        }
    };
    if let Some(path) = &args.json {
        write_file(path, &report)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct RocReport {
    threshold: f64,
    tpr: f64,
    fpr: f64,
    youden_j: f64,
    auc: f64,
    pairs: usize,
    positives: usize,
}

fn roc(config: Option<&Path>, args: RocArgs) -> CliResult<()> {
    let cfg = load_config(config, &args.overrides)?;
    let provider = load_provider(&cfg)?
        .ok_or_else(|| CliError::Validation("roc needs a similarity provider (--matrix, --crop-root or [provider])".into()))?;
    let file = fs::File::open(&args.pairs).map_err(|e| CliError::io(&args.pairs, e))?;
    let pairs = read_labeled_pairs(BufReader::new(file)).map_err(|e| CliError::from(e).context(args.pairs.display()))?;
    let scored = score_pairs(provider.as_ref(), &pairs)?;
    let curve = roc_from_scores(&scored, &default_threshold_grid()).map_err(|e| CliError::from(e).context(args.pairs.display()))?;
    let best = select_threshold_roc(&curve).expect("grid is non-empty");
    let report = RocReport {
        threshold: best.threshold,
        tpr: best.tpr,
        fpr: best.fpr,
        youden_j: best.youden_j(),
        auc: auc(&scored).expect("both classes present"),
        pairs: scored.len(),
        positives: scored.iter().filter(|(_, same)| *same).count(),
    };

    let mut csv = String::from("threshold,tpr,fpr\n");
    for p in &curve {
        csv.push_str(&format!("{:.2},{:.6},{:.6}\n", p.threshold, p.tpr, p.fpr));
    }
    write_file(&args.out_dir.join("roc.csv"), &csv)?;
    write_file(&args.out_dir.join("roc.svg"), &render_roc_svg(&curve, Some(&best)))?;
    write_file(&args.out_dir.join("roc.json"), &to_json(&report))?;
    println!(
        "threshold {:.2}  tpr {:.4}  fpr {:.4}  J {:.4}  auc {:.4}",
        report.threshold, report.tpr, report.fpr, report.youden_j, report.auc
    );
    Ok(())
}

fn render(args: RenderArgs) -> CliResult<()> {
    let mut tracks = Vec::new();
    for path in &args.segmentations {
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        tracks.push((name, read_steps(path)?));
    }
    let timeline = render_timeline_svg(&tracks, args.frames);
    for w in &timeline.warnings {
        eprintln!("warning: {w}");
    }
    write_file(&args.out, &timeline.svg)?;
    if args.ascii {
        print!("{}", render_timeline_ascii(&tracks, args.frames, args.ascii_width));
    }
    Ok(())
}
