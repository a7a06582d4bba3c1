mod commands;
mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hoiseg_core::{HandSide, SimThreshold};

/// HOI-driven step segmentation for egocentric video.
#[derive(Debug, Parser)]
#[command(name = "hoiseg", version, about)]
pub struct Cli {
    /// Pipeline config file (TOML).
    #[arg(long, global = true, env = "HOISEG_CONFIG")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-hand clip sets from detection traces.
    Segment(SegmentArgs),
    /// Fuse left and right clip sets into steps.
    Fuse(FuseArgs),
    /// Score predictions against ground truth.
    Eval(EvalArgs),
    /// Calibrate the similarity threshold from labeled crop pairs.
    Roc(RocArgs),
    /// Draw step timelines.
    Render(RenderArgs),
    /// Segment, fuse and render in one pass.
    Pipeline(SegmentArgs),
}

/// Values that override the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long)]
    pub min_score: Option<f64>,
    #[arg(long, requires = "window_threshold")]
    pub window_len: Option<usize>,
    #[arg(long, requires = "window_len")]
    pub window_threshold: Option<usize>,
    #[arg(long)]
    pub min_duration: Option<f64>,
    #[arg(long)]
    pub boundary_fraction: Option<f64>,
    /// A number, or roc:<pairs.csv> to calibrate.
    #[arg(long)]
    pub sim_threshold: Option<SimThreshold>,
    #[arg(long)]
    pub iosa_threshold: Option<f64>,
    #[arg(long)]
    pub fallback: Option<HandSide>,
    /// Precomputed similarity matrix (JSON).
    #[arg(long, conflicts_with = "crop_root")]
    pub matrix: Option<PathBuf>,
    /// Crop image directory for histogram similarity.
    #[arg(long)]
    pub crop_root: Option<PathBuf>,
    #[arg(long, requires = "crop_root")]
    pub bins: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// Detection trace files (JSONL).
    #[arg(required = true)]
    pub traces: Vec<PathBuf>,
    #[arg(short, long)]
    pub out_dir: PathBuf,
    /// Traces processed concurrently.
    #[arg(short, long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    #[arg(long)]
    pub left: PathBuf,
    #[arg(long)]
    pub right: PathBuf,
    /// Trace used for the attention decision.
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(short, long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalMode {
    Steps,
    Detections,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(value_enum)]
    pub mode: EvalMode,
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Box IOU needed for a detection match.
    #[arg(long, default_value_t = hoiseg_core::metrics::DEFAULT_IOU_MATCH)]
    pub iou: f64,
    /// Write the report as JSON here as well.
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct RocArgs {
    /// CSV with crop_a,crop_b,same columns.
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(short, long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Step segmentation files, one track each.
    #[arg(required = true)]
    pub segmentations: Vec<PathBuf>,
    #[arg(short, long)]
    pub out: PathBuf,
    /// Video length in frames; defaults to the last segment end.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Also print a text timeline.
    #[arg(long)]
    pub ascii: bool,
    #[arg(long, default_value_t = 100)]
    pub ascii_width: usize,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = commands::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
