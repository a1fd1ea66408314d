//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "tubekit",
    version,
    about = "Build, predict and evaluate spatiotemporal action tubes"
)]
pub struct Cli {
    /// Run configuration file (JSON). Falls back to $TUBEKIT_CONFIG, then
    /// built-in defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads for per-video stages (0 = all cores). Output is
    /// byte-identical for any value.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic ground-truth scenario and a detection stream.
    Simulate(SimulateArgs),
    /// Fuse appearance and flow detection streams.
    Fuse(FuseArgs),
    /// Two-pass offline tube construction (Viterbi paths + Potts trimming).
    BuildOffline(BuildArgs),
    /// Incremental online tube construction from per-frame detections.
    BuildOnline(BuildArgs),
    /// Online tube construction from a micro-tube stream.
    LinkMicro(BuildArgs),
    /// Estimate per-level anchor transition matrices from ground truth.
    EstimateTrans(EstimateTransArgs),
    /// Markov composition of a transition-matrix file.
    ComposeTrans(ComposeTransArgs),
    /// Complete tubes into the unobserved future at an observation fraction.
    PredictFuture(PredictFutureArgs),
    /// Metrics (video-mAP, avg-mAP, c-mAP, p-mAP, early accuracy).
    Eval(EvalArgs),
    /// Online tube-generation throughput on a synthetic stream.
    Bench(BenchArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
pub enum StreamMode {
    Frames,
    Microtubes,
    MicrotubesWithPredictions,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Scenario seed (required; overrides the config value).
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "frames")]
    pub mode: StreamMode,
    /// Micro-tube stride.
    #[arg(long, default_value_t = 1)]
    pub delta: usize,
    /// Past prediction step (microtubes-with-predictions).
    #[arg(long, default_value_t = 1)]
    pub delta_p: usize,
    /// Future prediction stride (microtubes-with-predictions).
    #[arg(long, default_value_t = 2)]
    pub delta_f: usize,
    /// Number of future prediction steps.
    #[arg(long, default_value_t = 8)]
    pub n_future: usize,
    /// Override config: number of videos.
    #[arg(long)]
    pub videos: Option<usize>,
    /// Override config: frames per video.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Override config: number of action classes.
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub out_gt: PathBuf,
    #[arg(long)]
    pub out_stream: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum StrategyArg {
    Boost,
    Union,
    Mean,
}

#[derive(Args, Debug)]
pub struct FuseArgs {
    #[arg(long)]
    pub appearance: PathBuf,
    #[arg(long)]
    pub flow: PathBuf,
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    /// Input stream (detections or micro-tubes, per command).
    #[arg(long)]
    pub input: PathBuf,
    /// Number of action classes (default: inferred from the stream).
    #[arg(long)]
    pub classes: Option<usize>,
    /// Override config: Potts switch penalty.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EstimateTransArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub delta: usize,
    #[arg(long)]
    pub width: f64,
    #[arg(long)]
    pub height: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ComposeTransArgs {
    #[arg(long)]
    pub trans: PathBuf,
    #[arg(long)]
    pub steps: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PredictFutureArgs {
    /// Micro-tube stream with attached predictions (full video coverage).
    #[arg(long)]
    pub input: PathBuf,
    /// Observation fraction in (0, 1].
    #[arg(long)]
    pub fraction: f64,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub width: f64,
    #[arg(long)]
    pub height: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
pub enum Metric {
    Map,
    AvgMap,
    Cmap,
    Pmap,
    Early,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(value_enum)]
    pub metric: Metric,
    #[arg(long)]
    pub gt: PathBuf,
    /// Tube file (map/avg-map/cmap/pmap).
    #[arg(long)]
    pub tubes: Option<PathBuf>,
    /// Detection stream (early).
    #[arg(long)]
    pub dets: Option<PathBuf>,
    /// ST-IoU threshold (default: config).
    #[arg(long)]
    pub delta: Option<f64>,
    /// Observation fraction (cmap/pmap).
    #[arg(long)]
    pub fraction: Option<f64>,
    /// CSV artifact path.
    #[arg(long)]
    pub out_csv: PathBuf,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 24)]
    pub classes: usize,
    #[arg(long, default_value_t = 10)]
    pub dets_per_class: usize,
    #[arg(long, default_value_t = 2000)]
    pub frames: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
