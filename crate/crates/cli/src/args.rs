use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use curvemrf::inference::{GammaRule, InferenceOptions, Ordering, Passes, TrwsOptions, DEFAULT_BLOCK_SIZE};
use curvemrf::tasks::baseline::Scenario;
use serde::{Deserialize, Serialize};

/// Images above this side length need `--allow-large`.
pub const MAX_SIDE: usize = 160;
pub const DEFAULT_PASSES: usize = 300;

#[derive(Debug, Parser)]
#[command(name = "curvemrf", version, about = "Learned curvature priors for binary labelings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Learn a pattern bank from sampled quadratic curves.
    Train(TrainArgs),
    /// Compare model totals with exact curvature integrals on random shapes.
    EvalApprox(EvalArgs),
    /// Complete a partially known shape.
    Inpaint(InpaintArgs),
    /// Seeded two-region colour segmentation.
    Segment(SegmentArgs),
    /// Shortest-path curvature baseline on a 16-connected grid.
    Baseline(BaselineArgs),
    /// HTTP job server for interactive segmentation.
    Serve(ServeArgs),
    /// Turn a JSON stroke script into a PGM seed mask.
    RasterizeStrokes(StrokeArgs),
    /// Repeat a run from its manifest.
    Rerun(RerunArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    /// Window side length.
    #[arg(long = "K", default_value_t = 6)]
    pub side: usize,
    /// Learned patterns; must equal orientations × curvature bins.
    #[arg(long)]
    pub patterns: Option<usize>,
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,
    /// Held-out samples; defaults to `--samples`.
    #[arg(long)]
    pub test_samples: Option<usize>,
    /// Defaults to patterns / curvature bins, or 8.
    #[arg(long)]
    pub orientations: Option<usize>,
    #[arg(long, default_value_t = 3)]
    pub curvature_bins: usize,
    #[arg(long, default_value_t = 10)]
    pub iterations: usize,
    #[arg(long, default_value_t = curvemrf::DEFAULT_F_MAX)]
    pub f_max: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Draw |κ| as κ_max·u^p instead of uniformly.
    #[arg(long)]
    pub curvature_exponent: Option<f64>,
    /// Recalibrate on this many Fourier shapes after training.
    #[arg(long)]
    pub alg2_shapes: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub alg2_iterations: usize,
    /// Refit weights as well as constants during recalibration.
    #[arg(long)]
    pub alg2_refit_weights: bool,
    /// Side of the square canvas for recalibration shapes.
    #[arg(long, default_value_t = 100)]
    pub shape_size: usize,
    /// Existing output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeClass {
    Circles,
    Fourier,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub bank: PathBuf,
    #[arg(long, value_enum, default_value_t = ShapeClass::Circles)]
    pub shapes: ShapeClass,
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    #[arg(long, default_value_t = 100)]
    pub size: usize,
    #[arg(long, default_value_t = 5.0)]
    pub r_min: f64,
    #[arg(long, default_value_t = 50.0)]
    pub r_max: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderingArg {
    PixelsFirst,
    Interleaved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaArg {
    Trws,
    Bp,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct InferenceArgs {
    /// TRW-S passes.
    #[arg(long, default_value_t = DEFAULT_PASSES)]
    pub passes: usize,
    /// Stop early once the lower bound stalls (`--passes` is then the cap).
    #[arg(long)]
    pub auto_passes: bool,
    #[arg(long, value_enum, default_value_t = OrderingArg::PixelsFirst)]
    pub ordering: OrderingArg,
    #[arg(long, value_enum, default_value_t = GammaArg::Trws)]
    pub gamma: GammaArg,
    #[arg(long, default_value_t = DEFAULT_BLOCK_SIZE)]
    pub block_size: usize,
    /// Also solve the restricted LP and keep the better labeling.
    #[arg(long)]
    pub restricted_lp: bool,
    #[arg(long, default_value_t = 1e-6)]
    pub relative_threshold: f64,
    /// Write the restricted LP in LP format next to the outputs.
    #[arg(long)]
    pub dump_lp: bool,
    /// Accept images larger than 160×160.
    #[arg(long)]
    pub allow_large: bool,
}

impl InferenceArgs {
    pub fn options(&self) -> InferenceOptions {
        InferenceOptions {
            trws: TrwsOptions {
                passes: if self.auto_passes {
                    Passes::Auto { max: self.passes }
                } else {
                    Passes::Fixed(self.passes)
                },
                ordering: match self.ordering {
                    OrderingArg::PixelsFirst => Ordering::PixelsFirst,
                    OrderingArg::Interleaved => Ordering::Interleaved,
                },
                gamma: match self.gamma {
                    GammaArg::Trws => GammaRule::Trws,
                    GammaArg::Bp => GammaRule::Bp,
                },
            },
            block_size: self.block_size,
            restricted_lp: self.restricted_lp,
            relative_threshold: self.relative_threshold,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct InpaintArgs {
    #[arg(long)]
    pub bank: PathBuf,
    /// PGM seed mask: 255 foreground, 0 background, 128 free.
    #[arg(long)]
    pub mask: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub inference: InferenceArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SegmentArgs {
    /// Binary PPM colour image.
    #[arg(long)]
    pub image: PathBuf,
    /// PGM seed mask of the strokes.
    #[arg(long)]
    pub strokes: PathBuf,
    #[arg(long)]
    pub bank: PathBuf,
    /// Curvature weight; a comma-separated list runs a sweep.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub lambda: Vec<f64>,
    #[arg(long, default_value_t = curvemrf::pipeline::DEFAULT_GMM_COMPONENTS)]
    pub components: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub inference: InferenceArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioArg {
    Line,
    LineQuarterSlope,
    QuarterCircle,
}

impl From<ScenarioArg> for Scenario {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::Line => Scenario::Line,
            ScenarioArg::LineQuarterSlope => Scenario::LineQuarterSlope,
            ScenarioArg::QuarterCircle => Scenario::QuarterCircle,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BaselineArgs {
    #[arg(long, value_enum)]
    pub scenario: ScenarioArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ServeArgs {
    #[arg(long)]
    pub bank: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,
    /// Static files served under `/` (the browser client).
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
    /// Passes for jobs that do not name their own.
    #[arg(long, default_value_t = DEFAULT_PASSES)]
    pub passes: usize,
    #[arg(long)]
    pub allow_large: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct StrokeArgs {
    /// JSON `{width, height, strokes: [{points, radius, tag}]}`.
    #[arg(long)]
    pub script: PathBuf,
    /// Output PGM path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct RerunArgs {
    pub manifest: PathBuf,
    /// Write into this directory instead of the recorded one.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
