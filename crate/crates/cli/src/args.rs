use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "asn",
    version,
    about = "Adaptive surface normal recovery from depth maps"
)]
pub struct Cli {
    /// Seed for triplet sampling, synthetic noise, and initialization.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,

    /// Odd local window size r [default: 5, or 3 for gradcheck].
    #[arg(long, global = true)]
    pub patch: Option<usize>,

    /// Triplets sampled per pixel K [default: 40, or 8 for gradcheck].
    #[arg(long, global = true)]
    pub k: Option<usize>,

    /// Output file. Text results go to stdout when omitted; image results require it.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Back-project a depth map into a 3-channel point map.
    Unproject {
        #[arg(long)]
        depth: PathBuf,
        #[arg(long)]
        intrinsics: PathBuf,
    },
    /// Recover a surface normal map from depth.
    Normals {
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long)]
        depth: PathBuf,
        #[arg(long)]
        intrinsics: PathBuf,
        /// Context map; a uniform context is used when omitted.
        #[arg(long)]
        context: Option<PathBuf>,
        /// Enumerate every triangle of the window instead of sampling K.
        #[arg(long)]
        exhaustive: bool,
    },
    /// Evaluate depth, normal, and point-cloud metrics.
    Metrics(MetricsArgs),
    /// Context-derivative guidance weights as a 1-channel image.
    Guidance {
        #[arg(long)]
        context: PathBuf,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
        order: u8,
    },
    /// Pick the highest-guidance pixels; writes `x,y,weight` rows.
    Sample {
        #[arg(long)]
        context: PathBuf,
        #[arg(long, default_value_t = 0.4)]
        ratio: f64,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
        order: u8,
        /// Only pixels valid in this depth map are eligible.
        #[arg(long)]
        depth: Option<PathBuf>,
    },
    /// Evaluate one training loss term.
    Loss(LossArgs),
    /// Compare analytic gradients with finite differences on random problems.
    Gradcheck {
        #[arg(long, value_enum)]
        target: TargetArg,
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 16)]
        size: usize,
        /// Largest acceptable relative error.
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
    /// Ablation drivers on synthetic scenes.
    #[command(subcommand)]
    Experiment(Experiment),
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub pred_depth: Option<PathBuf>,
    #[arg(long)]
    pub gt_depth: Option<PathBuf>,
    #[arg(long)]
    pub pred_normals: Option<PathBuf>,
    #[arg(long)]
    pub gt_normals: Option<PathBuf>,
    /// Adds point-cloud metrics to a depth evaluation.
    #[arg(long)]
    pub intrinsics: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct LossArgs {
    #[arg(long, value_enum)]
    pub term: Term,
    #[arg(long)]
    pub pred_depth: Option<PathBuf>,
    #[arg(long)]
    pub gt_depth: Option<PathBuf>,
    #[arg(long)]
    pub pred_normals: Option<PathBuf>,
    #[arg(long)]
    pub gt_normals: Option<PathBuf>,
    #[arg(long)]
    pub intrinsics: Option<PathBuf>,
    #[arg(long)]
    pub context: Option<PathBuf>,
    /// Sampling ratio of the guided normal loss.
    #[arg(long, default_value_t = 0.4)]
    pub ratio: f64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub order: u8,
    /// Use the `- (Σe)²/m²` form of the log-depth loss.
    #[arg(long)]
    pub silog_minus: bool,
    /// Apply guidance weights on every pixel, not only sampled ones.
    #[arg(long)]
    pub global_guidance: bool,
    /// Global triangles of the virtual normal loss.
    #[arg(long, default_value_t = 1000)]
    pub vn_triplets: usize,
}

#[derive(Debug, Subcommand)]
pub enum Experiment {
    /// Area-weighted vs. simple-average recovery under depth noise.
    Noise {
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 64)]
        height: usize,
        /// Number of seeds, counting up from --seed.
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        /// Noise levels in meters [default: {0, .002, .005, .01, .02} x radius].
        #[arg(long, value_delimiter = ',')]
        sigmas: Option<Vec<f64>>,
    },
    /// Accuracy and single-threaded runtime versus K.
    Triplets {
        #[arg(long, value_delimiter = ',', default_value = "10,20,30,40,50,60")]
        ks: Vec<usize>,
        #[arg(long, default_value_t = 96)]
        width: usize,
        #[arg(long, default_value_t = 96)]
        height: usize,
        /// Depth noise as a fraction of the sphere radius.
        #[arg(long, default_value_t = 0.01)]
        noise: f64,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        /// Write `value,method,time_ms` rows here.
        #[arg(long)]
        timing: Option<PathBuf>,
    },
    /// Accuracy and runtime versus window size on the corner scene.
    Patch {
        #[arg(long, value_delimiter = ',', default_value = "3,5,7,9")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 48)]
        height: usize,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long)]
        timing: Option<PathBuf>,
    },
    /// Odd window size covering `ratio` of the image area.
    Window {
        #[arg(long, default_value_t = 1280)]
        width: usize,
        #[arg(long, default_value_t = 960)]
        height: usize,
        #[arg(long, default_value_t = 8e-5)]
        ratio: f64,
    },
    /// Learn a context map on the corner scene by gradient descent.
    FitContext {
        #[arg(long, default_value_t = 32)]
        width: usize,
        #[arg(long, default_value_t = 24)]
        height: usize,
        #[arg(long, default_value_t = 500)]
        steps: usize,
        #[arg(long, default_value_t = 1000.0)]
        lr: f64,
        /// Write the learned context here.
        #[arg(long)]
        context_out: Option<PathBuf>,
        /// Write a JSON summary with the crease-pixel errors here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Asn,
    Sobel,
    Lsq,
    Average,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Term {
    Silog,
    Asn,
    Normal,
    Total,
    Vn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TargetArg {
    Depth,
    Context,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}
