//! `utdv` command-line front end.
//!
//! Every subcommand is a pure function of its flags (and optional
//! [`RunConfig`]); failures map to exit code 1 (usage), 2 (schema) or
//! 3 (numerical) and print one JSON diagnostic line on stderr.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

mod commands;
pub mod config;

pub use config::{MaskParams, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Schema(String),

    #[error(transparent)]
    Core(#[from] utdv_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use utdv_core::Error as E;
        match self {
            CliError::Usage(_) => 1,
            CliError::Schema(_) => 2,
            CliError::Core(e) => match e {
                E::InvalidArgument(_) | E::Io(_) => 1,
                E::Shape(_) | E::Domain { .. } | E::Config(_) | E::Format(_) | E::Json(_) => 2,
                E::Numerical(_) | E::NotConverged { .. } | E::Diverged { .. } | E::EigenDiverged { .. } => 3,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            1 => "usage",
            2 => "schema",
            _ => "numerical",
        }
    }

    /// One-line JSON diagnostic.
    pub fn diagnostic(&self) -> String {
        let message = self.to_string().split_whitespace().collect::<Vec<_>>().join(" ");
        serde_json::json!({
            "error": self.kind(),
            "code": self.exit_code(),
            "message": message,
        })
        .to_string()
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "utdv", version, about = "Unrolled TDV reconstruction with Bayesian weight uncertainty")]
pub struct Cli {
    /// Use desk-scale defaults (small network, S = 5, 2000 iterations).
    #[arg(long, global = true)]
    pub desk: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic phantoms, their RSS references and optional measurements.
    GenData(GenDataArgs),
    /// Draw a Cartesian line mask.
    Mask(MaskArgs),
    /// Train a deterministic TDV model.
    Train(TrainArgs),
    /// Train a Gaussian weight distribution.
    TrainBayes(TrainBayesArgs),
    /// Reconstruct one measurement with a trained model.
    Reconstruct(ReconstructArgs),
    /// Posterior sampling: mean and standard-deviation maps.
    Uncertainty(UncertaintyArgs),
    /// Search a nonlinear eigenfunction of a regularizer.
    Eigen(EigenArgs),
    /// Compare a prediction with a reference (PSNR, NMSE, SSIM).
    Eval(EvalArgs),
    /// Export segment-averaged kernel covariances as CSV.
    InspectCov(InspectCovArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 16)]
    pub count: usize,
    /// Square image extent; overridden by --width/--height.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub coils: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write undersampled measurements `z_*.cfld` with masks `mask_*.json`.
    #[arg(long)]
    pub acceleration: Option<usize>,
    #[arg(long)]
    pub acs_fraction: Option<f64>,
    #[arg(long, default_value_t = 0.01)]
    pub noise_sigma: f64,
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Number of phase-encoding lines (image rows).
    #[arg(long)]
    pub lines: usize,
    #[arg(long, default_value_t = 4)]
    pub acceleration: usize,
    #[arg(long)]
    pub acs_fraction: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainCommon {
    /// Run configuration; flags given explicitly override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory with `img_*.cfld` training images.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub acceleration: Option<usize>,
    /// Per-iteration CSV log.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Checkpoint written every --checkpoint-every iterations and at the end.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub checkpoint_every: usize,
    /// Continue from a checkpoint instead of starting fresh.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: TrainCommon,
}

#[derive(Debug, Args)]
pub struct TrainBayesArgs {
    #[command(flatten)]
    pub common: TrainCommon,
    /// Deterministic model used as the initial mean.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Zero-filled k-space measurement (CFLD).
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub mask: PathBuf,
    /// Unrolled steps S (default 15, or 5 with --desk).
    #[arg(long)]
    pub steps: Option<usize>,
    /// Complex reconstruction (CFLD).
    #[arg(long)]
    pub out: PathBuf,
    /// Root-sum-of-squares magnitude (RFLD).
    #[arg(long)]
    pub rss: Option<PathBuf>,
    /// 16-bit PGM of the magnitude rescaled to [0, 1].
    #[arg(long)]
    pub pgm: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct UncertaintyArgs {
    #[arg(long)]
    pub dist: PathBuf,
    /// Single measurement (CFLD); needs --mask.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Reference magnitude for metrics (single-measurement mode).
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
    /// Directory of measurements from `gen-data` (z_*.cfld, mask_*.json, ref_*.rfld).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Posterior samples N.
    #[arg(long, default_value_t = 32)]
    pub n: usize,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EigenArgs {
    /// Registered regularizer name.
    #[arg(long, default_value = "tdv")]
    pub regularizer: String,
    /// JSON options passed to the regularizer constructor.
    #[arg(long, default_value = "{}")]
    pub options: String,
    /// Shorthand for `--options '{"path": MODEL}'` with the tdv regularizer.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Initial image (CFLD); random when absent.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 1)]
    pub coils: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 1.0)]
    pub step: f64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Prediction (RFLD, or CFLD reduced by root-sum-of-squares).
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// Also write the metrics as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectCovArgs {
    #[arg(long)]
    pub dist: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Limit rayon's global pool to `UTDV_THREADS` when set.
pub fn init_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("UTDV_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("UTDV_THREADS must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}

pub fn run(cli: Cli) -> CliResult<()> {
    let desk = cli.desk;
    match cli.command {
        Command::GenData(a) => commands::gen_data(&a),
        Command::Mask(a) => commands::mask(&a),
        Command::Train(a) => commands::train(&a, desk),
        Command::TrainBayes(a) => commands::train_bayes(&a, desk),
        Command::Reconstruct(a) => commands::reconstruct(&a, desk),
        Command::Uncertainty(a) => commands::uncertainty(&a, desk),
        Command::Eigen(a) => commands::eigen(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::InspectCov(a) => commands::inspect_cov(&a),
    }
}
