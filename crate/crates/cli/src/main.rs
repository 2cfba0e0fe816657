//! `ddib`: train small diffusion models on point distributions, translate
//! samples between domains through their shared Gaussian latent, and
//! compare the translations against optimal-transport baselines.
//!
//! Exit codes: 0 success, 1 usage error (bad flags or parameter values),
//! 2 data error (malformed or incompatible inputs), 3 numeric failure
//! (divergence or non-convergence).

mod cache;
mod config;
mod plot;
mod run;
mod transfer;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use ddib_core::datasets::DatasetKind;
use ddib_core::Error;

#[derive(Parser)]
#[command(name = "ddib", version, about, propagate_version = true)]
struct Cli {
    /// Experiment configuration file (TOML); flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample one of the built-in 2D datasets to CSV.
    Gen(GenArgs),
    /// Train a diffusion model on a built-in domain or a CSV point file.
    Train(TrainArgs),
    /// Map data points to latent codes (forward probability-flow solve).
    Encode(SolveArgs),
    /// Map latent codes back to data points (reverse solve).
    Decode(SolveArgs),
    /// Translate points from a source model's domain to a target model's.
    Translate(TranslateArgs),
    /// Round-trip points A→B→A and report per-point displacement.
    Cycle(CycleArgs),
    /// Evaluate the five-pair cycle-consistency table.
    CycleTable(CycleTableArgs),
    /// Solve a transport problem between two point files.
    Ot(OtArgs),
    /// Recolor an image toward a reference image's palette.
    ColorTransfer(TransferArgs),
    /// Pixel MSE between two images in normalized [-1, 1] channel units.
    Mse(MseArgs),
    /// Render point files as side-by-side SVG scatter panels.
    Plot(PlotArgs),
}

fn parse_kind(s: &str) -> std::result::Result<DatasetKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Args)]
struct GenArgs {
    /// Dataset to sample (full name or short code, e.g. moons or m).
    #[arg(long, value_parser = parse_kind)]
    kind: DatasetKind,
    /// Number of points (default: the [datasets] section).
    #[arg(long)]
    n: Option<usize>,
    /// Sampling seed (default: the [datasets] section).
    #[arg(long)]
    seed: Option<u64>,
    /// Standardize the sample to zero mean and unit variance per axis.
    #[arg(long)]
    standardize: bool,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Built-in domain to generate, standardize, and train on.
    #[arg(long, value_parser = parse_kind, conflicts_with = "data")]
    domain: Option<DatasetKind>,
    /// CSV point file to train on as-is (see --standardize).
    #[arg(long)]
    data: Option<PathBuf>,
    /// With --data: standardize the points before training.
    #[arg(long, requires = "data")]
    standardize: bool,
    /// With --domain: number of points to generate.
    #[arg(long, requires = "domain")]
    n: Option<usize>,
    /// With --domain: generation seed.
    #[arg(long, requires = "domain")]
    seed: Option<u64>,
    /// Training iterations.
    #[arg(long)]
    iterations: Option<usize>,
    /// Minibatch size.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Weight EMA decay.
    #[arg(long)]
    ema_decay: Option<f64>,
    /// Seed for weight init, batch sampling, and noise draws.
    #[arg(long)]
    train_seed: Option<u64>,
    /// Schedule length T.
    #[arg(long)]
    steps: Option<usize>,
    /// First-step beta.
    #[arg(long)]
    beta_min: Option<f64>,
    /// Last-step beta.
    #[arg(long)]
    beta_max: Option<f64>,
    /// Output model path (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    /// Trained model file; its stored schedule drives the solve.
    #[arg(long)]
    model: PathBuf,
    /// Input points CSV.
    #[arg(long)]
    points: PathBuf,
    /// DDIM transitions (default: the [solve] section).
    #[arg(long)]
    steps: Option<usize>,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Also dump every intermediate state as CSV (step,x...,tag).
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct TranslateArgs {
    /// Model of the domain the points come from.
    #[arg(long)]
    src_model: PathBuf,
    /// Model of the domain to translate into.
    #[arg(long)]
    tgt_model: PathBuf,
    /// Input points CSV.
    #[arg(long)]
    points: PathBuf,
    /// DDIM transitions per leg (default: the [solve] section).
    #[arg(long)]
    steps: Option<usize>,
    /// Output CSV path for the translated points.
    #[arg(long)]
    out: PathBuf,
    /// Also write the shared latent codes as CSV.
    #[arg(long)]
    latents: Option<PathBuf>,
    /// Also write a per-point JSON report (source, latent, target).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct CycleArgs {
    #[arg(long)]
    model_a: PathBuf,
    #[arg(long)]
    model_b: PathBuf,
    /// Points in domain A to round-trip.
    #[arg(long)]
    points: PathBuf,
    /// DDIM transitions per leg (default: the [solve] section).
    #[arg(long)]
    steps: Option<usize>,
    /// Output JSON report with per-point intermediates and the mean L2.
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct CycleTableArgs {
    /// Directory holding one <domain>.model.json per domain.
    #[arg(long)]
    models_dir: PathBuf,
    /// Comma-separated domains to include (default: all six).
    #[arg(long)]
    domains: Option<String>,
    /// Points per domain (default: the [datasets] section).
    #[arg(long)]
    n: Option<usize>,
    /// Generation seed (default: the [datasets] section).
    #[arg(long)]
    seed: Option<u64>,
    /// DDIM transitions per leg (default: the [solve] section).
    #[arg(long)]
    steps: Option<usize>,
    /// Output CSV path for the table.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum OtAlgorithm {
    /// Exact assignment (n = m, up to 4096 points).
    Emd,
    /// Entropic regularization, log-domain.
    Sinkhorn,
}

#[derive(Args)]
struct OtArgs {
    /// Solver to run.
    #[arg(value_enum)]
    algorithm: OtAlgorithm,
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    /// Sinkhorn regularization strength.
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    /// Sinkhorn iteration cap.
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
    /// Sinkhorn marginal-violation tolerance.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Output JSON path for the transport plan.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TransferArgs {
    /// Image whose palette the subject is recolored toward (PPM).
    #[arg(long)]
    reference: PathBuf,
    /// Image to recolor (PPM).
    #[arg(long)]
    subject: PathBuf,
    #[arg(long, value_enum)]
    method: transfer::Method,
    /// Palette subsample size for the transport baselines.
    #[arg(long, default_value_t = ddib_core::ot::DEFAULT_COLOR_SAMPLES)]
    sample: usize,
    /// Subsampling seed.
    #[arg(long, default_value_t = 9)]
    seed: u64,
    /// Allow the ddib method to train per-image models on a cache miss.
    #[arg(long)]
    train: bool,
    /// Output PPM path.
    #[arg(long)]
    out: PathBuf,
    /// Also write a JSON report with the pixel-MSE comparisons.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct MseArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    /// Point CSV files, one panel each, titled by file stem.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Output SVG path.
    #[arg(long)]
    out: PathBuf,
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parameter(_) | Error::Capacity(_) => 1,
        Error::Shape(_)
        | Error::Degenerate(_)
        | Error::Compatibility(_)
        | Error::Format(_)
        | Error::Io(_) => 2,
        Error::Numeric { .. } | Error::Convergence { .. } | Error::Training { .. } => 3,
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version print to stdout and exit 0; genuine usage
            // errors print to stderr and exit 1.
            let code = i32::from(e.use_stderr());
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run::dispatch(cli) {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}
