use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use realuid_core::engine::Mode;

fn parse_mode(s: &str) -> Result<Mode, String> {
    Mode::parse(s).ok_or_else(|| {
        let names: Vec<&str> = Mode::ALL.iter().map(|m| m.name()).collect();
        format!("unknown mode {s:?}; expected one of {}", names.join(", "))
    })
}

#[derive(Debug, Parser)]
#[command(
    name = "realuid",
    version,
    about = "Train matching teachers and distill them into one-step generators"
)]
pub struct Cli {
    /// Run configuration (JSON)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output run directory, or output file for `sample` and `oracle`
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Overrides the configured seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for sweeps; capped by REALUID_THREADS
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a matching network on the configured data
    TrainTeacher(TrainTeacherArgs),
    /// Distill a teacher into a one-step generator
    Distill(DistillArgs),
    /// Continue a distilled generator with a teacher-initialized fake model
    Finetune(FinetuneArgs),
    /// Sweep (alpha, beta) cells and summarize them in ablation.csv
    Ablate(AblateArgs),
    /// Closed-form quantities of the 1D Gaussian problem
    Oracle(OracleArgs),
    /// Write samples from a run's generator or teacher
    Sample(SampleArgs),
    /// Score a run's samples against reference data
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct TrainTeacherArgs {
    /// Suppress per-record progress lines
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args, Default, Clone)]
pub struct CoeffArgs {
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DistillArgs {
    /// Teacher run directory or checkpoint file
    #[arg(long)]
    pub teacher: PathBuf,
    #[command(flatten)]
    pub coeffs: CoeffArgs,
    /// Overrides train.n_iters
    #[arg(long)]
    pub iters: Option<u64>,
    /// Sets both learning rates
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    /// Distillation run to continue
    #[arg(long)]
    pub from: PathBuf,
    /// Teacher checkpoint; defaults to the copy inside the source run
    #[arg(long)]
    pub teacher: Option<PathBuf>,
    #[arg(long)]
    pub alpha_ft: Option<f64>,
    #[arg(long)]
    pub beta_ft: Option<f64>,
    #[arg(long)]
    pub gamma_ft: Option<f64>,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<Mode>,
    /// Learning rate for both players
    #[arg(long, default_value_t = 1e-5)]
    pub lr: f64,
    #[arg(long)]
    pub iters: Option<u64>,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Teacher run directory or checkpoint file
    #[arg(long)]
    pub teacher: PathBuf,
    /// `lo:hi:step` for a square grid over both coefficients, or explicit
    /// pairs `a,b;a,b;...`
    #[arg(long)]
    pub grid: String,
    /// Iterations per cell; overrides train.n_iters
    #[arg(long)]
    pub iters: Option<u64>,
    /// Metric level for steps_to_threshold. Defaults to the final metric of
    /// the (1, 1) cell, or the median final metric without one.
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(subcommand)]
    pub command: OracleCommand,
}

#[derive(Debug, Args, Clone)]
pub struct GaussArgs {
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub mu_star: f64,
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    pub mu_theta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// Defaults to alpha
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Args, Clone)]
pub struct GridArgs {
    #[arg(long, default_value_t = 0.05)]
    pub t_min: f64,
    #[arg(long, default_value_t = 0.95)]
    pub t_max: f64,
    #[arg(long, default_value_t = 19)]
    pub nt: usize,
    #[arg(long, default_value_t = -6.0, allow_negative_numbers = true)]
    pub x_min: f64,
    #[arg(long, default_value_t = 6.0, allow_negative_numbers = true)]
    pub x_max: f64,
    #[arg(long, default_value_t = 121)]
    pub nx: usize,
}

#[derive(Debug, Subcommand)]
pub enum OracleCommand {
    /// Densities, fields, optimal fake and pointwise distance on a (t, x) grid
    Surface {
        #[command(flatten)]
        gauss: GaussArgs,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// A distance integrated over (t, x) by quadrature
    Distance {
        #[command(flatten)]
        gauss: GaussArgs,
        /// uid, real_uid, general or normalized
        #[arg(long, default_value = "real_uid")]
        kind: String,
    },
    /// Closed-form optimal fake against a brute-force maximization
    OptimalFake {
        #[command(flatten)]
        gauss: GaussArgs,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Run every oracle self-check; exits 5 if any fails
    Verify,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Run directory
    #[arg(long)]
    pub from: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    /// Use EMA generator weights
    #[arg(long)]
    pub ema: bool,
    /// Use the best-scoring EMA checkpoint
    #[arg(long, conflicts_with = "ema")]
    pub best: bool,
    /// Sample the teacher with the multi-step ODE sampler instead
    #[arg(long, conflicts_with_all = ["ema", "best"])]
    pub teacher: bool,
    /// Euler steps for --teacher; defaults to eval.teacher_nfe
    #[arg(long, requires = "teacher")]
    pub nfe: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Run directory
    #[arg(long)]
    pub gen: PathBuf,
    /// `data` for fresh held-out draws from the run's data source, or a
    /// samples CSV
    #[arg(long = "ref", default_value = "data")]
    pub reference: String,
    #[arg(long)]
    pub n: Option<usize>,
    /// Use the raw generator weights instead of the EMA ones
    #[arg(long)]
    pub raw: bool,
    /// Score the teacher's multi-step samples instead
    #[arg(long, conflicts_with = "raw")]
    pub teacher: bool,
    #[arg(long, requires = "teacher")]
    pub nfe: Option<usize>,
}
