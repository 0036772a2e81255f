use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

mod commands;
mod config;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

/// Gradient-estimator benchmarks for discrete exponential-family distributions.
#[derive(Debug, Parser)]
#[command(name = "aimle", version)]
struct Cli {
    /// Worker threads [default: available cores]
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Cosine similarity to the exact gradient over estimators, sample counts and seeds.
    BenchCosine(BenchCosineArgs),
    /// IMLE over an inclusive λ grid plus one adaptive row.
    SweepLambda(SweepLambdaArgs),
    /// Train θ on the quadratic toy loss and record the controller trajectory.
    OptimizeToy(OptimizeToyArgs),
    /// Exact expected IMLE target vs the exact gradient, by enumeration.
    BiasEnum(BiasEnumArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML file with keys named after the long flags; flags take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Root seed; run i uses seed + i. Chosen and logged when absent
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV path
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchCosineArgs {
    #[command(flatten)]
    pub common: Common,
    /// Polytope, e.g. categorical:50, ksubset:10:3, tree:5, grid:3x3
    #[arg(long)]
    pub spec: Option<String>,
    /// Comma-separated estimators, e.g. sfe,imle-central:0.5,aimle-central
    #[arg(long, value_delimiter = ',')]
    pub estimators: Option<Vec<String>>,
    /// Comma-separated sample counts
    #[arg(long = "S", value_delimiter = ',')]
    pub samples: Option<Vec<usize>>,
    /// Number of seeds
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Perturbation: none, gumbel[:τ] or sog:k[:s[:τ]]
    #[arg(long)]
    pub noise: Option<String>,
    /// Controller step for α
    #[arg(long)]
    pub eta: Option<f64>,
    /// Controller target c
    #[arg(long)]
    pub target: Option<f64>,
    /// Adaptive warm-up passes before the measured one
    #[arg(long)]
    pub warmup_steps: Option<usize>,
    /// Samples per warm-up pass
    #[arg(long)]
    pub warmup_samples: Option<usize>,
    /// Record wall-clock time per row
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct SweepLambdaArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub spec: Option<String>,
    #[arg(long)]
    pub lambda_min: Option<f64>,
    #[arg(long)]
    pub lambda_max: Option<f64>,
    /// Grid size, endpoints included
    #[arg(long)]
    pub lambda_points: Option<usize>,
    #[arg(long = "S")]
    pub samples: Option<usize>,
    /// forward or central
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub noise: Option<String>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub target: Option<f64>,
    #[arg(long)]
    pub warmup_steps: Option<usize>,
    /// Also run STE and SFE at the same sample count
    #[arg(long)]
    pub baselines: bool,
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct OptimizeToyArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub spec: Option<String>,
    /// exact, sfe, ste, gumbel-softmax, imle-forward:λ, imle-central:λ, aimle-forward, aimle-central
    #[arg(long)]
    pub estimator: Option<String>,
    #[arg(long = "S")]
    pub samples: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// sgd or adam
    #[arg(long)]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub noise: Option<String>,
    /// Initial α of the controller
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub target: Option<f64>,
    /// Continue from a checkpoint written by an earlier run
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Where to write the final checkpoint [default: <out>.checkpoint.json]
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BiasEnumArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub spec: Option<String>,
    /// Comma-separated steps
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    #[arg(long)]
    pub seeds: Option<usize>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    match cli.command {
        Command::BenchCosine(a) => commands::bench_cosine(a),
        Command::SweepLambda(a) => commands::sweep_lambda(a),
        Command::OptimizeToy(a) => commands::optimize_toy(a),
        Command::BiasEnum(a) => commands::bias_enum(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("aimle: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
