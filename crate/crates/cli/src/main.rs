//! `dpgds`: train, forecast, export and synthesize data for deep
//! Poisson–gamma dynamical systems.

mod error;
mod export;
mod forecast;
mod output;
mod settings;
mod synth;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::settings::Widths;

#[derive(Parser)]
#[command(name = "dpgds", version, about = "Deep Poisson-gamma dynamical systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model with Gibbs sampling or stochastic-gradient MCMC.
    Train(TrainArgs),
    /// Forecast rates for the steps after a checkpoint's last step.
    Forecast(ForecastArgs),
    /// Write topic word lists, trajectories and transition submatrices.
    Export(ExportArgs),
    /// Generate synthetic data.
    #[command(subcommand)]
    Synth(SynthCommand),
}

#[derive(Args)]
pub struct TrainArgs {
    /// Plain-text key = value file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// dense-csv or sparse-triplet.
    #[arg(long)]
    pub format: Option<String>,
    /// Treat the data as binary (Bernoulli-Poisson link).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub binary: Option<bool>,
    /// gibbs or sgmcmc.
    #[arg(long)]
    pub engine: Option<String>,
    /// Layer widths, bottom first, e.g. 200,100,50.
    #[arg(long)]
    pub layers: Option<Widths>,
    /// Total iterations; 40% burn-in, the rest collected.
    #[arg(long)]
    pub iters: Option<u64>,
    #[arg(long)]
    pub burnin: Option<u64>,
    #[arg(long)]
    pub collect: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub tau0: Option<f64>,
    #[arg(long)]
    pub gamma0: Option<f64>,
    #[arg(long)]
    pub eta0: Option<f64>,
    #[arg(long)]
    pub eps0: Option<f64>,
    /// Share one δ across all time steps.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub tie_delta: Option<bool>,
    /// Minibatch window length for sgmcmc.
    #[arg(long)]
    pub sub_t: Option<usize>,
    #[arg(long)]
    pub step_a: Option<f64>,
    #[arg(long)]
    pub step_b: Option<f64>,
    #[arg(long)]
    pub step_c: Option<f64>,
    /// Thermostat step as a multiple of the simplex step (sgmcmc).
    #[arg(long)]
    pub thermostat_scale: Option<f64>,
    /// Move β with the thermostat instead of fixing it at 1 (sgmcmc).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub sample_beta: Option<bool>,
    /// Fraction of each cell's count kept for training; enables held-out metrics.
    #[arg(long)]
    pub holdout_fraction: Option<f64>,
    /// Hold out the final time step entirely (requires --holdout-fraction).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub holdout_final: Option<bool>,
    #[arg(long)]
    pub top_m: Option<usize>,
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long, env = "DPGDS_OUT_DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ForecastArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub horizon: usize,
    /// expectation or monte-carlo.
    #[arg(long, default_value = "expectation")]
    pub mode: String,
    /// Draws for the monte-carlo mode.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Observed counts for the forecast steps; its last `horizon` columns are compared.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, default_value = "dense-csv")]
    pub format: String,
    #[arg(long, default_value_t = dpgds::eval::DEFAULT_TOP_M)]
    pub top_m: usize,
    #[arg(long, env = "DPGDS_OUT_DIR", default_value = "dpgds-out")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// One vocabulary term per line, in row order.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Topics per layer kept in the transition submatrix.
    #[arg(long, default_value_t = 10)]
    pub top_topics: usize,
    #[arg(long, env = "DPGDS_OUT_DIR", default_value = "dpgds-out")]
    pub out: PathBuf,
}

#[derive(Subcommand)]
pub enum SynthCommand {
    /// Bouncing-ball videos as binary matrices.
    Balls(BallsArgs),
    /// Draws from the generative model.
    Model(ModelArgs),
}

#[derive(Args)]
pub struct BallsArgs {
    #[arg(long = "n", default_value_t = 3)]
    pub n_balls: usize,
    #[arg(long, default_value_t = 30)]
    pub size: usize,
    #[arg(long = "t", default_value_t = 100)]
    pub steps: usize,
    #[arg(long, default_value_t = 1)]
    pub sequences: usize,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub speed: Option<f64>,
    /// Let balls pass through each other.
    #[arg(long)]
    pub no_collisions: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "dense-csv")]
    pub format: String,
    #[arg(long, env = "DPGDS_OUT_DIR", default_value = "dpgds-out")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub layers: Widths,
    #[arg(long = "v")]
    pub vocab: usize,
    #[arg(long = "t")]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub tau0: f64,
    #[arg(long, default_value_t = 100.0)]
    pub gamma0: f64,
    #[arg(long, default_value_t = 0.1)]
    pub eta0: f64,
    #[arg(long, default_value_t = 0.1)]
    pub eps0: f64,
    #[arg(long)]
    pub tie_delta: bool,
    #[arg(long)]
    pub binary: bool,
    #[arg(long, default_value = "dense-csv")]
    pub format: String,
    #[arg(long, env = "DPGDS_OUT_DIR", default_value = "dpgds-out")]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train::run(a),
        Command::Forecast(a) => forecast::run(a),
        Command::Export(a) => export::run(a),
        Command::Synth(SynthCommand::Balls(a)) => synth::balls(a),
        Command::Synth(SynthCommand::Model(a)) => synth::model(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dpgds: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
