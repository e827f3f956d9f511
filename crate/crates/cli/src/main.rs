use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

#[derive(Parser, Debug)]
#[command(name = "forecast", version, about = "Mid-term monthly load forecasting with ETS and a residual dilated LSTM")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the ensemble and write forecasts, checkpoints and logs
    Train(Box<TrainArgs>),
    /// Score a forecast file against actual values
    Evaluate(EvaluateArgs),
    /// Compare analytic gradients with finite differences on small fixtures
    Gradcheck(GradcheckArgs),
    /// Write a synthetic multiplicative-seasonal data set
    Synth(SynthArgs),
    /// Forecast with the seasonal naive and Holt-Winters baselines
    Baseline(BaselineArgs),
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Input CSV with `id,year,month,value` rows
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// File of `key = value` lines using the flag names below; flags win
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Learning rate
    #[arg(long)]
    pub lr: Option<f64>,
    /// Hidden and cell state length
    #[arg(long)]
    pub m: Option<usize>,
    /// Pinball loss asymmetry
    #[arg(long)]
    pub tau: Option<f64>,
    /// Level-penalty weight
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Number of final epochs whose forecasts are averaged
    #[arg(long = "L", value_name = "L")]
    pub snapshot_window: Option<usize>,
    /// Models per run, each holding out one of K series subsets
    #[arg(long = "K", value_name = "K")]
    pub pool_size: Option<usize>,
    /// Independent runs
    #[arg(long = "R", value_name = "R")]
    pub runs: Option<usize>,
    /// Master seed of the whole ensemble
    #[arg(long)]
    pub seed: Option<u64>,
    /// Series per mini-batch
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Maximum global gradient norm
    #[arg(long)]
    pub clip: Option<f64>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    pub threads: Option<usize>,
    /// adam or sgd
    #[arg(long)]
    pub optimizer: Option<String>,
    /// mean, median or trimmed_mean
    #[arg(long)]
    pub aggregation: Option<String>,
    /// validation, test or production
    #[arg(long)]
    pub stage: Option<String>,
    #[arg(long)]
    pub test_months: Option<usize>,
    #[arg(long)]
    pub valid_months: Option<usize>,
    /// Also write every member's forecast to members.csv
    #[arg(long)]
    pub emit_members: bool,
}

impl TrainArgs {
    /// Flags that were given, as configuration keys and values.
    pub fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut push = |key: &'static str, value: Option<String>| {
            if let Some(v) = value {
                out.push((key, v));
            }
        };
        push("epochs", self.epochs.map(|v| v.to_string()));
        push("lr", self.lr.map(|v| v.to_string()));
        push("m", self.m.map(|v| v.to_string()));
        push("tau", self.tau.map(|v| v.to_string()));
        push("lambda", self.lambda.map(|v| v.to_string()));
        push("L", self.snapshot_window.map(|v| v.to_string()));
        push("K", self.pool_size.map(|v| v.to_string()));
        push("R", self.runs.map(|v| v.to_string()));
        push("seed", self.seed.map(|v| v.to_string()));
        push("batch-size", self.batch_size.map(|v| v.to_string()));
        push("clip", self.clip.map(|v| v.to_string()));
        push("threads", self.threads.map(|v| v.to_string()));
        push("optimizer", self.optimizer.clone());
        push("aggregation", self.aggregation.clone());
        push("stage", self.stage.clone());
        push("test-months", self.test_months.map(|v| v.to_string()));
        push("valid-months", self.valid_months.map(|v| v.to_string()));
        out
    }
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// CSV with `id,year,month,forecast` rows
    #[arg(long)]
    pub forecasts: PathBuf,
    /// CSV with `id,year,month,value` rows covering the forecast months
    #[arg(long)]
    pub actuals: PathBuf,
    /// Output directory for the report files
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Central-difference step
    #[arg(long, default_value_t = mtlf_core::diagnostics::DEFAULT_STEP)]
    pub step: f64,
    /// Seed of the random fixtures
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Largest accepted relative error
    #[arg(long, default_value_t = mtlf_core::diagnostics::TOLERANCE)]
    pub tolerance: f64,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Number of series
    #[arg(long, default_value_t = 35)]
    pub n: usize,
    /// Years per series (at least 3)
    #[arg(long, default_value_t = 10)]
    pub years: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Standard deviation of the log-normal noise
    #[arg(long, default_value_t = 0.02)]
    pub noise: f64,
    /// Output CSV path
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct BaselineArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// seasonal_naive or holt_winters (default: both)
    #[arg(long)]
    pub kind: Option<String>,
    /// validation, test or production
    #[arg(long, default_value = "test")]
    pub stage: String,
    #[arg(long, default_value_t = 12)]
    pub test_months: usize,
    #[arg(long, default_value_t = 12)]
    pub valid_months: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(args) => commands::train(args),
        Command::Evaluate(args) => commands::evaluate(args),
        Command::Gradcheck(args) => commands::gradcheck(args),
        Command::Synth(args) => commands::synth(args),
        Command::Baseline(args) => commands::baseline(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
