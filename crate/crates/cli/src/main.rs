use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use elecast::scoring::Metric;

mod aggregate;
mod config;
mod curves;
mod forecast;
mod inputs;
mod output;
mod score;
mod trade;

use config::{LossArg, ReferenceChoice, RunConfig, UsageError};

/// Election forecasting, scoring, trading backtests and expert aggregation.
#[derive(Debug, Parser)]
#[command(name = "elecast", version)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration. Flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Number of Monte Carlo paths.
    #[arg(long, global = true)]
    paths: Option<usize>,

    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,

    /// Loss fed to the online learner.
    #[arg(long, global = true, value_enum)]
    loss: Option<LossArg>,

    /// Reference for trading and aggregation: a market series or the
    /// experts' mean.
    #[arg(long, global = true, value_enum)]
    reference: Option<ReferenceChoice>,

    /// Worker threads for simulation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Comma-separated metrics: brier, log, selten, spherical, cdf.
    #[arg(long, global = true, value_delimiter = ',')]
    metrics: Option<Vec<Metric>>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the electoral-vote distribution and a win-probability series.
    Forecast,
    /// Fit per-state and market parameters and dump them as JSON.
    Calibrate,
    /// Score expert forecasts against realized outcomes.
    Score,
    /// Trading-score P&L of each expert against a reference.
    Trade,
    /// Combine an expert panel with exponential weights.
    Aggregate,
    /// Emit score-shape curves for discretized Gaussian densities.
    Curves,
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let cfg = RunConfig::load(cli)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| UsageError(format!("threads: {e}")))?;
    }
    match cli.command {
        Command::Forecast => forecast::cmd_forecast(&cfg),
        Command::Calibrate => forecast::cmd_calibrate(&cfg),
        Command::Score => score::cmd_score(&cfg),
        Command::Trade => trade::cmd_trade(&cfg),
        Command::Aggregate => aggregate::cmd_aggregate(&cfg),
        Command::Curves => curves::cmd_curves(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
