//! Command-line driver for data ingestion, trend fitting, two-stage training, tuning, the
//! regression benchmark and what-if scenarios.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{PhaseName, RunConfig};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "steti", version, about = "Censoring-robust spacecraft lifetime forecasting")]
struct Cli {
    /// TOML run configuration; relative paths inside it resolve against its directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for grid, sweep and trial evaluation.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    missions: Option<PathBuf>,
    #[arg(long, global = true)]
    funding: Option<PathBuf>,
    #[arg(long, global = true)]
    deflator: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate the inputs and summarize them.
    Ingest,
    /// Fit the censoring-corrected and naive growth trends.
    StetiFit,
    /// Run the two-stage grid for one or both phases.
    Train {
        #[arg(long, value_enum)]
        phase: Option<PhaseName>,
        #[arg(long)]
        max_epochs: Option<usize>,
        #[arg(long)]
        patience: Option<usize>,
    },
    /// Search hyperparameters per stage, then run the grid with the best ones.
    Tune {
        #[arg(long, value_enum)]
        phase: Option<PhaseName>,
        #[arg(long)]
        max_trials: Option<usize>,
        #[arg(long)]
        max_epochs: Option<usize>,
        #[arg(long)]
        patience: Option<usize>,
    },
    /// Search the regression baseline and compare it with a trained model.
    Benchmark {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Sweep one attribute of a baseline record through a trained model.
    Scenario {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

fn configure(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.paths.out = o.clone();
    }
    if let Some(m) = &cli.missions {
        cfg.paths.missions = m.clone();
    }
    if let Some(f) = &cli.funding {
        cfg.paths.funding = Some(f.clone());
    }
    if let Some(d) = &cli.deflator {
        cfg.paths.deflator = Some(d.clone());
    }
    match &cli.command {
        Command::Train {
            phase,
            max_epochs,
            patience,
        } => {
            if let Some(p) = phase {
                cfg.train.phases = vec![*p];
            }
            cfg.train.max_epochs = max_epochs.unwrap_or(cfg.train.max_epochs);
            cfg.train.patience = patience.unwrap_or(cfg.train.patience);
        }
        Command::Tune {
            phase,
            max_trials,
            max_epochs,
            patience,
        } => {
            if let Some(p) = phase {
                cfg.tune.phases = vec![*p];
            }
            cfg.tune.max_trials = max_trials.unwrap_or(cfg.tune.max_trials);
            cfg.train.max_epochs = max_epochs.unwrap_or(cfg.train.max_epochs);
            cfg.train.patience = patience.unwrap_or(cfg.train.patience);
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = configure(&cli)?;
    let jobs = cli.jobs.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Runtime(format!("cli: thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Ingest => commands::ingest(&cfg),
        Command::StetiFit => commands::steti_fit(&cfg),
        Command::Train { .. } => commands::train(&cfg),
        Command::Tune { .. } => commands::tune(&cfg),
        Command::Benchmark { checkpoint } => commands::benchmark(&cfg, checkpoint.as_deref()),
        Command::Scenario { checkpoint } => commands::scenario(&cfg, checkpoint.as_deref()),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
