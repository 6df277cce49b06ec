//! `mmicl`: run experiments and the invariant suite from the command line.
//!
//! Exit codes: 0 on success, 1 when a check or a run fails, 2 on a
//! configuration or usage error. `MMICL_THREADS` sets the worker count.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use mmicl::experiments::{self, ExperimentConfig, ExperimentKind, Format};
use mmicl::{checks, parallel, Error};

#[derive(Parser)]
#[command(name = "mmicl", version, about = "Multi-modal in-context learning laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its results.
    Run {
        /// JSON config file; missing fields take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the experiment named in the config.
        #[arg(long)]
        experiment: Option<String>,
        /// Override the seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Output format: csv or json.
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Run the invariant suite.
    Check,
    /// Print the default config of an experiment as JSON.
    Config {
        #[arg(long, default_value = "fig2")]
        experiment: String,
    },
}

enum Failure {
    Config(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_) | Error::Json(_) => Failure::Config(e.to_string()),
            other => Failure::Run(other.to_string()),
        }
    }
}

fn load_config(
    path: Option<&PathBuf>,
    experiment: Option<&str>,
    seed: Option<u64>,
) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::from_file(p).map_err(|e| Failure::Config(e.to_string()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(x) = experiment {
        cfg.experiment = x.parse::<ExperimentKind>()?;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(
    config: Option<PathBuf>,
    experiment: Option<String>,
    seed: Option<u64>,
    out: PathBuf,
    format: String,
) -> Result<(), Failure> {
    let format: Format = format.parse()?;
    let cfg = load_config(config.as_ref(), experiment.as_deref(), seed)?;
    log::info!("running {} (config {})", cfg.experiment.name(), cfg.hash());
    let start = Instant::now();
    let output = experiments::run(&cfg)?;
    let wall = start.elapsed().as_secs_f64();
    let paths = experiments::write_outputs(&output, &out, format, wall)?;
    println!("{}", paths.data.display());
    println!("{}", paths.metadata.display());
    println!("{}", paths.timing.display());
    if let experiments::ExperimentOutput::Table(t) = &output {
        let flagged = t.rows.iter().filter(|r| !r.flag.is_empty()).count();
        if flagged > 0 {
            eprintln!("warning: {flagged} rows flagged (see the flag column)");
        }
    }
    Ok(())
}

fn check() -> Result<(), Failure> {
    let results = checks::run_all();
    let mut failed = 0;
    for r in &results {
        let tag = if r.passed { "PASS" } else { "FAIL" };
        println!("{tag} {:<36} {:>7.3}s  {}", r.name, r.seconds, r.detail);
        failed += usize::from(!r.passed);
    }
    println!("{} of {} checks passed", results.len() - failed, results.len());
    if failed > 0 {
        Err(Failure::Run(format!("{failed} invariant checks failed")))
    } else {
        Ok(())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    parallel::init_from_env();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            experiment,
            seed,
            out,
            format,
        } => run(config, experiment, seed, out, format),
        Command::Check => check(),
        Command::Config { experiment } => experiment
            .parse::<ExperimentKind>()
            .map_err(Failure::from)
            .map(|k| {
                let cfg = ExperimentConfig::for_experiment(k);
                println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
            }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
