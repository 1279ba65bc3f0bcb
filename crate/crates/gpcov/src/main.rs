use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use gpcov::config::{Overrides, RunConfig};
use gpcov::{cli, GpError};
use std::path::PathBuf;
use std::process::ExitCode;

/// Covariance-parameter estimation lab for Gaussian processes: simulate
/// datasets, fit ML/CV estimates, and run the replication study comparing
/// the two under nugget misspecification.
#[derive(Parser, Debug)]
#[command(name = "gpcov", version, about)]
struct Cli {
    /// JSON config file; flags override file values, file values override defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed of the run.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for the replication loop (default: available cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Observation count n.
    #[arg(long, global = true)]
    n: Option<usize>,

    /// Replication count.
    #[arg(long, global = true)]
    reps: Option<u64>,

    /// Model nugget variance (e.g. 0.0625 for the well-specified case).
    #[arg(long, global = true)]
    model_delta: Option<f64>,

    /// Quadrature node count for the prediction-error integral.
    #[arg(long, global = true)]
    quad_m: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a design and observations from the configured truth, write CSV.
    Simulate {
        /// Output file (default: <out>/dataset.csv).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Estimate (sigma2, ell) on a dataset file; prints a JSON report.
    Fit {
        /// Dataset CSV as written by `simulate`.
        #[arg(long)]
        data: PathBuf,
        /// Estimation criterion: ml or cv.
        #[arg(long)]
        method: String,
    },
    /// Run the full replication study and write report CSVs.
    Experiment,
    /// Re-aggregate an existing replications.csv in a report directory.
    Report {
        /// Directory holding config.json and replications.csv (default: <out>).
        #[arg(long)]
        dir: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig, GpError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
        workers: cli.workers,
        n: cli.n,
        n_reps: cli.reps,
        model_delta: cli.model_delta,
        quad_m: cli.quad_m,
    });
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), GpError> {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Simulate { output } => {
            let path = cli::cmd_simulate(&cfg, output.as_deref())?;
            eprintln!("wrote {}", path.display());
        }
        Command::Fit { data, method } => {
            let method = method.parse()?;
            let report = cli::cmd_fit(&cfg, &data, method)?;
            println!("{}", report.to_json());
        }
        Command::Experiment => {
            let (report, written) = cli::cmd_experiment(&cfg)?;
            eprintln!(
                "{} replications ({} failed), wrote {} files to {}",
                report.records.len(),
                report.failures.len(),
                written.len(),
                cfg.out_dir.display()
            );
            for (rep, err) in &report.failures {
                eprintln!("  replication {rep} failed: {err}");
            }
        }
        Command::Report { dir } => {
            let dir = dir.unwrap_or_else(|| cfg.out_dir.clone());
            let written = cli::cmd_report(&dir)?;
            eprintln!("rewrote {} files in {}", written.len(), dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(1);
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
