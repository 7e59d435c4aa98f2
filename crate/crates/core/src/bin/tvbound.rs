use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tvbound::cli::{self, CliError, ExperimentConfig};
use tvbound::twostate::TwoStateSpec;

/// Worker threads for grid evaluation; defaults to all cores.
const WORKERS_ENV: &str = "TVBOUND_WORKERS";

#[derive(Parser)]
#[command(
    name = "tvbound",
    version,
    about = "Total-variation bounds for perturbed kernel sequences"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a parameter grid and write the CSV report.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate a grid, or recheck a written report, without producing output files.
    Verify(VerifyArgs),
    /// Closed-form analysis of the two-state example.
    Twostate {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        eps: f64,
        #[arg(long, allow_hyphen_values = true)]
        delta: f64,
        #[arg(long)]
        n: usize,
        /// Print a one-row CSV instead of a text summary.
        #[arg(long)]
        csv: bool,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct VerifyArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

fn configure_workers() -> Result<(), String> {
    let Ok(raw) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("{WORKERS_ENV} must be a positive integer, got `{raw}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let csv = cli::run(&cfg)?;
            if cfg.output.is_none() {
                print!("{csv}");
            }
        }
        Command::Verify(VerifyArgs {
            config: Some(config),
            ..
        }) => {
            let cfg = ExperimentConfig::load(&config)?;
            print!("{}", cli::verify(&cfg)?);
        }
        Command::Verify(VerifyArgs {
            report: Some(path), ..
        }) => {
            let text = std::fs::read_to_string(&path).map_err(|source| CliError::Io {
                path: path.display().to_string(),
                source,
            })?;
            let rows = cli::verify_report(&text)?;
            println!("PASS {rows} rows");
        }
        Command::Verify(_) => unreachable!("clap requires one of --config or --report"),
        Command::Twostate {
            p,
            eps,
            delta,
            n,
            csv,
        } => {
            let spec = TwoStateSpec::new(p, eps, delta, n)?;
            print!("{}", cli::twostate_report(&spec, csv));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Cli::parse();
    if let Err(e) = configure_workers() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let result = execute(args.command);
    let _ = std::io::stdout().flush();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
