use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use seqtest::calibration::calibrate;
use seqtest::config::{parse_config, ConfigError, ExperimentConfig};
use seqtest::experiment::{run_experiment, sweep_delta, ExperimentError};

#[derive(Parser)]
#[command(name = "seqtest", version, about = "Sequential multi-sensor signal detection simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the thresholds A = |log beta| and B = Erlang(1, k) upper alpha quantile.
    Calibrate {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        k: u32,
    },
    /// Run the Monte Carlo study described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output CSV path; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeat `run` once per communication step, applied to every sensor.
    SweepDelta {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        deltas: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: &Path) -> Result<ExperimentConfig, ExperimentError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Syntax(format!("cannot read {}: {e}", path.display())))?;
    Ok(parse_config(&text)?)
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, ExperimentError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn execute(command: Command) -> Result<(), ExperimentError> {
    match command {
        Command::Calibrate { alpha, beta, k } => {
            let t = calibrate(alpha, beta, k).map_err(|e| ConfigError::Invalid {
                field: "calibrate".to_string(),
                reason: e.to_string(),
            })?;
            println!("A={:.9} B={:.9}", t.a, t.b);
        }
        Command::Run { config, out } => {
            let cfg = load_config(&config)?;
            let mut sink = open_out(out.as_deref())?;
            let summary = run_experiment(&cfg, &mut sink)?;
            sink.flush()?;
            if summary.censored_count() > 0 {
                eprintln!(
                    "warning: {} of {} trials reached the horizon ({})",
                    summary.censored_count(),
                    summary.total_trials(),
                    summary.horizon
                );
            }
        }
        Command::SweepDelta { config, deltas, out } => {
            let cfg = load_config(&config)?;
            let mut sink = open_out(out.as_deref())?;
            sweep_delta(&cfg, &deltas, &mut sink)?;
            sink.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
