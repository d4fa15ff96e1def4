//! Experiment orchestration and CSV output.

use std::io::Write;

use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig};
use crate::montecarlo::{CellSummary, ExperimentSummary, SimError, Simulator};

/// Column order of the results file.
pub const CSV_COLUMNS: [&str; 13] = [
    "hypothesis",
    "subset",
    "strategy",
    "n_trials",
    "error_rate",
    "ci_low",
    "ci_high",
    "mean_stop",
    "mean_stop_ci_low",
    "mean_stop_ci_high",
    "theoretical_bound",
    "mean_messages_per_trial",
    "censored",
];

const SIGNIFICANT_DIGITS: usize = 9;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error("failed to write results: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to write results: {0}")]
    Csv(#[from] csv::Error),
}

impl ExperimentError {
    /// Process exit status for this error: 2 for configuration problems,
    /// 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 2,
            _ => 1,
        }
    }
}

/// Formats a real with [`SIGNIFICANT_DIGITS`] significant digits in
/// positional notation.
pub fn format_real(x: f64) -> String {
    if x.is_nan() {
        return "NaN".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    if x == 0.0 {
        return "0".to_string();
    }
    // Let the scientific formatter do the rounding, then read off the
    // post-rounding exponent.
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let exp: i64 = sci
        .rsplit('e')
        .next()
        .and_then(|e| e.parse().ok())
        .expect("scientific notation has an exponent");
    let decimals = (SIGNIFICANT_DIGITS as i64 - 1 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}

fn cell_row(summary: &ExperimentSummary, cell: &CellSummary) -> Vec<String> {
    vec![
        cell.truth.hypothesis_label().to_string(),
        cell.truth.subset_label(),
        summary.strategy.clone(),
        cell.n_trials.to_string(),
        format_real(cell.error.rate),
        format_real(cell.error.ci_low),
        format_real(cell.error.ci_high),
        format_real(cell.mean_stop.mean),
        format_real(cell.mean_stop.ci_low),
        format_real(cell.mean_stop.ci_high),
        format_real(cell.theoretical_bound),
        format_real(cell.mean_messages_per_trial),
        cell.censored.to_string(),
    ]
}

/// Writes one header row plus one row per cell.
pub fn write_summary_csv<W: Write>(summary: &ExperimentSummary, out: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for cell in &summary.cells {
        w.write_record(cell_row(summary, cell))?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the configured Monte Carlo study.
pub fn summarize(config: &ExperimentConfig) -> Result<ExperimentSummary, ExperimentError> {
    config.validate()?;
    let sim = Simulator::new(config)?;
    Ok(sim.estimate(&config.subsets_to_test, config.n_trials, config.base_seed)?)
}

/// Runs the study and writes its CSV to `out`.
pub fn run_experiment<W: Write>(config: &ExperimentConfig, out: W) -> Result<ExperimentSummary, ExperimentError> {
    let summary = summarize(config)?;
    write_summary_csv(&summary, out)?;
    Ok(summary)
}

/// Repeats the study once per delta (applied to every sensor) and writes a
/// single CSV whose first column is the delta.
pub fn sweep_delta<W: Write>(
    config: &ExperimentConfig,
    deltas: &[f64],
    out: W,
) -> Result<Vec<(f64, ExperimentSummary)>, ExperimentError> {
    if deltas.is_empty() {
        return Err(ConfigError::Invalid {
            field: "deltas".to_string(),
            reason: "sweep needs at least one value".to_string(),
        }
        .into());
    }
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<&str> = std::iter::once("delta").chain(CSV_COLUMNS).collect();
    w.write_record(&header)?;
    let mut results = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let cfg = config.clone().with_deltas(delta)?;
        let summary = summarize(&cfg)?;
        for cell in &summary.cells {
            let mut row = vec![format_real(delta)];
            row.extend(cell_row(&summary, cell));
            w.write_record(&row)?;
        }
        results.push((delta, summary));
    }
    w.flush()?;
    Ok(results)
}
