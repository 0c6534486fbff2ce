//! Experiment runner behind the `wasserstat` binary.
//!
//! Every subcommand writes one result file (CSV or JSON) and a manifest
//! `<out>.manifest.json` next to it. Exit status: 0 on success, 1 for an
//! invalid configuration or input, 2 for a numerical failure.
//!
//! Per-replication seeds are derived from the master seed as
//! `splitmix64(seed ^ splitmix64(stream))`.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand as ClapSubcommand};
use serde::Serialize;

use crate::commands::Artifact;
use crate::config::{ExperimentConfig, Format, Subcommand};
use crate::error::{config, CliError};

pub const THREADS_VAR: &str = "WASSERSTAT_THREADS";

#[derive(Parser)]
#[command(
    name = "wasserstat",
    version,
    about = "Wasserstein statistics experiments on elliptical models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(ClapSubcommand)]
enum Command {
    /// Poisson-equation residuals of every W-score at sampled points.
    ///
    /// CSV columns: param, points, max_abs_residual, passed.
    VerifyScore(ExperimentConfig),
    /// Fit θ to a headerless data CSV (JSON report).
    Estimate(ExperimentConfig),
    /// Sampling covariance of the estimators across replicated data sets.
    ///
    /// CSV columns: method, row, col, param_row, param_col, covariance,
    /// fisher_bound, replications_used, failures.
    CompareEstimators(ExperimentConfig),
    /// Variance growth under additive noise against the Wasserstein covariance.
    ///
    /// CSV columns: quantity, sigma2, row, col, value, std_error.
    Robustness(ExperimentConfig),
    /// Wasserstein-Cramér-Rao comparison for a statistic.
    ///
    /// CSV columns: quantity, row, col, value, std_error.
    Bounds(ExperimentConfig),
    /// Closed-form squared W2 distance between two parameter values (JSON report).
    Distance(ExperimentConfig),
    /// Monte Carlo check that the shapes have zero mean and identity covariance.
    ///
    /// CSV columns: shape, dim, n, max_mean_deviation, max_cov_deviation,
    /// max_z_score, passed.
    VerifyShapes(ExperimentConfig),
    /// Run an experiment described by a TOML file; flags override its fields.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: ExperimentConfig,
    },
}

impl Command {
    fn into_config(self) -> Result<ExperimentConfig, CliError> {
        let (cmd, cfg) = match self {
            Command::VerifyScore(c) => (Subcommand::VerifyScore, c),
            Command::Estimate(c) => (Subcommand::Estimate, c),
            Command::CompareEstimators(c) => (Subcommand::CompareEstimators, c),
            Command::Robustness(c) => (Subcommand::Robustness, c),
            Command::Bounds(c) => (Subcommand::Bounds, c),
            Command::Distance(c) => (Subcommand::Distance, c),
            Command::VerifyShapes(c) => (Subcommand::VerifyShapes, c),
            Command::Run { config, overrides } => {
                return Ok(ExperimentConfig::from_toml_file(&config)?.merge(overrides))
            }
        };
        Ok(ExperimentConfig {
            subcommand: Some(cmd),
            ..cfg
        })
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    cli_version: &'static str,
    library_version: &'static str,
    subcommand: Subcommand,
    config: &'a ExperimentConfig,
    seed: u64,
    seed_derivation: &'static str,
    threads: usize,
    output: String,
    format: Format,
    wall_time_seconds: f64,
}

fn configure_threads() -> Result<usize, CliError> {
    if let Ok(v) = std::env::var(THREADS_VAR) {
        let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            config(format!(
                "{THREADS_VAR} must be a positive integer, got {v:?}"
            ))
        })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| config(format!("{THREADS_VAR}: {e}")))?;
    }
    Ok(rayon::current_num_threads())
}

/// Runs one experiment, writing the result file and its manifest. Returns
/// the result path.
pub fn execute(cfg: ExperimentConfig) -> Result<PathBuf, CliError> {
    let start = Instant::now();
    let threads = configure_threads()?;
    cfg.validate()?;
    let cmd = cfg.command()?;
    let format = cfg.format()?;
    let out = cfg.output_path()?;
    let artifact = commands::run(&cfg)?;
    let bytes = match (artifact, format) {
        (Artifact::Table(t), Format::Csv) => t.to_csv()?,
        (Artifact::Table(t), Format::Json) => io::to_json_bytes(&t.to_json())?,
        (Artifact::Report(v), Format::Json) => io::to_json_bytes(&v)?,
        (Artifact::Report(v), Format::Csv) => io::flatten_json(&v).to_csv()?,
    };
    io::write_atomic(&out, &bytes)?;
    let manifest = Manifest {
        tool: "wasserstat",
        cli_version: env!("CARGO_PKG_VERSION"),
        library_version: wasserstat::VERSION,
        subcommand: cmd,
        config: &cfg,
        seed: cfg.seed(),
        seed_derivation: "splitmix64(seed ^ splitmix64(stream))",
        threads,
        output: out.display().to_string(),
        format,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };
    let mut manifest_path = out.clone().into_os_string();
    manifest_path.push(".manifest.json");
    io::write_atomic(
        &PathBuf::from(manifest_path),
        &io::to_json_bytes(&manifest)?,
    )?;
    Ok(out)
}

/// Parses `args` (program name first), runs the experiment and reports
/// errors on stderr.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = cli.command.into_config().and_then(execute);
    match result {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {e}", e.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
