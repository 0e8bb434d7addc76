//! Config-driven runner for the `ougap` experiments.
//!
//! A run parses and validates the config, computes every table in memory
//! and only then writes artifacts, so a failing run leaves no partial output.

// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod report;
pub mod run;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{ExperimentConfig, Kind};
pub use report::{Format, RunReport, Table};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Schema(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("{0} row(s) outside tolerance")]
    Tolerance(usize),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Schema(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Tolerance(_) => 4,
        }
    }
}

impl From<ougap::GapError> for CliError {
    fn from(e: ougap::GapError) -> Self {
        if e.is_input() {
            CliError::Schema(e.to_string())
        } else {
            CliError::Numeric(e.to_string())
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub kind: Kind,
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub strict: bool,
    pub format: Format,
}

/// Output directory: `--out`, then `[output] dir`, then `./out`.
pub fn output_dir(opts: &RunOptions, cfg: &ExperimentConfig) -> PathBuf {
    opts.out.clone().or_else(|| cfg.output.dir.clone()).unwrap_or_else(|| Path::new("out").to_path_buf())
}

/// Parse, validate, compute and export. Returns the report and the files written.
pub fn execute(opts: &RunOptions) -> Result<(RunReport, Vec<PathBuf>), CliError> {
    let mut cfg = ExperimentConfig::from_path(&opts.config)?;
    if cfg.kind != opts.kind {
        return Err(CliError::Schema(format!("config declares kind `{}` but `{}` was requested", cfg.kind, opts.kind)));
    }
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    let report = match opts.threads {
        Some(0) => return Err(CliError::Schema("--threads must be positive".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| CliError::Io(e.to_string()))?;
            pool.install(|| run::run(&cfg))?
        }
        None => run::run(&cfg)?,
    };
    let written = report.export(&output_dir(opts, &cfg), opts.format)?;
    Ok((report, written))
}
