use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ougap_cli::{execute, CliError, Format, Kind, RunOptions};

/// Spectral-gap experiments driven by TOML configs.
#[derive(Parser)]
#[command(name = "ougap", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
#[command(rename_all = "snake_case")]
enum Cmd {
    /// σ₁ of the discretized second variation, with closed forms for constant curvature
    Sigma1(Common),
    /// residuals of the operator identities, Lipschitz perturbation and Hardy checks
    Identities(Common),
    /// finite-difference spectral gaps of weighted Dirichlet forms
    Semiclassical(Common),
    /// radial SDE comparison or pinned-path trial quotients
    Simulate(Common),
    /// explicit spectral-gap lower bound
    Bounds(Common),
    /// H³ heat-kernel normalization and small-time residuals
    KernelAsymptotics(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// output directory (overrides [output] dir)
    #[arg(long)]
    out: Option<PathBuf>,
    /// overrides the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// worker threads for this run
    #[arg(long)]
    threads: Option<usize>,
    /// exit with status 4 when any row is outside tolerance
    #[arg(long)]
    strict: bool,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, c) = match cli.cmd {
        Cmd::Sigma1(c) => (Kind::Sigma1, c),
        Cmd::Identities(c) => (Kind::Identities, c),
        Cmd::Semiclassical(c) => (Kind::Semiclassical, c),
        Cmd::Simulate(c) => (Kind::Simulate, c),
        Cmd::Bounds(c) => (Kind::Bounds, c),
        Cmd::KernelAsymptotics(c) => (Kind::KernelAsymptotics, c),
    };
    let opts = RunOptions {
        kind,
        config: c.config,
        out: c.out,
        seed: c.seed,
        threads: c.threads,
        strict: c.strict,
        format: c.format,
    };
    match execute(&opts) {
        Ok((report, written)) => {
            for p in &written {
                eprintln!("wrote {}", p.display());
            }
            let failures = report.failures();
            if failures > 0 {
                let err = CliError::Tolerance(failures);
                eprintln!("{err}");
                if opts.strict {
                    return ExitCode::from(err.exit_code());
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
