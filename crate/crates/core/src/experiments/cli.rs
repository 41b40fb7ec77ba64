//! `mvgof` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or configuration error,
//! 3 numerical degeneracy (or a failed oracle check). Errors are reported as
//! one line on standard error: `mvgof: <Kind>: <message>`.
//!
//! The worker thread count can be pinned with `MVGOF_THREADS`; results do
//! not depend on it.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::gof::{run_test, TestMode};
use crate::io::{read_grid, write_grid};
use crate::models::parse_basis;
use crate::oracle::{run_check, CHECK_NAMES};
use crate::simulate::simulate_particles;

use super::{run_experiment, run_replications, replications_csv, write_experiment, ExperimentConfig, SimulateConfig};

pub const THREADS_ENV: &str = "MVGOF_THREADS";

#[derive(Debug, Parser)]
#[command(name = "mvgof", version, about = "Volatility goodness-of-fit tests for McKean-Vlasov particle systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Absolute,
    Relative,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a particle system and write PREFIX.csv and PREFIX.json.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the goodness-of-fit test on a saved grid.
    Test {
        /// Grid prefix as written by `simulate`.
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated basis atoms, e.g. `const,x2`.
        #[arg(long)]
        basis: String,
        #[arg(long)]
        alpha: f64,
        #[arg(long, value_enum, default_value = "absolute")]
        mode: ModeArg,
        /// Threshold for the relative mode.
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a Monte Carlo experiment; writes replications.csv and aggregate.json into DIR.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a named self-check (or `all`) and print JSON outcomes.
    #[command(hide = true)]
    Oracle {
        check: String,
        #[arg(long, default_value_t = 20240917)]
        seed: u64,
    },
}

enum Failure {
    Usage(String),
    Run(Error),
    /// Already reported on stdout.
    CheckFailed,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

/// Sizes the global rayon pool from `MVGOF_THREADS` when set.
pub fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got '{raw}'")))?;
    // A second call in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

pub fn cli_main<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match configure_threads().map_err(Failure::from).and_then(|()| dispatch(cli.command)) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("mvgof: usage: {msg}");
            1
        }
        Err(Failure::Run(e)) => {
            eprintln!("mvgof: {}: {}", e.kind(), single_line(&e.to_string()));
            e.exit_code()
        }
        Err(Failure::CheckFailed) => 3,
    }
}

fn single_line(msg: &str) -> String {
    msg.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn dispatch(command: Command) -> std::result::Result<(), Failure> {
    match command {
        Command::Simulate { config, out } => {
            let c = SimulateConfig::load(&config)?;
            let model = c.model.build()?;
            let grid = simulate_particles(&model, c.particles, c.steps, c.horizon, c.seed)?;
            write_grid(&grid, &out)?;
        }
        Command::Test {
            data,
            basis,
            alpha,
            mode,
            delta,
            out,
        } => {
            let mode = match (mode, delta) {
                (ModeArg::Absolute, None) => TestMode::Absolute,
                (ModeArg::Relative, Some(delta)) => TestMode::Relative { delta },
                (ModeArg::Absolute, Some(_)) => {
                    return Err(Failure::Usage("--delta requires --mode relative".into()))
                }
                (ModeArg::Relative, None) => {
                    return Err(Failure::Usage("--mode relative requires --delta".into()))
                }
            };
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Failure::Usage(format!("--alpha must lie in (0, 1), got {alpha}")));
            }
            let basis = parse_basis(&basis)?;
            let grid = read_grid(&data)?;
            let report = run_test(&grid, &basis, alpha, mode)?;
            let mut text = serde_json::to_string_pretty(&report).map_err(Error::from)?;
            text.push('\n');
            fs::write(&out, text).map_err(Error::from)?;
            println!(
                "statistic = {:.6}, p = {:.6}, {}",
                report.statistic,
                report.p_value,
                if report.reject { "reject" } else { "do not reject" }
            );
        }
        Command::Experiment { config, out } => {
            let c = ExperimentConfig::load(&config)?;
            match run_experiment(&c) {
                Ok(result) => {
                    write_experiment(&result, &out)?;
                    let a = &result.aggregates;
                    println!(
                        "rejection rate = {:.4} ({} of {}), failures = {}",
                        a.rejection_rate, a.rejections, a.successes, a.failures
                    );
                }
                Err(e @ Error::ExperimentDegenerate { .. }) => {
                    // Keep the per-replication rows for inspection.
                    let records = run_replications(&c)?;
                    fs::create_dir_all(&out).map_err(Error::from)?;
                    fs::write(out.join("replications.csv"), replications_csv(&records)).map_err(Error::from)?;
                    return Err(e.into());
                }
                Err(e) => return Err(e.into()),
            }
        }
        Command::Oracle { check, seed } => {
            let names: Vec<&str> = if check == "all" {
                CHECK_NAMES.to_vec()
            } else if CHECK_NAMES.contains(&check.as_str()) {
                vec![check.as_str()]
            } else {
                return Err(Failure::Usage(format!(
                    "unknown check '{check}' (expected all, {})",
                    CHECK_NAMES.join(", ")
                )));
            };
            let mut all_passed = true;
            for name in names {
                let outcome = run_check(name, seed)?;
                all_passed &= outcome.passed;
                println!("{}", serde_json::to_string(&outcome).map_err(Error::from)?);
            }
            if !all_passed {
                return Err(Failure::CheckFailed);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(cli_main(["mvgof"]), 1);
        assert_eq!(cli_main(["mvgof", "frobnicate"]), 1);
        assert_eq!(cli_main(["mvgof", "simulate", "--config", "x.json"]), 1);
        assert_eq!(cli_main(["mvgof", "--help"]), 0);
        assert_eq!(cli_main(["mvgof", "oracle", "nope"]), 1);
    }

    #[test]
    fn missing_files_exit_two() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("missing.json");
        let out = dir.path().join("g");
        let code = cli_main([
            "mvgof".into(),
            "simulate".into(),
            "--config".into(),
            missing.into_os_string(),
            "--out".into(),
            out.into_os_string(),
        ]);
        assert_eq!(code, 2);
    }

    #[test]
    fn single_line_flattens() {
        assert_eq!(single_line("a\n  b\tc"), "a b c");
    }
}
