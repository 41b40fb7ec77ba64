//! Monte Carlo harness: replicated simulate-and-test runs and their
//! aggregates, plus the command-line front end.

pub mod cli;
pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gof::{compute_summary, decide};
use crate::json::{fmt17, num17, opt_num17};
use crate::normal::normal_cdf;
use crate::oracle::{reference_distance, ReferenceDistance};
use crate::simulate::simulate_particles;

pub use config::{ExperimentConfig, ModeName, ReferenceSpec, SimulateConfig};

/// Share of failed replications above which an experiment is rejected.
pub const MAX_FAILURE_SHARE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicationStats {
    pub s_hat: f64,
    pub g_hat: f64,
    pub tau2_hat: f64,
    pub statistic: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRecord {
    pub rep: usize,
    pub seed: u64,
    /// Error kind on failure.
    pub outcome: std::result::Result<ReplicationStats, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregates {
    pub successes: usize,
    pub failures: usize,
    pub rejections: usize,
    /// `rejections / successes`.
    #[serde(serialize_with = "num17")]
    pub rejection_rate: f64,
    #[serde(serialize_with = "num17")]
    pub statistic_mean: f64,
    /// Sample standard deviation (divisor `successes − 1`).
    #[serde(serialize_with = "num17")]
    pub statistic_sd: f64,
    /// Kolmogorov–Smirnov distance of the statistics to `N(0, 1)`; absent
    /// with fewer than 10 successes.
    #[serde(serialize_with = "opt_num17")]
    pub ks_distance: Option<f64>,
    #[serde(serialize_with = "num17")]
    pub s_hat_mean: f64,
    /// Median of `|Ŝ − L_ref|` when a reference is attached.
    #[serde(serialize_with = "opt_num17")]
    pub median_abs_error: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub records: Vec<ReplicationRecord>,
    pub aggregates: Aggregates,
    pub reference: Option<ReferenceDistance>,
}

/// `sup_x |F_m(x) − Φ(x)|` for the empirical CDF `F_m` of `values`.
pub fn ks_normal(values: &[f64]) -> Result<f64> {
    if values.len() < 10 {
        return Err(Error::TooFewSamples(values.len()));
    }
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput { index });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    let mut worst = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = normal_cdf(x);
        worst = worst.max((i + 1) as f64 / m - f).max(f - i as f64 / m);
    }
    Ok(worst.clamp(0.0, 1.0))
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Aggregates over the successful replications, in record order.
pub fn aggregate(records: &[ReplicationRecord], l_ref: Option<f64>) -> Aggregates {
    let ok: Vec<&ReplicationStats> = records.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
    let successes = ok.len();
    let rejections = ok.iter().filter(|s| s.reject).count();
    let count = successes as f64;
    let stats: Vec<f64> = ok.iter().map(|s| s.statistic).collect();
    let mean = stats.iter().sum::<f64>() / count;
    let sd = if successes > 1 {
        (stats.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (count - 1.0)).sqrt()
    } else {
        f64::NAN
    };
    let median_abs_error = l_ref.and_then(|l| {
        let mut errs: Vec<f64> = ok.iter().map(|s| (s.s_hat - l).abs()).collect();
        median(&mut errs)
    });
    Aggregates {
        successes,
        failures: records.len() - successes,
        rejections,
        rejection_rate: rejections as f64 / count,
        statistic_mean: mean,
        statistic_sd: sd,
        ks_distance: ks_normal(&stats).ok(),
        s_hat_mean: ok.iter().map(|s| s.s_hat).sum::<f64>() / count,
        median_abs_error,
    }
}

/// Runs every replication; never fails on per-replication numerical errors.
pub fn run_replications(config: &ExperimentConfig) -> Result<Vec<ReplicationRecord>> {
    config.validate()?;
    let model = config.build_model()?;
    let basis = config.build_basis()?;
    let mode = config.test_mode()?;
    (0..config.replications)
        .into_par_iter()
        .map(|rep| {
            let seed = config.seed_for(rep);
            let run = simulate_particles(&model, config.particles, config.steps, config.horizon, seed)
                .and_then(|grid| compute_summary(&grid, &basis))
                .and_then(|summary| {
                    let report = decide(&summary, config.alpha, mode)?;
                    Ok(ReplicationStats {
                        s_hat: summary.s_hat,
                        g_hat: summary.g_hat,
                        tau2_hat: report.tau2_hat,
                        statistic: report.statistic,
                        reject: report.reject,
                    })
                });
            match run {
                Ok(stats) => Ok(ReplicationRecord {
                    rep,
                    seed,
                    outcome: Ok(stats),
                }),
                Err(e) if e.is_numerical() => Ok(ReplicationRecord {
                    rep,
                    seed,
                    outcome: Err(e.kind().to_string()),
                }),
                Err(e) => Err(e),
            }
        })
        .collect::<Vec<Result<_>>>()
        .into_iter()
        .collect()
}

fn check_failures(records: &[ReplicationRecord]) -> Result<()> {
    let failed = records.iter().filter(|r| r.outcome.is_err()).count();
    if failed as f64 > MAX_FAILURE_SHARE * records.len() as f64 {
        return Err(Error::ExperimentDegenerate {
            failed,
            total: records.len(),
        });
    }
    Ok(())
}

/// Runs the experiment, computing the fine-grid reference first when the
/// config asks for one.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let reference = match &config.reference {
        Some(r) => Some(reference_distance(
            &config.build_model()?,
            &config.build_basis()?,
            r.particles,
            r.steps,
            config.horizon,
            r.seed,
        )?),
        None => None,
    };
    run_experiment_with_reference(config, reference)
}

/// Like [`run_experiment`] with an already computed reference (which takes
/// precedence over `config.reference`).
pub fn run_experiment_with_reference(
    config: &ExperimentConfig,
    reference: Option<ReferenceDistance>,
) -> Result<ExperimentResult> {
    let records = run_replications(config)?;
    check_failures(&records)?;
    let aggregates = aggregate(&records, reference.as_ref().map(|r| r.l_ref));
    Ok(ExperimentResult {
        config: config.clone(),
        records,
        aggregates,
        reference,
    })
}

pub const REPLICATION_HEADER: &str = "rep,seed,S_hat,G_hat,tau2_hat,statistic,reject,failure";

/// Per-replication CSV; failed rows leave the numeric fields empty.
pub fn replications_csv(records: &[ReplicationRecord]) -> String {
    let mut out = String::new();
    out.push_str(REPLICATION_HEADER);
    out.push('\n');
    for r in records {
        match &r.outcome {
            Ok(s) => writeln!(
                out,
                "{},{},{},{},{},{},{},",
                r.rep,
                r.seed,
                fmt17(s.s_hat),
                fmt17(s.g_hat),
                fmt17(s.tau2_hat),
                fmt17(s.statistic),
                u8::from(s.reject)
            ),
            Err(kind) => writeln!(out, "{},{},,,,,,{}", r.rep, r.seed, kind),
        }
        .expect("writing to a String cannot fail");
    }
    out
}

/// Inverse of [`replications_csv`].
pub fn parse_replications_csv(text: &str) -> Result<Vec<ReplicationRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(REPLICATION_HEADER) {
        return Err(Error::Data("unexpected replication CSV header".into()));
    }
    let bad = |line: &str| Error::Data(format!("malformed replication row '{line}'"));
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(bad(line));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(line));
            let rep = f[0].parse().map_err(|_| bad(line))?;
            let seed = f[1].parse().map_err(|_| bad(line))?;
            let outcome = if f[7].is_empty() {
                Ok(ReplicationStats {
                    s_hat: num(f[2])?,
                    g_hat: num(f[3])?,
                    tau2_hat: num(f[4])?,
                    statistic: num(f[5])?,
                    reject: match f[6] {
                        "1" => true,
                        "0" => false,
                        _ => return Err(bad(line)),
                    },
                })
            } else {
                Err(f[7].to_string())
            };
            Ok(ReplicationRecord { rep, seed, outcome })
        })
        .collect()
}

#[derive(Serialize)]
struct AggregateFile<'a> {
    schema_version: u32,
    model: &'a crate::models::ModelSpec,
    basis: &'a [String],
    #[serde(rename = "N")]
    particles: usize,
    #[serde(rename = "n")]
    steps: usize,
    #[serde(rename = "T", serialize_with = "num17")]
    horizon: f64,
    #[serde(serialize_with = "num17")]
    alpha: f64,
    mode: ModeName,
    #[serde(serialize_with = "opt_num17")]
    delta: Option<f64>,
    replications: usize,
    base_seed: u64,
    #[serde(flatten)]
    aggregates: &'a Aggregates,
    reference: Option<&'a ReferenceDistance>,
}

/// Aggregate report as pretty JSON.
pub fn aggregate_json(result: &ExperimentResult) -> Result<String> {
    let c = &result.config;
    let file = AggregateFile {
        schema_version: config::SCHEMA_VERSION,
        model: &c.model,
        basis: &c.basis,
        particles: c.particles,
        steps: c.steps,
        horizon: c.horizon,
        alpha: c.alpha,
        mode: c.mode,
        delta: c.delta,
        replications: c.replications,
        base_seed: c.base_seed,
        aggregates: &result.aggregates,
        reference: result.reference.as_ref(),
    };
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    Ok(text)
}

/// Writes `replications.csv` and `aggregate.json` into `dir`.
pub fn write_experiment(result: &ExperimentResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("replications.csv"), replications_csv(&result.records))?;
    fs::write(dir.join("aggregate.json"), aggregate_json(result)?)?;
    Ok(())
}
