//! Cliffwalk sweeps: one run per (strategy, seed), per-seed traces, a
//! cross-seed aggregate, a summary table and a manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use pser::{run_experiment, ExperimentTrace, Strategy, TraceRow};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::SweepConfig;
use crate::error::{HarnessError, HarnessResult};

#[derive(Debug, Clone)]
pub struct RunResult {
    pub strategy: Strategy,
    pub seed: u64,
    pub trace: ExperimentTrace,
}

/// One row of `aggregate.csv`: mean and +-1 sample standard deviation band
/// across seeds at a given iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub iteration: u64,
    pub strategy: Strategy,
    pub mean_mse: f64,
    pub ci68_lo: f64,
    pub ci68_hi: f64,
    pub n_seeds: usize,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config_hash: String,
    pub config: SweepConfig,
    pub outputs: Vec<String>,
    pub converged: bool,
    /// Excluded from reproducibility comparisons.
    pub wall_time_secs: f64,
}

/// Runs every (strategy, seed) cell, in parallel, in config order.
pub fn run_sweep(cfg: &SweepConfig) -> HarnessResult<Vec<RunResult>> {
    let cells: Vec<(Strategy, u64)> = cfg
        .strategies
        .iter()
        .flat_map(|&s| cfg.seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    cells
        .into_par_iter()
        .map(|(strategy, seed)| {
            let exp = cfg.experiment(strategy, seed)?;
            let started = Instant::now();
            let trace = run_experiment(&exp)?;
            log::info!(
                "{strategy} seed {seed}: {} iterations, converged_at {:?} ({:.2?})",
                trace.iterations,
                trace.converged_at,
                started.elapsed()
            );
            Ok(RunResult { strategy, seed, trace })
        })
        .collect()
}

/// Mean and sample standard deviation; the deviation is 0 for one value.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// Aligns traces on the union of their iteration grids, carrying each
/// seed's most recent value forward (a converged run keeps its final MSE).
pub fn aggregate(strategy: Strategy, traces: &[&[TraceRow]]) -> Vec<AggregateRow> {
    let mut grid: Vec<u64> = traces.iter().flat_map(|t| t.iter().map(|r| r.iteration)).collect();
    grid.sort_unstable();
    grid.dedup();
    let mut cursors = vec![0usize; traces.len()];
    grid.into_iter()
        .map(|it| {
            let values: Vec<f64> = traces
                .iter()
                .zip(cursors.iter_mut())
                .map(|(rows, c)| {
                    while *c + 1 < rows.len() && rows[*c + 1].iteration <= it {
                        *c += 1;
                    }
                    rows[*c].mse
                })
                .collect();
            let (mean, sd) = mean_sd(&values);
            AggregateRow {
                iteration: it,
                strategy,
                mean_mse: mean,
                ci68_lo: mean - sd,
                ci68_hi: mean + sd,
                n_seeds: values.len(),
            }
        })
        .collect()
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn trace_file_name(strategy: Strategy, seed: u64) -> String {
    format!("trace_{strategy}_seed{seed}.csv")
}

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("iteration,mse\n");
    for r in rows {
        let _ = writeln!(out, "{},{}", r.iteration, num(r.mse));
    }
    out
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::from("iteration,strategy,mean_mse,ci68_lo,ci68_hi,n_seeds\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.iteration,
            r.strategy,
            num(r.mean_mse),
            num(r.ci68_lo),
            num(r.ci68_hi),
            r.n_seeds
        );
    }
    out
}

pub fn summary_csv(results: &[RunResult]) -> String {
    let mut out = String::from("strategy,seed,converged_at,iterations,final_mse\n");
    for r in results {
        let last = r.trace.rows.last().map_or(f64::NAN, |row| row.mse);
        let conv = r.trace.converged_at.map_or_else(String::new, |c| c.to_string());
        let _ = writeln!(out, "{},{},{},{},{}", r.strategy, r.seed, conv, r.trace.iterations, num(last));
    }
    out
}

/// Writes all sweep outputs; returns the file names, manifest last.
pub fn write_outputs(
    cfg: &SweepConfig,
    results: &[RunResult],
    wall_time_secs: f64,
) -> HarnessResult<Vec<PathBuf>> {
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    let mut names = Vec::new();
    let write = |names: &mut Vec<String>, name: String, body: String| -> HarnessResult<()> {
        fs::write(dir.join(&name), body)?;
        names.push(name);
        Ok(())
    };

    for r in results {
        write(&mut names, trace_file_name(r.strategy, r.seed), trace_csv(&r.trace.rows))?;
    }
    let mut agg = Vec::new();
    for &s in &cfg.strategies {
        let traces: Vec<&[TraceRow]> = results
            .iter()
            .filter(|r| r.strategy == s)
            .map(|r| r.trace.rows.as_slice())
            .collect();
        agg.extend(aggregate(s, &traces));
    }
    write(&mut names, "aggregate.csv".into(), aggregate_csv(&agg))?;
    write(&mut names, "summary.csv".into(), summary_csv(results))?;

    let manifest = Manifest {
        tool: "pser",
        version: env!("CARGO_PKG_VERSION"),
        command: "cliffwalk",
        config_hash: cfg.hash()?,
        config: cfg.clone(),
        outputs: names.clone(),
        converged: results.iter().all(|r| r.trace.converged_at.is_some()),
        wall_time_secs,
    };
    let mut body = serde_json::to_string_pretty(&manifest)?;
    body.push('\n');
    write(&mut names, "manifest.json".into(), body)?;
    Ok(names.into_iter().map(|n| dir.join(n)).collect())
}

/// Full `cliffwalk` command. Outputs are written even when some run fails to
/// converge; that case is then reported as an anomaly.
pub fn cliffwalk(cfg: &SweepConfig) -> HarnessResult<Vec<RunResult>> {
    let started = Instant::now();
    let results = run_sweep(cfg)?;
    write_outputs(cfg, &results, started.elapsed().as_secs_f64())?;
    let stuck: Vec<String> = results
        .iter()
        .filter(|r| r.trace.converged_at.is_none())
        .map(|r| format!("{}/seed{}", r.strategy, r.seed))
        .collect();
    if !stuck.is_empty() {
        return Err(HarnessError::Anomaly(format!(
            "no convergence within {} iterations: {}",
            cfg.max_iterations,
            stuck.join(", ")
        )));
    }
    Ok(results)
}

/// Reads an `iteration,mse` trace back from disk.
pub fn read_trace(path: &Path) -> HarnessResult<Vec<TraceRow>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let (it, mse) = l
                .split_once(',')
                .ok_or_else(|| HarnessError::Config(format!("malformed trace line `{l}`")))?;
            Ok(TraceRow {
                iteration: it.parse().map_err(|e| HarnessError::Config(format!("{e}")))?,
                mse: mse.parse().map_err(|e| HarnessError::Config(format!("{e}")))?,
            })
        })
        .collect()
}
