//! Expected steps to convergence on the Blind Cliffwalk, in closed form and
//! by Monte-Carlo simulation of the theorem protocol.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{run_experiment, ExperimentConfig, Strategy};
use crate::cliffwalk::CliffwalkSpec;
use crate::error::{invalid, Error, Result};

/// Largest `n` for which the PER formula is evaluated.
pub const MAX_FORMULA_STATES: u32 = 50;

/// Step budget per Monte-Carlo trial.
pub const MC_BUDGET: u64 = 1_000_000;

/// Which closed form bounds the sequence-replay expectation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundVariant {
    /// `n/(1-rho) - (rho - rho^(n+1))/(1-rho)^2`.
    MainText,
    /// Same shape in `2 rho`, with `n(n+1)/2` at `rho = 0.5`.
    Appendix,
}

impl fmt::Display for BoundVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundVariant::MainText => "main_text",
            BoundVariant::Appendix => "appendix",
        })
    }
}

impl FromStr for BoundVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "main_text" | "main" | "maintext" => Ok(BoundVariant::MainText),
            "appendix" => Ok(BoundVariant::Appendix),
            other => Err(invalid(format!("unknown bound variant `{other}`"))),
        }
    }
}

fn check_n(n: u32) -> Result<()> {
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    if n > MAX_FORMULA_STATES {
        return Err(Error::ResourceGuard(format!(
            "n = {n} exceeds the formula guard of {MAX_FORMULA_STATES}"
        )));
    }
    Ok(())
}

/// `1 + (2^(n+1) - 2)(1 - 1/2^(n-1))`.
pub fn expected_steps_per(n: u32) -> Result<f64> {
    check_n(n)?;
    let transitions = 2f64.powi(n as i32 + 1) - 2.0;
    Ok(1.0 + transitions * (1.0 - 1.0 / 2f64.powi(n as i32 - 1)))
}

/// Upper bound on the expected steps under sequence replay.
pub fn expected_steps_pser_bound(n: u32, rho: f64, variant: BoundVariant) -> Result<f64> {
    check_n(n)?;
    if !(rho > 0.0 && rho < 1.0) {
        return Err(invalid(format!("rho must lie in (0, 1), got {rho}")));
    }
    let nf = n as f64;
    let geometric = |r: f64| nf / (1.0 - r) - (r - r.powi(n as i32 + 1)) / (1.0 - r).powi(2);
    Ok(match variant {
        BoundVariant::MainText => geometric(rho),
        BoundVariant::Appendix if (rho - 0.5).abs() <= 1e-9 => nf * (nf + 1.0) / 2.0,
        BoundVariant::Appendix => geometric(2.0 * rho),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub mean: f64,
    /// 95% normal-approximation interval for the mean.
    pub ci95: (f64, f64),
    pub trials: u64,
}

impl MonteCarloSummary {
    pub fn half_width(&self) -> f64 {
        (self.ci95.1 - self.ci95.0) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremResult {
    pub n: u32,
    pub rho: f64,
    pub variant: BoundVariant,
    pub e_per: f64,
    pub e_pser_bound_main: f64,
    pub e_pser_bound_appendix: f64,
    pub mc_mean: Option<f64>,
    pub mc_ci95: Option<(f64, f64)>,
}

impl TheoremResult {
    pub fn closed_form(n: u32, rho: f64, variant: BoundVariant) -> Result<Self> {
        Ok(Self {
            n,
            rho,
            variant,
            e_per: expected_steps_per(n)?,
            e_pser_bound_main: expected_steps_pser_bound(n, rho, BoundVariant::MainText)?,
            e_pser_bound_appendix: expected_steps_pser_bound(n, rho, BoundVariant::Appendix)?,
            mc_mean: None,
            mc_ci95: None,
        })
    }

    /// The bound selected by `variant`.
    pub fn e_pser_bound(&self) -> f64 {
        match self.variant {
            BoundVariant::MainText => self.e_pser_bound_main,
            BoundVariant::Appendix => self.e_pser_bound_appendix,
        }
    }

    pub fn with_monte_carlo(mut self, mc: &MonteCarloSummary) -> Self {
        self.mc_mean = Some(mc.mean);
        self.mc_ci95 = Some(mc.ci95);
        self
    }
}

/// Seed of trial `i` under base seed `seed`.
pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(trial)
}

/// Theorem-protocol configuration for one trial.
pub fn theorem_config(strategy: Strategy, n: usize, rho: f64, seed: u64) -> Result<ExperimentConfig> {
    let spec = CliffwalkSpec::new(n, None, seed)?;
    let mut cfg = ExperimentConfig::theorem(spec, strategy, rho, seed)?;
    cfg.max_iterations = MC_BUDGET;
    cfg.mse_every = MC_BUDGET;
    Ok(cfg)
}

/// Mean steps to exact convergence over `trials` independent seeded runs of
/// the theorem protocol. Trials run in parallel; the result depends only on
/// the arguments.
pub fn monte_carlo_steps(
    strategy: Strategy,
    n: usize,
    rho: f64,
    trials: u64,
    seed: u64,
) -> Result<MonteCarloSummary> {
    if trials == 0 {
        return Err(invalid("at least one trial is required"));
    }
    let steps = (0..trials)
        .into_par_iter()
        .map(|i| {
            let cfg = theorem_config(strategy, n, rho, trial_seed(seed, i))?;
            let trace = run_experiment(&cfg)?;
            trace.converged_at.ok_or_else(|| {
                Error::Anomaly(format!(
                    "{strategy} trial {i} (n = {n}) did not converge within {MC_BUDGET} steps"
                ))
            })
        })
        .collect::<Result<Vec<u64>>>()?;

    let count = steps.len() as f64;
    let mean = steps.iter().map(|&s| s as f64).sum::<f64>() / count;
    let var = if steps.len() > 1 {
        steps.iter().map(|&s| (s as f64 - mean).powi(2)).sum::<f64>() / (count - 1.0)
    } else {
        0.0
    };
    let half = 1.96 * (var / count).sqrt();
    Ok(MonteCarloSummary {
        mean,
        ci95: (mean - half, mean + half),
        trials,
    })
}
