//! Sweep configuration: JSON file values, overridden by flags, resolved
//! against mode-dependent defaults.

use std::path::{Path, PathBuf};

use pser::agent::{EXACT_TOLERANCE, THEOREM_EPSILON};
use pser::cliffwalk::{default_gamma, MAX_PREFILL_STATES};
use pser::decay::{compute_window, DEFAULT_CUTOFF};
use pser::{CliffwalkSpec, DecayConfig, DecayScheme, ExperimentConfig, InitialPriority, Mode, Strategy};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, HarnessResult};

/// Every field is optional; unset fields fall back to flags, then defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepOverrides {
    pub n: Option<usize>,
    pub gamma: Option<f64>,
    pub mode: Option<Mode>,
    pub strategies: Option<Vec<Strategy>>,
    pub seeds: Option<Vec<u64>>,
    pub init_priority: Option<InitialPriority>,
    pub rho: Option<f64>,
    pub window: Option<usize>,
    pub eta: Option<f64>,
    pub epsilon: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub scheme: Option<DecayScheme>,
    pub step_size: Option<f64>,
    pub max_iterations: Option<u64>,
    pub mse_every: Option<u64>,
    pub convergence_tol: Option<f64>,
    pub output_dir: Option<PathBuf>,
}

impl SweepOverrides {
    pub fn from_file(path: &Path) -> HarnessResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }

    /// Fields set in `over` replace those in `self`.
    pub fn merge(self, over: SweepOverrides) -> Self {
        macro_rules! pick {
            ($($f:ident),*) => { Self { $($f: over.$f.or(self.$f)),* } };
        }
        pick!(
            n, gamma, mode, strategies, seeds, init_priority, rho, window, eta, epsilon, alpha,
            beta, scheme, step_size, max_iterations, mse_every, convergence_tol, output_dir
        )
    }
}

/// Fully resolved sweep; this is what the manifest records and hashes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub n: usize,
    pub gamma: f64,
    pub mode: Mode,
    pub strategies: Vec<Strategy>,
    pub seeds: Vec<u64>,
    pub init_priority: InitialPriority,
    pub rho: f64,
    pub window: usize,
    pub eta: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub beta: f64,
    pub scheme: DecayScheme,
    pub step_size: f64,
    pub max_iterations: u64,
    pub mse_every: u64,
    pub convergence_tol: f64,
    pub output_dir: PathBuf,
}

impl SweepConfig {
    pub fn resolve(o: SweepOverrides) -> HarnessResult<Self> {
        let mode = o.mode.unwrap_or(Mode::AppendixB);
        let n = o.n.unwrap_or(16);
        if n == 0 {
            return Err(HarnessError::Config("n must be at least 1".into()));
        }
        if n > MAX_PREFILL_STATES {
            return Err(HarnessError::Config(format!(
                "n = {n} exceeds the prefill guard of {MAX_PREFILL_STATES} states"
            )));
        }
        let rho = o.rho.unwrap_or(0.4);
        if !(rho > 0.0 && rho < 1.0) {
            return Err(HarnessError::Config(format!("rho must lie in (0, 1), got {rho}")));
        }
        let window = match o.window {
            Some(w) => w,
            None => compute_window(rho, DEFAULT_CUTOFF)?,
        };
        let (step, alpha, eps, budget, tol) = match mode {
            Mode::AppendixB => (0.25, 0.5, 1e-4, 50_000_000, 1e-4),
            Mode::Theorem => (1.0, 1.0, THEOREM_EPSILON, 1_000_000, EXACT_TOLERANCE),
        };
        let strategies = o.strategies.unwrap_or_else(|| Strategy::ALL.to_vec());
        if strategies.is_empty() {
            return Err(HarnessError::Config("at least one strategy is required".into()));
        }
        let mut seen = strategies.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != strategies.len() {
            return Err(HarnessError::Config("strategies must be distinct".into()));
        }
        let seeds = o.seeds.unwrap_or_else(|| (0..10).collect());
        if seeds.is_empty() {
            return Err(HarnessError::Config("at least one seed is required".into()));
        }
        let cfg = Self {
            n,
            gamma: o.gamma.unwrap_or_else(|| default_gamma(n)),
            mode,
            strategies,
            seeds,
            init_priority: o.init_priority.unwrap_or(InitialPriority::Max),
            rho,
            window,
            eta: o.eta.unwrap_or(0.0),
            epsilon: o.epsilon.unwrap_or(eps),
            alpha: o.alpha.unwrap_or(alpha),
            beta: o.beta.unwrap_or(0.5),
            scheme: o.scheme.unwrap_or(DecayScheme::Max),
            step_size: o.step_size.unwrap_or(step),
            max_iterations: o.max_iterations.unwrap_or(budget),
            mse_every: o.mse_every.unwrap_or(100),
            convergence_tol: o.convergence_tol.unwrap_or(tol),
            output_dir: o.output_dir.unwrap_or_else(|| PathBuf::from("out")),
        };
        // Surface range errors before any work starts.
        cfg.experiment(cfg.strategies[0], cfg.seeds[0])?;
        Ok(cfg)
    }

    /// Experiment for one (strategy, seed) cell of the sweep.
    pub fn experiment(&self, strategy: Strategy, seed: u64) -> HarnessResult<ExperimentConfig> {
        let spec = CliffwalkSpec::new(self.n, Some(self.gamma), seed)?;
        let decay = DecayConfig::new(self.rho)?
            .with_window(self.window)
            .with_eta(self.eta)
            .with_epsilon(self.epsilon)
            .with_alpha(self.alpha)
            .with_beta(self.beta)
            .with_scheme(self.scheme);
        let cfg = ExperimentConfig {
            spec,
            strategy,
            mode: self.mode,
            decay,
            step_size: self.step_size,
            init_priority: self.init_priority,
            max_iterations: self.max_iterations,
            mse_every: self.mse_every,
            convergence_tol: self.convergence_tol,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Hex SHA-256 of the canonical JSON form, ignoring where outputs go.
    pub fn hash(&self) -> HarnessResult<String> {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        Ok(hex::encode(Sha256::digest(serde_json::to_vec(&canonical)?)))
    }
}

/// Parses `a,b,c`, `a..b` (exclusive) or `a..=b` (inclusive).
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let num = |t: &str| t.trim().parse::<u64>().map_err(|e| format!("bad seed `{t}`: {e}"));
    if let Some((a, b)) = s.split_once("..=") {
        let (a, b) = (num(a)?, num(b)?);
        return if a <= b { Ok((a..=b).collect()) } else { Err(format!("empty seed range `{s}`")) };
    }
    if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (num(a)?, num(b)?);
        return if a < b { Ok((a..b).collect()) } else { Err(format!("empty seed range `{s}`")) };
    }
    s.split(',').map(num).collect()
}
