//! Tabular Q-learning from a prefilled Cliffwalk replay memory.
//!
//! Every iteration replays one transition chosen by the configured
//! [`Strategy`], applies a single-cell TD update, and refreshes priorities.
//! Two protocols are supported:
//!
//! * [`Mode::Theorem`]: step size 1, `alpha = 1`, prefill priorities equal to
//!   each transition's TD error under the all-zero table (plus a tiny
//!   epsilon), priorities refreshed from the TD error measured *after* the
//!   update, convergence when the table equals `Q*` to 1e-9.
//! * [`Mode::AppendixB`]: step size 1/4, `alpha = 0.5`, every prefill
//!   priority set to 1 or to epsilon, priorities refreshed from the TD error
//!   that drove the update, convergence when the MSE reaches the tolerance.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cliffwalk::{CliffwalkSpec, GroundTruth};
use crate::decay::{self, DecayConfig};
use crate::error::{invalid, Error, Result};
use crate::replay::{InitPriority, ReplayBuffer, Transition};

const SAMPLING_STREAM: u64 = 2;

/// Absolute tolerance for "the table equals Q*" in theorem mode.
pub const EXACT_TOLERANCE: f64 = 1e-9;

/// Epsilon used by the theorem protocol, standing in for a zero floor.
pub const THEOREM_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Uniform,
    Oracle,
    Per,
    Pser,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Uniform, Strategy::Oracle, Strategy::Per, Strategy::Pser];

    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Uniform => "uniform",
            Strategy::Oracle => "oracle",
            Strategy::Per => "per",
            Strategy::Pser => "pser",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(Strategy::Uniform),
            "oracle" => Ok(Strategy::Oracle),
            "per" => Ok(Strategy::Per),
            "pser" => Ok(Strategy::Pser),
            other => Err(invalid(format!("unknown strategy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Theorem,
    AppendixB,
}

/// Prefill priority in [`Mode::AppendixB`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialPriority {
    /// Every transition starts at priority 1.
    Max,
    /// Every transition starts at priority epsilon.
    Epsilon,
}

/// Action-value table, one row of two actions per state.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    pub values: Vec<[f64; 2]>,
}

impl QTable {
    pub fn zeros(n: usize) -> Self {
        Self {
            values: vec![[0.0; 2]; n],
        }
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state][action]
    }

    pub fn best(&self, state: usize) -> f64 {
        let [a, b] = self.values[state];
        a.max(b)
    }

    /// Largest absolute difference to the ground truth.
    pub fn max_error(&self, gt: &GroundTruth) -> f64 {
        self.values
            .iter()
            .zip(&gt.q_star)
            .flat_map(|(q, g)| [(q[0] - g[0]).abs(), (q[1] - g[1]).abs()])
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub spec: CliffwalkSpec,
    pub strategy: Strategy,
    pub mode: Mode,
    pub decay: DecayConfig,
    pub step_size: f64,
    pub init_priority: InitialPriority,
    pub max_iterations: u64,
    pub mse_every: u64,
    pub convergence_tol: f64,
    pub seed: u64,
}

impl ExperimentConfig {
    /// MSE-traced protocol: step 1/4, `alpha = 0.5`, `epsilon = 1e-4`,
    /// `rho = 0.4` (window 5), `eta = 0`, max-priority prefill, MSE every 100
    /// iterations, tolerance 1e-4.
    pub fn appendix_b(spec: CliffwalkSpec, strategy: Strategy, seed: u64) -> Self {
        let decay = DecayConfig::new(0.4).expect("0.4 is a valid decay coefficient");
        Self {
            spec,
            strategy,
            mode: Mode::AppendixB,
            decay,
            step_size: 0.25,
            init_priority: InitialPriority::Max,
            max_iterations: 50_000_000,
            mse_every: 100,
            convergence_tol: 1e-4,
            seed,
        }
    }

    /// Exact-convergence protocol: step 1, `alpha = 1`, epsilon
    /// [`THEOREM_EPSILON`], budget 10^6.
    pub fn theorem(spec: CliffwalkSpec, strategy: Strategy, rho: f64, seed: u64) -> Result<Self> {
        let decay = DecayConfig::new(rho)?
            .with_alpha(1.0)
            .with_epsilon(THEOREM_EPSILON);
        Ok(Self {
            spec,
            strategy,
            mode: Mode::Theorem,
            decay,
            step_size: 1.0,
            init_priority: InitialPriority::Max,
            max_iterations: 1_000_000,
            mse_every: 100,
            convergence_tol: EXACT_TOLERANCE,
            seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.decay.validate()?;
        if !(self.step_size > 0.0 && self.step_size <= 1.0) {
            return Err(invalid(format!("step_size must lie in (0, 1], got {}", self.step_size)));
        }
        if self.mse_every == 0 {
            return Err(invalid("mse_every must be at least 1"));
        }
        if !(self.convergence_tol >= 0.0) {
            return Err(invalid("convergence_tol must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: u64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTrace {
    pub rows: Vec<TraceRow>,
    /// First iteration after which the convergence criterion held.
    pub converged_at: Option<u64>,
    /// Updates performed before stopping.
    pub iterations: u64,
}

/// `r + gamma * max_a q[s'][a] - q[s][a]`, with no bootstrap on terminal
/// transitions.
pub fn td_error(q: &QTable, t: &Transition, gamma: f64) -> f64 {
    let bootstrap = if t.terminal { 0.0 } else { q.best(t.next_state) };
    t.reward + gamma * bootstrap - q.get(t.state, t.action)
}

/// `q[s][a] += step_size * delta * weight` (weight defaults to 1).
pub fn apply_update(q: &mut QTable, t: &Transition, delta: f64, step_size: f64, is_weight: Option<f64>) {
    q.values[t.state][t.action] += step_size * delta * is_weight.unwrap_or(1.0);
}

/// Mean over all `n x 2` cells of the squared difference to `Q*`.
pub fn mse(q: &QTable, gt: &GroundTruth) -> f64 {
    let cells = 2 * gt.q_star.len();
    let sum: f64 = q
        .values
        .iter()
        .zip(&gt.q_star)
        .map(|(q, g)| (q[0] - g[0]).powi(2) + (q[1] - g[1]).powi(2))
        .sum();
    sum / cells as f64
}

/// The occupied slot whose update (applied in hindsight) leaves the lowest
/// global MSE; the lowest slot wins ties.
///
/// An update only moves one cell, so the candidates are ranked by that
/// cell's change in squared error.
pub fn oracle_select(
    buffer: &ReplayBuffer,
    q: &QTable,
    gt: &GroundTruth,
    gamma: f64,
    step_size: f64,
) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (slot, t) in buffer.occupied() {
        let old = q.get(t.state, t.action);
        let target = gt.q_star[t.state][t.action];
        let new = old + step_size * td_error(q, t, gamma);
        let change = (new - target).powi(2) - (old - target).powi(2);
        if best.is_none_or(|(_, c)| change < c) {
            best = Some((slot, change));
        }
    }
    best.map(|(slot, _)| slot).ok_or(Error::EmptyBuffer)
}

/// What one iteration did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub slot: usize,
    pub delta: f64,
    pub weight: f64,
}

/// A running experiment. [`run_experiment`] drives one to completion; tests
/// step it manually to observe intermediate tables.
#[derive(Debug, Clone)]
pub struct Experiment {
    cfg: ExperimentConfig,
    gt: GroundTruth,
    q: QTable,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    iteration: u64,
}

impl Experiment {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let spec = &cfg.spec;
        let prefill = spec.exhaustive_prefill()?;
        let q = QTable::zeros(spec.n());
        let mut buffer = ReplayBuffer::new(prefill.len(), cfg.decay.alpha, cfg.decay.epsilon)?;
        for t in &prefill {
            match cfg.mode {
                Mode::Theorem => {
                    let td = td_error(&q, t, spec.gamma());
                    let slot = buffer.insert(*t, InitPriority::CurrentTd, Some(td))?;
                    if cfg.strategy == Strategy::Pser && cfg.decay.window > 0 {
                        let anchor = buffer.priority(slot)?;
                        decay::decay(&mut buffer, slot, anchor, &cfg.decay)?;
                    }
                }
                Mode::AppendixB => {
                    let p = match cfg.init_priority {
                        InitialPriority::Max => 1.0,
                        InitialPriority::Epsilon => cfg.decay.epsilon,
                    };
                    buffer.insert(*t, InitPriority::Fixed(p), None)?;
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(SAMPLING_STREAM);
        Ok(Self {
            gt: spec.ground_truth(),
            cfg: cfg.clone(),
            q,
            buffer,
            rng,
            iteration: 0,
        })
    }

    pub fn q(&self) -> &QTable {
        &self.q
    }

    pub fn ground_truth(&self) -> &GroundTruth {
        &self.gt
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn mse(&self) -> f64 {
        mse(&self.q, &self.gt)
    }

    pub fn is_converged(&self) -> bool {
        match self.cfg.mode {
            Mode::Theorem => self.q.max_error(&self.gt) <= EXACT_TOLERANCE,
            Mode::AppendixB => self.mse() <= self.cfg.convergence_tol,
        }
    }

    fn select(&mut self) -> Result<(usize, f64)> {
        let gamma = self.cfg.spec.gamma();
        match self.cfg.strategy {
            Strategy::Uniform => {
                if self.buffer.is_empty() {
                    return Err(Error::EmptyBuffer);
                }
                Ok((self.rng.gen_range(0..self.buffer.len()), 1.0))
            }
            Strategy::Oracle => {
                let slot = oracle_select(&self.buffer, &self.q, &self.gt, gamma, self.cfg.step_size)?;
                Ok((slot, 1.0))
            }
            Strategy::Per | Strategy::Pser => {
                let batch = self.buffer.sample(1, self.cfg.decay.beta, &mut self.rng)?;
                Ok((batch.indices[0], batch.is_weights[0]))
            }
        }
    }

    /// Replays one transition and updates table and priorities.
    pub fn step(&mut self) -> Result<StepOutcome> {
        let gamma = self.cfg.spec.gamma();
        let (slot, weight) = self.select()?;
        let t = *self.buffer.transition(slot)?;
        let delta = td_error(&self.q, &t, gamma);
        apply_update(&mut self.q, &t, delta, self.cfg.step_size, Some(weight));

        if matches!(self.cfg.strategy, Strategy::Per | Strategy::Pser) {
            let refresh = match self.cfg.mode {
                Mode::Theorem => td_error(&self.q, &t, gamma),
                Mode::AppendixB => delta,
            };
            if self.cfg.strategy == Strategy::Per {
                let p = decay::priority_from_td(refresh, self.cfg.decay.epsilon)?;
                self.buffer.update_priority(slot, p)?;
            } else {
                decay::apply_sampled_update_split(&mut self.buffer, slot, refresh, delta, &self.cfg.decay)?;
            }
        }

        self.iteration += 1;
        Ok(StepOutcome { slot, delta, weight })
    }
}

/// Runs one seeded experiment until convergence or budget exhaustion.
///
/// The trace holds the MSE at iteration 0, every `mse_every` iterations,
/// and at the stopping iteration.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentTrace> {
    let mut exp = Experiment::new(cfg)?;
    let mut rows = vec![TraceRow {
        iteration: 0,
        mse: exp.mse(),
    }];
    let mut converged_at = exp.is_converged().then_some(0);

    while converged_at.is_none() && exp.iteration() < cfg.max_iterations {
        exp.step()?;
        let it = exp.iteration();
        if exp.is_converged() {
            converged_at = Some(it);
        }
        if it % cfg.mse_every == 0 || converged_at.is_some() || it == cfg.max_iterations {
            rows.push(TraceRow {
                iteration: it,
                mse: exp.mse(),
            });
        }
    }

    Ok(ExperimentTrace {
        rows,
        converged_at,
        iterations: exp.iteration(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize, seed: u64) -> CliffwalkSpec {
        CliffwalkSpec::new(n, None, seed).unwrap()
    }

    fn rewarded(spec: &CliffwalkSpec) -> Transition {
        let last = spec.n() - 1;
        Transition {
            state: last,
            action: spec.correct_action(last),
            reward: 1.0,
            next_state: 0,
            terminal: true,
            episode_id: 0,
        }
    }

    #[test]
    fn td_error_examples() {
        let s = spec(4, 1);
        let q = QTable::zeros(4);
        assert_eq!(td_error(&q, &rewarded(&s), s.gamma()), 1.0);
        let unrewarded = Transition {
            reward: 0.0,
            state: 0,
            action: s.correct_action(0),
            next_state: 1,
            terminal: false,
            episode_id: 0,
        };
        assert_eq!(td_error(&q, &unrewarded, s.gamma()), 0.0);
    }

    #[test]
    fn td_error_vanishes_at_fixed_point() {
        let s = spec(9, 4);
        let gt = s.ground_truth();
        let q = QTable { values: gt.q_star.clone() };
        for t in s.exhaustive_prefill().unwrap() {
            assert!(td_error(&q, &t, s.gamma()).abs() < 1e-15);
        }
    }

    #[test]
    fn apply_update_examples() {
        let s = spec(3, 0);
        let t = rewarded(&s);
        let mut q = QTable::zeros(3);
        apply_update(&mut q, &t, 1.0, 1.0, None);
        assert_eq!(q.get(2, s.correct_action(2)), 1.0);

        let mut q = QTable::zeros(3);
        apply_update(&mut q, &t, 1.0, 0.25, None);
        assert_eq!(q.get(2, s.correct_action(2)), 0.25);

        let mut q = QTable::zeros(3);
        apply_update(&mut q, &t, 1.0, 1.0, Some(0.5));
        assert_eq!(q.get(2, s.correct_action(2)), 0.5);
    }

    #[test]
    fn mse_examples() {
        let s = CliffwalkSpec::with_actions(2, Some(0.5), 0, vec![0, 0]).unwrap();
        let gt = s.ground_truth();
        assert_eq!(mse(&QTable::zeros(2), &gt), 0.3125);
        assert_eq!(mse(&QTable { values: gt.q_star.clone() }, &gt), 0.0);
    }

    #[test]
    fn oracle_picks_rewarded_transition_first() {
        let s = spec(5, 2);
        let cfg = ExperimentConfig::appendix_b(s.clone(), Strategy::Oracle, 0);
        let exp = Experiment::new(&cfg).unwrap();
        let slot = oracle_select(exp.buffer(), exp.q(), exp.ground_truth(), s.gamma(), 0.25).unwrap();
        assert_eq!(exp.buffer().transition(slot).unwrap().reward, 1.0);
    }

    #[test]
    fn oracle_ties_to_slot_zero_at_fixed_point() {
        let s = spec(4, 2);
        let cfg = ExperimentConfig::appendix_b(s.clone(), Strategy::Oracle, 0);
        let exp = Experiment::new(&cfg).unwrap();
        let q = QTable { values: exp.ground_truth().q_star.clone() };
        assert_eq!(oracle_select(exp.buffer(), &q, exp.ground_truth(), s.gamma(), 0.25).unwrap(), 0);
    }

    #[test]
    fn fixed_point_is_stable_for_every_strategy() {
        for strategy in Strategy::ALL {
            let cfg = ExperimentConfig::appendix_b(spec(5, 3), strategy, 1);
            let mut exp = Experiment::new(&cfg).unwrap();
            exp.q = QTable { values: exp.gt.q_star.clone() };
            let before = exp.q.clone();
            for _ in 0..200 {
                let out = exp.step().unwrap();
                assert!(out.delta.abs() < 1e-15);
            }
            assert!(exp.q.max_error(&exp.gt) < 1e-15);
            assert_eq!(exp.q.values.len(), before.values.len());
        }
    }

    #[test]
    fn single_state_converges_on_first_reward() {
        for strategy in [Strategy::Oracle, Strategy::Per, Strategy::Pser] {
            let cfg = ExperimentConfig::theorem(spec(1, 0), strategy, 0.5, 3).unwrap();
            let trace = run_experiment(&cfg).unwrap();
            assert_eq!(trace.converged_at, Some(1), "{strategy}");
        }
    }

    #[test]
    fn trace_rows_are_strictly_increasing() {
        let mut cfg = ExperimentConfig::appendix_b(spec(4, 0), Strategy::Uniform, 0);
        cfg.mse_every = 7;
        let trace = run_experiment(&cfg).unwrap();
        assert!(trace.converged_at.is_some());
        assert!(trace.rows.windows(2).all(|w| w[0].iteration < w[1].iteration));
        assert!(trace.rows.iter().all(|r| r.mse >= 0.0));
        assert_eq!(trace.rows.last().unwrap().iteration, trace.converged_at.unwrap());
        assert!(trace.rows.last().unwrap().mse <= cfg.convergence_tol);
    }

    #[test]
    fn exhausted_budget_is_not_an_error() {
        let mut cfg = ExperimentConfig::appendix_b(spec(8, 0), Strategy::Uniform, 0);
        cfg.max_iterations = 50;
        let trace = run_experiment(&cfg).unwrap();
        assert_eq!(trace.converged_at, None);
        assert_eq!(trace.iterations, 50);
        assert_eq!(trace.rows.last().unwrap().iteration, 50);
    }

    #[test]
    fn invalid_config_rejected() {
        let mut cfg = ExperimentConfig::appendix_b(spec(3, 0), Strategy::Per, 0);
        cfg.step_size = 0.0;
        assert!(run_experiment(&cfg).is_err());
        let mut cfg = ExperimentConfig::appendix_b(spec(3, 0), Strategy::Per, 0);
        cfg.mse_every = 0;
        assert!(run_experiment(&cfg).is_err());
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.as_str().parse::<Strategy>().unwrap(), s);
        }
        assert!("greedy".parse::<Strategy>().is_err());
    }
}
