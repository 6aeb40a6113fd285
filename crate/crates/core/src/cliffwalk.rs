//! The Blind Cliffwalk chain.
//!
//! States are `0..n`. In every state exactly one of the two actions (drawn
//! per state from the spec seed) advances the chain; the other ends the
//! episode with no reward. Taking the correct action in the last state ends
//! the episode with reward 1. Episodes always restart from state 0.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::replay::Transition;

/// Largest chain length accepted by [`CliffwalkSpec::exhaustive_prefill`].
pub const MAX_PREFILL_STATES: usize = 24;

const ACTION_STREAM: u64 = 0;
const SHUFFLE_STREAM: u64 = 1;

/// Serialized form of a [`CliffwalkSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliffwalkParams {
    pub n: usize,
    /// `None` selects `1 - 1/n`.
    pub gamma: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CliffwalkParams", into = "CliffwalkParams")]
pub struct CliffwalkSpec {
    n: usize,
    gamma: f64,
    seed: u64,
    correct_actions: Vec<usize>,
}

/// Result of one environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub next_state: usize,
    pub reward: f64,
    pub terminal: bool,
}

/// Optimal action values of the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub q_star: Vec<[f64; 2]>,
}

/// Default discount `1 - 1/n`.
pub fn default_gamma(n: usize) -> f64 {
    1.0 - 1.0 / n as f64
}

impl CliffwalkSpec {
    /// Chain of `n` states whose correct actions are drawn from `seed`.
    pub fn new(n: usize, gamma: Option<f64>, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(ACTION_STREAM);
        let correct_actions = (0..n).map(|_| rng.gen_range(0..2)).collect();
        Self::with_actions(n, gamma, seed, correct_actions)
    }

    /// Chain with explicitly chosen correct actions.
    pub fn with_actions(
        n: usize,
        gamma: Option<f64>,
        seed: u64,
        correct_actions: Vec<usize>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(invalid("the chain needs at least one state"));
        }
        let gamma = gamma.unwrap_or_else(|| default_gamma(n));
        if !(0.0..=1.0).contains(&gamma) {
            return Err(invalid(format!("gamma must lie in [0, 1], got {gamma}")));
        }
        if correct_actions.len() != n || correct_actions.iter().any(|&a| a > 1) {
            return Err(invalid("correct_actions must hold one 0/1 entry per state"));
        }
        Ok(Self {
            n,
            gamma,
            seed,
            correct_actions,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn correct_actions(&self) -> &[usize] {
        &self.correct_actions
    }

    pub fn correct_action(&self, state: usize) -> usize {
        self.correct_actions[state]
    }

    pub fn step(&self, state: usize, action: usize) -> Result<Step> {
        if state >= self.n {
            return Err(invalid(format!("state {state} outside 0..{}", self.n)));
        }
        if action > 1 {
            return Err(invalid(format!("action {action} is not 0 or 1")));
        }
        let step = if action != self.correct_actions[state] {
            Step {
                next_state: 0,
                reward: 0.0,
                terminal: true,
            }
        } else if state + 1 == self.n {
            Step {
                next_state: 0,
                reward: 1.0,
                terminal: true,
            }
        } else {
            Step {
                next_state: state + 1,
                reward: 0.0,
                terminal: false,
            }
        };
        Ok(step)
    }

    /// `Q*(i, correct) = gamma^(n-1-i)`, `Q*(i, wrong) = 0`.
    pub fn ground_truth(&self) -> GroundTruth {
        let q_star = (0..self.n)
            .map(|i| {
                let mut row = [0.0; 2];
                row[self.correct_actions[i]] = self.gamma.powi((self.n - 1 - i) as i32);
                row
            })
            .collect();
        GroundTruth { q_star }
    }

    /// Every transition produced by running all `2^n` action sequences from
    /// state 0 until termination, episodes in seeded random order.
    ///
    /// Sequence `m` takes action `(m >> t) & 1` at step `t`. Episode ids count
    /// up from 0 in emission order. The result holds `2^(n+1) - 2` transitions.
    pub fn exhaustive_prefill(&self) -> Result<Vec<Transition>> {
        if self.n > MAX_PREFILL_STATES {
            return Err(Error::ResourceGuard(format!(
                "exhaustive prefill needs 2^{} transitions; n is limited to {MAX_PREFILL_STATES}",
                self.n + 1
            )));
        }
        let mut order: Vec<u32> = (0..1u32 << self.n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(SHUFFLE_STREAM);
        order.shuffle(&mut rng);

        let mut out = Vec::with_capacity((1usize << (self.n + 1)) - 2);
        for (episode_id, &sequence) in order.iter().enumerate() {
            let mut state = 0;
            for t in 0..self.n {
                let action = ((sequence >> t) & 1) as usize;
                let step = self.step(state, action)?;
                out.push(Transition {
                    state,
                    action,
                    reward: step.reward,
                    next_state: step.next_state,
                    terminal: step.terminal,
                    episode_id: episode_id as u64,
                });
                if step.terminal {
                    break;
                }
                state = step.next_state;
            }
        }
        Ok(out)
    }
}

impl TryFrom<CliffwalkParams> for CliffwalkSpec {
    type Error = Error;

    fn try_from(p: CliffwalkParams) -> Result<Self> {
        Self::new(p.n, p.gamma, p.seed)
    }
}

impl From<CliffwalkSpec> for CliffwalkParams {
    fn from(spec: CliffwalkSpec) -> Self {
        Self {
            n: spec.n,
            gamma: Some(spec.gamma),
            seed: spec.seed,
        }
    }
}
