//! Prioritized sequence experience replay.
//!
//! * [`tree`]: sum and max trees used for proportional sampling.
//! * [`replay`]: ring-buffer replay memory with priorities and IS weights.
//! * [`decay`]: TD-error priorities, eta retention and backward decay.
//! * [`cliffwalk`]: the Blind Cliffwalk chain, its exhaustive prefill and `Q*`.
//! * [`agent`]: tabular Q-learning over the prefill with four replay strategies.
//! * [`theory`]: closed-form expected convergence steps and Monte-Carlo checks.

pub mod agent;
pub mod cliffwalk;
pub mod decay;
pub mod error;
pub mod replay;
pub mod theory;
pub mod tree;

pub use agent::{
    apply_update, mse, oracle_select, run_experiment, td_error, Experiment, ExperimentConfig,
    ExperimentTrace, InitialPriority, Mode, QTable, Strategy, TraceRow,
};
pub use cliffwalk::{CliffwalkSpec, GroundTruth};
pub use decay::{DecayConfig, DecayScheme};
pub use error::{Error, Result};
pub use replay::{InitPriority, ReplayBuffer, SampleBatch, SamplingMode, Transition};
pub use theory::{BoundVariant, MonteCarloSummary, TheoremResult};
