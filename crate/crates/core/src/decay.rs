//! Sequence priority updates.
//!
//! A sampled transition's priority is refreshed from its TD error while
//! retaining a fraction `eta` of its previous value, and the TD-derived
//! priority is then propagated backward over the preceding transitions of
//! the same episode, shrinking by `rho` per step for at most `window` steps.
//!
//! Two propagation schemes exist. [`DecayScheme::Max`] keeps the larger of
//! the decayed value and the existing priority; [`DecayScheme::Add`] adds the
//! decayed value to the existing priority and clamps at the buffer maximum.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::replay::{InitPriority, ReplayBuffer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecayScheme {
    Max,
    Add,
}

/// Share of the anchor priority below which a decayed value is negligible.
pub const DEFAULT_CUTOFF: f64 = 0.01;

/// Hyperparameters of the prioritized-sequence pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayConfig {
    pub rho: f64,
    /// Backward steps covered by one propagation. `0` disables propagation.
    pub window: usize,
    pub eta: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub beta: f64,
    pub scheme: DecayScheme,
    pub init_mode: InitPriority,
    pub cutoff: f64,
}

impl DecayConfig {
    /// Configuration with the window derived from `rho` and the default
    /// cutoff, `eta = 0`, `epsilon = 1e-4`, `alpha = 0.5`, `beta = 0.5`,
    /// MAX propagation and max-priority inserts.
    pub fn new(rho: f64) -> Result<Self> {
        let window = compute_window(rho, DEFAULT_CUTOFF)?;
        Ok(Self {
            rho,
            window,
            eta: 0.0,
            epsilon: 1e-4,
            alpha: 0.5,
            beta: 0.5,
            scheme: DecayScheme::Max,
            init_mode: InitPriority::MaxPrio,
            cutoff: DEFAULT_CUTOFF,
        })
    }

    pub fn with_window(mut self, window: usize) -> Self {
        self.window = window;
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_scheme(mut self, scheme: DecayScheme) -> Self {
        self.scheme = scheme;
        self
    }

    /// Sets the cutoff and recomputes the window from it.
    pub fn with_cutoff(mut self, cutoff: f64) -> Result<Self> {
        self.window = compute_window(self.rho, cutoff)?;
        self.cutoff = cutoff;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(invalid(format!("rho must lie in (0, 1), got {}", self.rho)));
        }
        if !(0.0..1.0).contains(&self.eta) {
            return Err(invalid(format!("eta must lie in [0, 1), got {}", self.eta)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(invalid(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(invalid(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(invalid(format!("beta must lie in [0, 1], got {}", self.beta)));
        }
        if !(self.cutoff > 0.0 && self.cutoff < 1.0) {
            return Err(invalid(format!("cutoff must lie in (0, 1), got {}", self.cutoff)));
        }
        Ok(())
    }
}

/// `|delta| + epsilon`.
pub fn priority_from_td(delta: f64, epsilon: f64) -> Result<f64> {
    if delta.is_nan() {
        return Err(invalid("TD error is NaN"));
    }
    if !(epsilon > 0.0) {
        return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    Ok(delta.abs() + epsilon)
}

/// Number of backward steps before `rho^l` falls under `cutoff`:
/// `floor(ln cutoff / ln rho)`, at least 1.
pub fn compute_window(rho: f64, cutoff: f64) -> Result<usize> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(invalid(format!("rho must lie in (0, 1), got {rho}")));
    }
    if !(cutoff > 0.0 && cutoff < 1.0) {
        return Err(invalid(format!("cutoff must lie in (0, 1), got {cutoff}")));
    }
    let ratio = cutoff.ln() / rho.ln();
    // ln(0.01)/ln(0.1) evaluates a hair under 2
    let window = (ratio + 1e-9).floor() as usize;
    Ok(window.max(1))
}

/// `max(|delta| + epsilon, eta * old_p)`.
pub fn retained_update(delta: f64, old_p: f64, cfg: &DecayConfig) -> Result<f64> {
    if old_p.is_nan() || old_p < 0.0 {
        return Err(invalid(format!("previous priority must be >= 0, got {old_p}")));
    }
    Ok(priority_from_td(delta, cfg.epsilon)?.max(cfg.eta * old_p))
}

/// Walks backward from `anchor` through the same episode for up to
/// `cfg.window` steps, offering `p_anchor * rho^l` to each predecessor via
/// `combine(candidate, old) -> new`. Returns how many priorities changed.
fn propagate(
    buffer: &mut ReplayBuffer,
    anchor: usize,
    p_anchor: f64,
    cfg: &DecayConfig,
    combine: impl Fn(f64, f64) -> f64,
) -> Result<usize> {
    buffer.priority(anchor)?;
    if p_anchor.is_nan() || p_anchor < 0.0 {
        return Err(invalid(format!("anchor priority must be >= 0, got {p_anchor}")));
    }
    let mut changed = 0;
    let mut cursor = anchor;
    for l in 1..=cfg.window {
        let Some(prev) = buffer.predecessor(cursor) else {
            break;
        };
        let old = buffer.priorities()[prev];
        let new = combine(p_anchor * cfg.rho.powi(l as i32), old);
        if new != old {
            buffer.update_priority(prev, new)?;
            changed += 1;
        }
        cursor = prev;
    }
    Ok(changed)
}

/// MAX propagation: `p_{j-l} <- max(p_anchor * rho^l, p_{j-l})`.
pub fn decay_max(
    buffer: &mut ReplayBuffer,
    anchor: usize,
    p_anchor: f64,
    cfg: &DecayConfig,
) -> Result<usize> {
    propagate(buffer, anchor, p_anchor, cfg, f64::max)
}

/// ADD propagation: `p_{j-l} <- min(p_anchor * rho^l + p_{j-l}, p_max)`.
pub fn decay_add(
    buffer: &mut ReplayBuffer,
    anchor: usize,
    p_anchor: f64,
    p_max: f64,
    cfg: &DecayConfig,
) -> Result<usize> {
    if p_max.is_nan() || p_max < 0.0 {
        return Err(invalid(format!("p_max must be >= 0, got {p_max}")));
    }
    propagate(buffer, anchor, p_anchor, cfg, |candidate, old| {
        (candidate + old).min(p_max)
    })
}

/// Full update for one sampled transition using a single TD error for both
/// the refresh and the propagation anchor.
pub fn apply_sampled_update(
    buffer: &mut ReplayBuffer,
    slot: usize,
    delta: f64,
    cfg: &DecayConfig,
) -> Result<()> {
    apply_sampled_update_split(buffer, slot, delta, delta, cfg)
}

/// Full update for one sampled transition.
///
/// The slot's own priority becomes `max(|refresh_delta| + eps, eta * p)`.
/// Propagation is anchored on `|anchor_delta| + eps`, never on the
/// eta-retained value. Callers that learn with step size 1 pass the TD error
/// measured after the value update as `refresh_delta` and the one that drove
/// the update as `anchor_delta`.
pub fn apply_sampled_update_split(
    buffer: &mut ReplayBuffer,
    slot: usize,
    refresh_delta: f64,
    anchor_delta: f64,
    cfg: &DecayConfig,
) -> Result<()> {
    let old = buffer.priority(slot)?;
    let refreshed = retained_update(refresh_delta, old, cfg)?;
    buffer.update_priority(slot, refreshed)?;
    if cfg.window == 0 {
        return Ok(());
    }
    let anchor = priority_from_td(anchor_delta, cfg.epsilon)?;
    decay(buffer, slot, anchor, cfg)?;
    Ok(())
}

/// Propagates `p_anchor` backward with the configured scheme; ADD clamps at
/// the current buffer maximum.
pub fn decay(buffer: &mut ReplayBuffer, anchor: usize, p_anchor: f64, cfg: &DecayConfig) -> Result<usize> {
    match cfg.scheme {
        DecayScheme::Max => decay_max(buffer, anchor, p_anchor, cfg),
        DecayScheme::Add => {
            let p_max = buffer.max_priority();
            decay_add(buffer, anchor, p_anchor, p_max, cfg)
        }
    }
}
