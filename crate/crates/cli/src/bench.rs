//! `bench` command: a seeded mixed workload against the replay buffer,
//! followed by an invariant check and a goodness-of-fit test of sampling.

use std::time::Instant;

use pser::{InitPriority, ReplayBuffer, Transition};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{HarnessError, HarnessResult};

/// Largest capacity the benchmark accepts.
pub const MAX_CAPACITY: usize = 1 << 26;

/// Relative tolerance on tree-node sums.
pub const CONSISTENCY_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct BenchArgs {
    pub capacity: usize,
    pub ops: u64,
    pub batch: usize,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    pub gof_draws: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub capacity: usize,
    pub ops: u64,
    pub seed: u64,
    pub alpha: f64,
    pub inserts: u64,
    pub updates: u64,
    pub samples: u64,
    pub len: usize,
    pub total_mass: f64,
    /// FNV-1a over every sampled slot index; fixed for a given seed.
    pub sample_digest: String,
    pub max_rel_error: f64,
    pub consistent: bool,
    pub gof_draws: u64,
    pub gof_bins: usize,
    pub gof_chi2: f64,
    pub gof_p_value: f64,
    /// Timing fields vary run to run.
    pub elapsed_secs: f64,
    pub ops_per_sec: f64,
}

struct Fnv(u64);

impl Fnv {
    fn push(&mut self, x: u64) {
        for b in x.to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x100_0000_01b3);
        }
    }
}

/// Pearson statistic for slot draws against the buffer's own distribution;
/// slots with expected count below 5 are pooled into one bin.
fn goodness_of_fit(buf: &ReplayBuffer, draws: u64, rng: &mut ChaCha8Rng) -> HarnessResult<(usize, f64, f64)> {
    let mut counts = vec![0u64; buf.capacity()];
    for _ in 0..draws {
        counts[buf.sample_slot(rng)?] += 1;
    }
    let total = buf.total_mass();
    let (mut pooled_obs, mut pooled_exp, mut chi2, mut bins) = (0.0, 0.0, 0.0, 0usize);
    for (slot, _) in buf.occupied() {
        let expected = draws as f64 * buf.mass(slot) / total;
        let observed = counts[slot] as f64;
        if expected >= 5.0 {
            chi2 += (observed - expected).powi(2) / expected;
            bins += 1;
        } else {
            pooled_obs += observed;
            pooled_exp += expected;
        }
    }
    if pooled_exp > 0.0 {
        chi2 += (pooled_obs - pooled_exp).powi(2) / pooled_exp;
        bins += 1;
    }
    if bins < 2 {
        return Ok((bins, 0.0, 1.0));
    }
    let dist = ChiSquared::new((bins - 1) as f64)
        .map_err(|e| HarnessError::Consistency(format!("chi-square setup: {e}")))?;
    Ok((bins, chi2, dist.sf(chi2)))
}

pub fn bench(args: &BenchArgs) -> HarnessResult<BenchReport> {
    if args.capacity == 0 || args.capacity > MAX_CAPACITY {
        return Err(HarnessError::Config(format!(
            "capacity must lie in 1..={MAX_CAPACITY}, got {}",
            args.capacity
        )));
    }
    if args.batch == 0 {
        return Err(HarnessError::Config("batch must be at least 1".into()));
    }
    let mut buf = ReplayBuffer::new(args.capacity, args.alpha, 1e-6)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut digest = Fnv(0xcbf2_9ce4_8422_2325);
    let (mut inserts, mut updates, mut samples) = (0u64, 0u64, 0u64);
    let mut episode = 0u64;

    let started = Instant::now();
    for _ in 0..args.ops {
        let op = rng.gen_range(0..10);
        if op < 4 || buf.total_mass() <= 0.0 {
            if rng.gen_bool(0.05) {
                episode += 1;
            }
            let t = Transition {
                state: rng.gen_range(0..64),
                action: rng.gen_range(0..2),
                reward: 0.0,
                next_state: rng.gen_range(0..64),
                terminal: false,
                episode_id: episode,
            };
            let p = rng.gen_range(0.0..10.0);
            buf.insert(t, InitPriority::Fixed(p), None)?;
            inserts += 1;
        } else if op < 8 {
            let slot = rng.gen_range(0..buf.len());
            buf.update_priority(slot, rng.gen_range(0.0..10.0))?;
            updates += 1;
        } else {
            let batch = buf.sample(args.batch, args.beta, &mut rng)?;
            for i in batch.indices {
                digest.push(i as u64);
            }
            samples += 1;
        }
    }
    let elapsed = started.elapsed().as_secs_f64();

    let max_rel_error = buf.consistency_error();
    let consistent = max_rel_error <= CONSISTENCY_TOL;
    let (gof_bins, gof_chi2, gof_p_value) = if buf.total_mass() > 0.0 && args.gof_draws > 0 {
        goodness_of_fit(&buf, args.gof_draws, &mut rng)?
    } else {
        (0, 0.0, 1.0)
    };

    let report = BenchReport {
        capacity: args.capacity,
        ops: args.ops,
        seed: args.seed,
        alpha: args.alpha,
        inserts,
        updates,
        samples,
        len: buf.len(),
        total_mass: buf.total_mass(),
        sample_digest: format!("{:016x}", digest.0),
        max_rel_error,
        consistent,
        gof_draws: args.gof_draws,
        gof_bins,
        gof_chi2,
        gof_p_value,
        elapsed_secs: elapsed,
        ops_per_sec: if elapsed > 0.0 { args.ops as f64 / elapsed } else { f64::INFINITY },
    };
    if !consistent {
        return Err(HarnessError::Consistency(format!(
            "tree node error {max_rel_error:e} exceeds {CONSISTENCY_TOL:e}"
        )));
    }
    Ok(report)
}
