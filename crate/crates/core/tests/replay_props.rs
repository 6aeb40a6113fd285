//! Sum-tree consistency under random workloads and sampling-distribution
//! checks against a linear-scan reference.

use pser::{InitPriority, ReplayBuffer, Transition};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn tr(episode_id: u64) -> Transition {
    Transition {
        state: 0,
        action: 0,
        reward: 0.0,
        next_state: 0,
        terminal: false,
        episode_id,
    }
}

/// `P(i) = p_i^alpha / sum_k p_k^alpha`, by direct enumeration.
fn linear_scan_probabilities(priorities: &[f64], alpha: f64) -> Vec<f64> {
    let masses: Vec<f64> = priorities.iter().map(|p| p.powf(alpha)).collect();
    let total: f64 = masses.iter().sum();
    masses.iter().map(|m| m / total).collect()
}

fn chi_square_p(counts: &[u64], probs: &[f64]) -> f64 {
    let draws: u64 = counts.iter().sum();
    let stat: f64 = counts
        .iter()
        .zip(probs)
        .map(|(&o, &p)| {
            let e = draws as f64 * p;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    ChiSquared::new((counts.len() - 1) as f64).unwrap().sf(stat)
}

fn filled(priorities: &[f64], alpha: f64) -> ReplayBuffer {
    let mut buf = ReplayBuffer::new(priorities.len(), alpha, 1e-6).unwrap();
    for &p in priorities {
        buf.insert(tr(0), InitPriority::Fixed(p), None).unwrap();
    }
    buf
}

#[test]
fn fuzz_keeps_nodes_consistent() {
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let capacity = [1, 7, 64, 100, 1000][seed as usize];
        let mut buf = ReplayBuffer::new(capacity, rng.gen_range(0.0..=1.0), 1e-6).unwrap();
        let mut shadow = vec![0.0f64; capacity];
        for _ in 0..10_000 {
            match rng.gen_range(0..3) {
                0 => {
                    let p = rng.gen_range(0.0..100.0);
                    let slot = buf.insert(tr(0), InitPriority::Fixed(p), None).unwrap();
                    shadow[slot] = p;
                }
                1 if !buf.is_empty() => {
                    let slot = rng.gen_range(0..buf.len());
                    let p = if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(0.0..1e3) };
                    buf.update_priority(slot, p).unwrap();
                    shadow[slot] = p;
                }
                _ if buf.total_mass() > 0.0 => {
                    let slot = buf.sample_slot(&mut rng).unwrap();
                    assert!(shadow[slot] > 0.0);
                }
                _ => {}
            }
            assert!(buf.consistency_error() <= 1e-9);
        }
        assert_eq!(buf.priorities(), shadow.as_slice());
        let expect: f64 = shadow.iter().map(|p| p.powf(buf.alpha())).sum();
        assert!((buf.total_mass() - expect).abs() <= 1e-9 * expect.max(1.0));
    }
}

#[test]
fn sampling_matches_linear_scan() {
    for (priorities, alpha) in [(vec![0.1, 0.3, 0.6], 0.5), (vec![1.0, 1.0, 2.0], 1.0)] {
        let buf = filled(&priorities, alpha);
        let probs = linear_scan_probabilities(&priorities, alpha);
        for (i, p) in probs.iter().enumerate() {
            assert!((buf.probability(i).unwrap() - p).abs() < 1e-12);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut counts = vec![0u64; priorities.len()];
        for _ in 0..1_000_000 {
            counts[buf.sample_slot(&mut rng).unwrap()] += 1;
        }
        let p = chi_square_p(&counts, &probs);
        assert!(p > 0.001, "chi-square p = {p} for {priorities:?}");
    }
}

#[test]
fn zero_alpha_is_exactly_uniform() {
    let priorities = [0.01, 5.0, 3.0, 1e-6, 42.0];
    let buf = filled(&priorities, 0.0);
    for i in 0..priorities.len() {
        assert_eq!(buf.probability(i).unwrap(), 0.2);
        assert_eq!(buf.mass(i), 1.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut counts = vec![0u64; priorities.len()];
    for _ in 0..500_000 {
        counts[buf.sample_slot(&mut rng).unwrap()] += 1;
    }
    assert!(chi_square_p(&counts, &[0.2; 5]) > 0.001);
}

#[test]
fn batch_is_weights_follow_probabilities() {
    let priorities = [1.0, 4.0, 9.0, 16.0];
    let buf = filled(&priorities, 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let batch = buf.sample(64, 1.0, &mut rng).unwrap();
    let n = buf.len() as f64;
    let raw: Vec<f64> = batch.probabilities.iter().map(|p| 1.0 / (n * p)).collect();
    let peak = raw.iter().cloned().fold(0.0, f64::max);
    for (w, r) in batch.is_weights.iter().zip(&raw) {
        assert!((w - r / peak).abs() < 1e-12);
    }
}
