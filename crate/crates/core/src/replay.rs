//! Bounded replay memory with proportional prioritized sampling.
//!
//! Transitions live in a ring of fixed capacity. Each occupied slot carries a
//! raw priority `p_i`; the sampling tree stores `p_i^alpha` so that a single
//! prefix-mass descent draws slot `i` with probability
//! `p_i^alpha / sum_k p_k^alpha`. Raw priorities are kept alongside so that
//! comparisons made by the decay pipeline operate on exact values.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::tree::{MaxTree, SumTree};

/// One stored experience.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
    pub terminal: bool,
    pub episode_id: u64,
}

/// Priority assigned to a transition when it is stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitPriority {
    /// Largest priority ever written to the buffer (starts at 1).
    MaxPrio,
    /// `|td| + epsilon` from a TD error supplied with the insert.
    CurrentTd,
    /// A caller-supplied constant.
    Fixed(f64),
}

/// How a batch of `k` draws is spread over the priority mass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SamplingMode {
    /// `k` i.i.d. proportional draws.
    #[default]
    Independent,
    /// One draw from each of `k` equal-mass segments.
    Stratified,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub indices: Vec<usize>,
    pub transitions: Vec<Transition>,
    /// Sampling probability `P(i)` of each drawn slot.
    pub probabilities: Vec<f64>,
    /// `(N * P(i))^-beta`, divided by the largest weight in the batch.
    pub is_weights: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Slot {
    transition: Transition,
    seq: u64,
}

/// Ring-buffer replay memory backed by a sum tree (sampling mass) and a max
/// tree (current largest raw priority).
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    alpha: f64,
    epsilon: f64,
    sampling: SamplingMode,
    slots: Vec<Option<Slot>>,
    raw: Vec<f64>,
    mass: SumTree,
    peak: MaxTree,
    next_slot: usize,
    next_seq: u64,
    len: usize,
    max_seen: f64,
    last_episode: Option<u64>,
}

impl ReplayBuffer {
    /// Creates an empty buffer.
    ///
    /// `alpha` is the prioritization exponent applied at storage time and
    /// `epsilon` the floor added to TD errors for [`InitPriority::CurrentTd`].
    pub fn new(capacity: usize, alpha: f64, epsilon: f64) -> Result<Self> {
        if capacity == 0 {
            return Err(invalid("replay capacity must be positive"));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(invalid(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(Self {
            capacity,
            alpha,
            epsilon,
            sampling: SamplingMode::Independent,
            slots: vec![None; capacity],
            raw: vec![0.0; capacity],
            mass: SumTree::new(capacity)?,
            peak: MaxTree::new(capacity)?,
            next_slot: 0,
            next_seq: 0,
            len: 0,
            max_seen: 1.0,
            last_episode: None,
        })
    }

    pub fn with_sampling(mut self, mode: SamplingMode) -> Self {
        self.sampling = mode;
        self
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Sum of stored masses `sum_k p_k^alpha`.
    pub fn total_mass(&self) -> f64 {
        self.mass.total()
    }

    /// Largest raw priority currently held by an occupied slot.
    pub fn max_priority(&self) -> f64 {
        self.peak.max()
    }

    /// Largest raw priority ever written, including the initial `1`.
    pub fn max_seen(&self) -> f64 {
        self.max_seen
    }

    /// Ring cursor: the slot the next insert will write.
    pub fn next_slot(&self) -> usize {
        self.next_slot
    }

    pub fn is_occupied(&self, slot: usize) -> bool {
        slot < self.capacity && self.slots[slot].is_some()
    }

    fn check(&self, slot: usize) -> Result<&Slot> {
        self.slots
            .get(slot)
            .and_then(Option::as_ref)
            .ok_or(Error::InvalidSlot { slot })
    }

    pub fn transition(&self, slot: usize) -> Result<&Transition> {
        self.check(slot).map(|s| &s.transition)
    }

    /// Raw (un-exponentiated) priority of an occupied slot.
    pub fn priority(&self, slot: usize) -> Result<f64> {
        self.check(slot).map(|_| self.raw[slot])
    }

    /// Stored sampling mass `p^alpha` of a slot (0 for empty slots).
    pub fn mass(&self, slot: usize) -> f64 {
        self.mass.get(slot)
    }

    /// `P(i)` for an occupied slot.
    pub fn probability(&self, slot: usize) -> Result<f64> {
        self.check(slot)?;
        let total = self.mass.total();
        if total <= 0.0 {
            return Err(Error::EmptyBuffer);
        }
        Ok(self.mass.get(slot) / total)
    }

    /// Occupied slots in ascending slot order.
    pub fn occupied(&self) -> impl Iterator<Item = (usize, &Transition)> + '_ {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.as_ref().map(|s| (i, &s.transition)))
    }

    /// Raw priorities of all slots (0 for empty ones).
    pub fn priorities(&self) -> &[f64] {
        &self.raw
    }

    /// The slot holding the transition stored immediately before `slot`,
    /// provided it still exists and belongs to the same episode.
    pub fn predecessor(&self, slot: usize) -> Option<usize> {
        let current = self.slots.get(slot)?.as_ref()?;
        let seq = current.seq.checked_sub(1)?;
        let prev = (seq % self.capacity as u64) as usize;
        let candidate = self.slots[prev].as_ref()?;
        (candidate.seq == seq && candidate.transition.episode_id == current.transition.episode_id)
            .then_some(prev)
    }

    fn store_priority(&mut self, slot: usize, p: f64) {
        self.raw[slot] = p;
        self.mass.set(slot, p.powf(self.alpha));
        self.peak.set(slot, p);
        if p > self.max_seen {
            self.max_seen = p;
        }
    }

    /// Stores `t` at the ring cursor, evicting the oldest transition when
    /// full, and returns its slot.
    pub fn insert(
        &mut self,
        t: Transition,
        mode: InitPriority,
        current_td: Option<f64>,
    ) -> Result<usize> {
        if let Some(last) = self.last_episode {
            if t.episode_id < last {
                return Err(invalid(format!(
                    "episode id {} precedes previously stored episode {last}",
                    t.episode_id
                )));
            }
        }
        let p = match mode {
            InitPriority::MaxPrio => self.max_seen,
            InitPriority::CurrentTd => {
                let td = current_td
                    .ok_or_else(|| invalid("CurrentTd insert requires a TD error"))?;
                if td.is_nan() {
                    return Err(invalid("TD error is NaN"));
                }
                td.abs() + self.epsilon
            }
            InitPriority::Fixed(c) => {
                if !(c >= 0.0 && c.is_finite()) {
                    return Err(invalid(format!("fixed priority must be finite and >= 0, got {c}")));
                }
                c
            }
        };

        let slot = self.next_slot;
        if self.slots[slot].is_some() {
            self.store_priority(slot, 0.0);
        } else {
            self.len += 1;
        }
        self.slots[slot] = Some(Slot {
            transition: t,
            seq: self.next_seq,
        });
        self.store_priority(slot, p);
        self.next_seq += 1;
        self.next_slot = (slot + 1) % self.capacity;
        self.last_episode = Some(t.episode_id);
        Ok(slot)
    }

    /// Sets the raw priority of an occupied slot; the tree receives `p^alpha`.
    pub fn update_priority(&mut self, slot: usize, p: f64) -> Result<()> {
        self.check(slot)?;
        if !(p >= 0.0 && p.is_finite()) {
            return Err(invalid(format!("priority must be finite and >= 0, got {p}")));
        }
        self.store_priority(slot, p);
        Ok(())
    }

    /// Slot whose cumulative mass interval contains `mass`.
    pub fn prefix_find(&self, mass: f64) -> Result<usize> {
        if self.mass.total() <= 0.0 {
            return Err(Error::EmptyBuffer);
        }
        self.mass.prefix_find(mass)
    }

    fn draw<R: Rng + ?Sized>(&self, lo: f64, width: f64, rng: &mut R) -> Result<usize> {
        let total = self.mass.total();
        let mut mass = lo + rng.gen::<f64>() * width;
        if mass >= total {
            // `u * total` can round up onto `total` itself.
            mass = total * (1.0 - f64::EPSILON);
        }
        self.mass.prefix_find(mass)
    }

    /// Draws one slot proportionally to its stored mass.
    pub fn sample_slot<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        let total = self.mass.total();
        if self.len == 0 || total <= 0.0 {
            return Err(Error::EmptyBuffer);
        }
        self.draw(0.0, total, rng)
    }

    /// Draws `k` slots and returns them with their probabilities and
    /// batch-normalized importance-sampling weights.
    pub fn sample<R: Rng + ?Sized>(&self, k: usize, beta: f64, rng: &mut R) -> Result<SampleBatch> {
        if k == 0 {
            return Err(invalid("batch size must be positive"));
        }
        if !(0.0..=1.0).contains(&beta) {
            return Err(invalid(format!("beta must lie in [0, 1], got {beta}")));
        }
        let total = self.mass.total();
        if self.len == 0 || total <= 0.0 {
            return Err(Error::EmptyBuffer);
        }

        let indices = match self.sampling {
            SamplingMode::Independent => (0..k)
                .map(|_| self.draw(0.0, total, rng))
                .collect::<Result<Vec<_>>>()?,
            SamplingMode::Stratified => {
                let segment = total / k as f64;
                (0..k)
                    .map(|j| self.draw(j as f64 * segment, segment, rng))
                    .collect::<Result<Vec<_>>>()?
            }
        };

        let n = self.len as f64;
        let mut transitions = Vec::with_capacity(k);
        let mut probabilities = Vec::with_capacity(k);
        let mut is_weights = Vec::with_capacity(k);
        for &slot in &indices {
            let p = self.mass.get(slot) / total;
            transitions.push(self.check(slot)?.transition);
            probabilities.push(p);
            is_weights.push((n * p).powf(-beta));
        }
        let max_w = is_weights.iter().cloned().fold(f64::MIN_POSITIVE, f64::max);
        for w in &mut is_weights {
            *w /= max_w;
        }

        Ok(SampleBatch {
            indices,
            transitions,
            probabilities,
            is_weights,
        })
    }

    /// Largest relative inconsistency between the sampling tree and the
    /// stored priorities: internal nodes against their children, and the
    /// root against a full re-summation of `p_i^alpha`.
    pub fn consistency_error(&self) -> f64 {
        let scan: f64 = self
            .raw
            .iter()
            .enumerate()
            .filter(|(i, _)| self.slots[*i].is_some())
            .map(|(_, p)| p.powf(self.alpha))
            .sum();
        let root = self.mass.total();
        let root_err = if scan == 0.0 {
            root.abs()
        } else {
            (root - scan).abs() / scan
        };
        root_err.max(self.mass.max_node_error())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn tr(episode: u64) -> Transition {
        Transition {
            state: 0,
            action: 0,
            reward: 0.0,
            next_state: 0,
            terminal: false,
            episode_id: episode,
        }
    }

    fn buffer_with(priorities: &[f64], alpha: f64) -> ReplayBuffer {
        let mut buf = ReplayBuffer::new(priorities.len(), alpha, 1e-4).unwrap();
        for &p in priorities {
            buf.insert(tr(0), InitPriority::Fixed(p), None).unwrap();
        }
        buf
    }

    #[test]
    fn first_max_prio_insert_gets_one() {
        let mut buf = ReplayBuffer::new(4, 0.5, 1e-4).unwrap();
        let slot = buf.insert(tr(0), InitPriority::MaxPrio, None).unwrap();
        assert_eq!(buf.priority(slot).unwrap(), 1.0);
    }

    #[test]
    fn fixed_insert_passes_constant_through() {
        let mut buf = ReplayBuffer::new(4, 0.5, 1e-4).unwrap();
        let slot = buf.insert(tr(0), InitPriority::Fixed(0.0001), None).unwrap();
        assert_eq!(buf.priority(slot).unwrap(), 0.0001);
    }

    #[test]
    fn max_prio_follows_largest_priority_seen() {
        let mut buf = ReplayBuffer::new(8, 1.0, 1e-4).unwrap();
        buf.insert(tr(0), InitPriority::Fixed(0.3), None).unwrap();
        let s = buf.insert(tr(0), InitPriority::Fixed(0.7), None).unwrap();
        buf.update_priority(s, 2.5).unwrap();
        buf.update_priority(s, 0.1).unwrap();
        let next = buf.insert(tr(0), InitPriority::MaxPrio, None).unwrap();
        assert_eq!(buf.priority(next).unwrap(), 2.5);
    }

    #[test]
    fn current_td_requires_value() {
        let mut buf = ReplayBuffer::new(4, 0.5, 0.01).unwrap();
        assert!(matches!(
            buf.insert(tr(0), InitPriority::CurrentTd, None),
            Err(Error::InvalidArgument(_))
        ));
        let s = buf.insert(tr(0), InitPriority::CurrentTd, Some(-0.5)).unwrap();
        assert_eq!(buf.priority(s).unwrap(), 0.51);
    }

    #[test]
    fn episode_ids_must_not_decrease() {
        let mut buf = ReplayBuffer::new(4, 0.5, 0.01).unwrap();
        buf.insert(tr(3), InitPriority::MaxPrio, None).unwrap();
        assert!(buf.insert(tr(2), InitPriority::MaxPrio, None).is_err());
    }

    #[test]
    fn eviction_replaces_oldest_and_keeps_root_honest() {
        let mut buf = buffer_with(&[1.0, 2.0, 3.0], 1.0);
        assert_eq!(buf.total_mass(), 6.0);
        let slot = buf.insert(tr(1), InitPriority::Fixed(0.5), None).unwrap();
        assert_eq!(slot, 0);
        assert_eq!(buf.len(), 3);
        assert_eq!(buf.total_mass(), 5.5);
        assert_eq!(buf.max_priority(), 3.0);
        // slot 2's successor in insertion order is now slot 0 (new episode)
        assert_eq!(buf.predecessor(0), None);
        assert_eq!(buf.predecessor(2), Some(1));
        assert_eq!(buf.predecessor(1), None);
    }

    #[test]
    fn predecessor_stops_at_episode_boundary() {
        let mut buf = ReplayBuffer::new(8, 1.0, 1e-4).unwrap();
        for ep in [0, 0, 1, 1, 1] {
            buf.insert(tr(ep), InitPriority::MaxPrio, None).unwrap();
        }
        assert_eq!(buf.predecessor(4), Some(3));
        assert_eq!(buf.predecessor(3), Some(2));
        assert_eq!(buf.predecessor(2), None);
        assert_eq!(buf.predecessor(1), Some(0));
        assert_eq!(buf.predecessor(0), None);
        assert_eq!(buf.predecessor(6), None);
    }

    #[test]
    fn update_priority_validates_slot() {
        let mut buf = ReplayBuffer::new(4, 1.0, 1e-4).unwrap();
        buf.insert(tr(0), InitPriority::MaxPrio, None).unwrap();
        assert_eq!(buf.update_priority(1, 1.0), Err(Error::InvalidSlot { slot: 1 }));
        assert_eq!(buf.update_priority(9, 1.0), Err(Error::InvalidSlot { slot: 9 }));
        assert!(buf.update_priority(0, -1.0).is_err());
    }

    #[test]
    fn zeroing_a_slot_removes_exactly_its_mass() {
        let mut buf = buffer_with(&[1.0, 1.0, 2.0], 1.0);
        let before = buf.total_mass();
        buf.update_priority(0, 0.0).unwrap();
        assert_eq!(before - buf.total_mass(), 1.0);
    }

    #[test]
    fn tree_holds_priority_to_the_alpha() {
        let buf = buffer_with(&[4.0, 9.0], 0.5);
        assert_eq!(buf.mass(0), 2.0);
        assert_eq!(buf.mass(1), 3.0);
        assert_eq!(buf.priority(1).unwrap(), 9.0);
        assert_eq!(buf.probability(1).unwrap(), 0.6);
    }

    #[test]
    fn sampling_empty_or_massless_buffer_fails() {
        let mut buf = ReplayBuffer::new(4, 1.0, 1e-4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(buf.sample(1, 0.5, &mut rng).unwrap_err(), Error::EmptyBuffer);
        buf.insert(tr(0), InitPriority::Fixed(0.0), None).unwrap();
        assert_eq!(buf.sample(1, 0.5, &mut rng).unwrap_err(), Error::EmptyBuffer);
        assert_eq!(buf.prefix_find(0.0).unwrap_err(), Error::EmptyBuffer);
    }

    #[test]
    fn zero_priority_slots_are_never_drawn() {
        let buf = buffer_with(&[0.0, 1.0, 0.0, 3.0], 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let batch = buf.sample(2000, 0.5, &mut rng).unwrap();
        assert!(batch.indices.iter().all(|&i| i == 1 || i == 3));
    }

    #[test]
    fn uniform_priorities_with_full_correction_weigh_one() {
        let buf = buffer_with(&[0.7; 10], 0.6);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch = buf.sample(16, 1.0, &mut rng).unwrap();
        for w in &batch.is_weights {
            assert!((w - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn batch_weights_peak_at_one() {
        let buf = buffer_with(&[0.1, 0.5, 2.0, 3.0, 0.05], 0.7);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let batch = buf.sample(32, 0.5, &mut rng).unwrap();
        let max = batch.is_weights.iter().cloned().fold(0.0, f64::max);
        assert_eq!(max, 1.0);
        assert!(batch.is_weights.iter().all(|&w| w > 0.0 && w <= 1.0));
        for (&slot, &p) in batch.indices.iter().zip(&batch.probabilities) {
            assert_eq!(p, buf.probability(slot).unwrap());
            assert!(p > 0.0 && p <= 1.0);
        }
    }

    #[test]
    fn identical_seeds_give_identical_batches() {
        let buf = buffer_with(&[0.1, 0.5, 2.0, 3.0, 0.05], 0.7);
        let a = buf.sample(64, 0.5, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b = buf.sample(64, 0.5, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stratified_mode_covers_each_segment() {
        let buf = buffer_with(&[1.0; 8], 1.0).with_sampling(SamplingMode::Stratified);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let batch = buf.sample(8, 0.0, &mut rng).unwrap();
        assert_eq!(batch.indices, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn capacity_one_buffer_cycles() {
        let mut buf = ReplayBuffer::new(1, 0.5, 1e-4).unwrap();
        for ep in 0..5 {
            assert_eq!(buf.insert(tr(ep), InitPriority::MaxPrio, None).unwrap(), 0);
        }
        assert_eq!(buf.len(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(buf.sample_slot(&mut rng).unwrap(), 0);
        assert_eq!(buf.predecessor(0), None);
    }
}
