//! Complete binary trees over a fixed number of leaves.
//!
//! [`SumTree`] keeps subtree sums and answers inverse-CDF ("prefix mass")
//! queries in `O(log N)`. [`MaxTree`] keeps subtree maxima so the current
//! largest leaf is available in `O(1)` after `O(log N)` updates.
//!
//! Both trees use the implicit heap layout: node `1` is the root, node `k`
//! has children `2k` and `2k + 1`, and leaf `i` lives at `width + i` where
//! `width` is the logical capacity rounded up to a power of two.

use crate::error::{Error, Result};

/// Sum tree over non-negative leaf masses.
///
/// Every internal node is recomputed as `left + right` whenever a leaf
/// below it changes, so node sums never accumulate incremental drift.
#[derive(Debug, Clone)]
pub struct SumTree {
    capacity: usize,
    width: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("tree capacity must be positive".into()));
        }
        let width = capacity.next_power_of_two();
        Ok(Self {
            capacity,
            width,
            nodes: vec![0.0; 2 * width],
        })
    }

    /// Logical number of leaves.
    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, leaf: usize) -> f64 {
        self.nodes[self.width + leaf]
    }

    /// Sets a leaf and refreshes every ancestor from its children.
    pub fn set(&mut self, leaf: usize, value: f64) {
        debug_assert!(leaf < self.capacity);
        debug_assert!(value >= 0.0 && value.is_finite());
        let mut node = self.width + leaf;
        self.nodes[node] = value;
        while node > 1 {
            node /= 2;
            self.nodes[node] = self.nodes[2 * node] + self.nodes[2 * node + 1];
        }
    }

    /// Returns the leaf `i` whose cumulative interval `[C(i-1), C(i))`
    /// contains `mass`. Zero-mass leaves own empty intervals and are never
    /// returned.
    pub fn prefix_find(&self, mass: f64) -> Result<usize> {
        let total = self.total();
        if !(mass >= 0.0 && mass < total) {
            return Err(Error::OutOfRange { mass, total });
        }
        let mut node = 1;
        let mut remaining = mass;
        while node < self.width {
            let left = self.nodes[2 * node];
            let right = self.nodes[2 * node + 1];
            // Rounding in `remaining -= left` can push the query past the
            // right subtree's mass; never descend into an empty subtree.
            if remaining < left || right == 0.0 {
                node *= 2;
            } else {
                remaining -= left;
                node = 2 * node + 1;
            }
        }
        Ok(node - self.width)
    }

    /// Plain left-to-right sum of all leaves.
    pub fn leaf_sum(&self) -> f64 {
        self.nodes[self.width..].iter().sum()
    }

    /// Largest relative deviation between an internal node and the sum of
    /// its two children. Zero for a consistent tree.
    pub fn max_node_error(&self) -> f64 {
        (1..self.width)
            .map(|k| {
                let expected = self.nodes[2 * k] + self.nodes[2 * k + 1];
                let diff = (self.nodes[k] - expected).abs();
                if expected == 0.0 {
                    diff
                } else {
                    diff / expected.abs()
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Max tree over leaf values; empty leaves hold `0`.
#[derive(Debug, Clone)]
pub struct MaxTree {
    width: usize,
    nodes: Vec<f64>,
}

impl MaxTree {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("tree capacity must be positive".into()));
        }
        let width = capacity.next_power_of_two();
        Ok(Self {
            width,
            nodes: vec![0.0; 2 * width],
        })
    }

    pub fn max(&self) -> f64 {
        self.nodes[1]
    }

    pub fn set(&mut self, leaf: usize, value: f64) {
        let mut node = self.width + leaf;
        self.nodes[node] = value;
        while node > 1 {
            node /= 2;
            self.nodes[node] = self.nodes[2 * node].max(self.nodes[2 * node + 1]);
        }
    }
}
