use rand::Rng;

use super::Transition;
use crate::error::{Error, Result};

/// Binary sum tree over a fixed number of leaves. Internal nodes are
/// recomputed from their children on every update, so the root carries no
/// accumulated rounding drift.
#[derive(Debug, Clone, PartialEq)]
pub struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        let leaves = capacity.max(1).next_power_of_two();
        SumTree { leaves, nodes: vec![0.0; 2 * leaves] }
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, i: usize) -> f64 {
        self.nodes[self.leaves + i]
    }

    pub fn set(&mut self, i: usize, value: f64) {
        let mut n = self.leaves + i;
        self.nodes[n] = value;
        while n > 1 {
            n /= 2;
            self.nodes[n] = self.nodes[2 * n] + self.nodes[2 * n + 1];
        }
    }

    /// Leaf whose cumulative range contains `u`, restricted to leaves with
    /// positive mass.
    pub fn find(&self, u: f64) -> usize {
        let mut u = u.clamp(0.0, self.total());
        let mut n = 1;
        while n < self.leaves {
            let left = self.nodes[2 * n];
            if u < left || self.nodes[2 * n + 1] <= 0.0 {
                n *= 2;
            } else {
                u -= left;
                n = 2 * n + 1;
            }
        }
        n - self.leaves
    }
}

/// A sampled batch: buffer slots, the transitions and their normalized
/// importance weights.
#[derive(Debug, Clone)]
pub struct Sample {
    pub indices: Vec<usize>,
    pub transitions: Vec<Transition>,
    pub weights: Vec<f64>,
}

/// Proportional prioritized replay with FIFO eviction.
#[derive(Debug, Clone)]
pub struct PrioritizedReplay {
    capacity: usize,
    alpha: f64,
    items: Vec<Transition>,
    priorities: Vec<f64>,
    tree: SumTree,
    next: usize,
    max_priority: f64,
}

impl PrioritizedReplay {
    pub fn new(capacity: usize, alpha: f64) -> Self {
        PrioritizedReplay {
            capacity,
            alpha,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            priorities: Vec::new(),
            tree: SumTree::new(capacity),
            next: 0,
            max_priority: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    /// Raw (pre-exponent) priority of slot `i`.
    pub fn priority(&self, i: usize) -> f64 {
        self.priorities[i]
    }

    pub fn max_priority(&self) -> f64 {
        self.max_priority
    }

    pub fn tree(&self) -> &SumTree {
        &self.tree
    }

    /// Probability that a single draw returns slot `i`.
    pub fn probability(&self, i: usize) -> f64 {
        self.tree.get(i) / self.tree.total()
    }

    /// Stores `t` at the current maximum priority, evicting the oldest item
    /// once full. Returns the slot used.
    pub fn push(&mut self, t: Transition) -> usize {
        let slot = self.next;
        if self.items.len() < self.capacity {
            self.items.push(t);
            self.priorities.push(self.max_priority);
        } else {
            self.items[slot] = t;
            self.priorities[slot] = self.max_priority;
        }
        self.tree.set(slot, self.max_priority.powf(self.alpha));
        self.next = (self.next + 1) % self.capacity;
        slot
    }

    pub fn update_priority(&mut self, i: usize, priority: f64) {
        debug_assert!(priority > 0.0 && priority.is_finite());
        self.priorities[i] = priority;
        self.tree.set(i, priority.powf(self.alpha));
        self.max_priority = self.max_priority.max(priority);
    }

    /// Stratified draw of `batch` slots, one per equal slice of the total
    /// mass. Weights are `(N P(i))^-is_exponent` divided by their maximum.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, is_exponent: f64, rng: &mut R) -> Result<Sample> {
        if self.len() < batch || batch == 0 {
            return Err(Error::InsufficientSamples { available: self.len(), requested: batch });
        }
        let total = self.tree.total();
        let slice = total / batch as f64;
        let n = self.len() as f64;
        let mut indices = Vec::with_capacity(batch);
        let mut weights = Vec::with_capacity(batch);
        for k in 0..batch {
            let u = (k as f64 + rng.random::<f64>()) * slice;
            let mut i = self.tree.find(u);
            if i >= self.len() {
                i = self.len() - 1;
            }
            indices.push(i);
            weights.push((n * self.probability(i)).powf(-is_exponent));
        }
        let max_w = weights.iter().copied().fold(0.0, f64::max);
        for w in &mut weights {
            *w /= max_w;
        }
        let transitions = indices.iter().map(|&i| self.items[i].clone()).collect();
        Ok(Sample { indices, transitions, weights })
    }
}
