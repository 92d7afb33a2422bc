//! Uniform experience replay and the two transition records.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::medium::CommActionSet;

/// `(o, m, a, q, o')` plus the extrinsic rewards baselines train on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionTransition {
    pub obs: Vec<Vec<f64>>,
    /// Decoded landmark block per recipient; `None` for algorithms without a medium.
    pub medium: Option<Vec<Vec<f64>>>,
    pub senders: Option<Vec<usize>>,
    pub actions: Vec<[f64; 4]>,
    pub intrinsic: Vec<f64>,
    pub extrinsic: Vec<f64>,
    pub next_obs: Vec<Vec<f64>>,
}

/// `(o, c, K, o'')` for the communication level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommTransition {
    pub obs: Vec<Vec<f64>>,
    pub comm: CommActionSet,
    /// Per-agent extrinsic reward accumulated over the window.
    pub accumulated: Vec<f64>,
    pub obs_after: Vec<Vec<f64>>,
}

/// Fixed-capacity FIFO ring with uniform sampling with replacement.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    storage: Vec<T>,
    next: usize,
    insert_count: u64,
}

pub const DEFAULT_CAPACITY: usize = 1_000_000;

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer { capacity, storage: Vec::new(), next: 0, insert_count: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn insert_count(&self) -> u64 {
        self.insert_count
    }

    pub fn push(&mut self, item: T) {
        if self.storage.len() < self.capacity {
            self.storage.push(item);
        } else {
            self.storage[self.next] = item;
        }
        self.next = (self.next + 1) % self.capacity;
        self.insert_count += 1;
    }

    /// Items from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        let split = if self.storage.len() < self.capacity { 0 } else { self.next };
        self.storage[split..].iter().chain(self.storage[..split].iter())
    }

    pub fn is_ready(&self, batch_size: usize) -> bool {
        batch_size > 0 && self.storage.len() >= batch_size
    }

    /// `None` until the buffer holds at least `batch_size` items.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, batch_size: usize) -> Option<Vec<&T>> {
        if !self.is_ready(batch_size) {
            return None;
        }
        let n = self.storage.len();
        Some((0..batch_size).map(|_| &self.storage[rng.random_range(0..n)]).collect())
    }
}
