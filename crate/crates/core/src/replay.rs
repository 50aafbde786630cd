//! Fixed-capacity ring buffer of transitions with uniform sampling.

use rand::Rng;

use crate::env::Observation;
use crate::error::{Error, Result};

/// One replay unit: (s, a, r, s', terminal).
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: Observation,
    pub action: usize,
    pub reward: f64,
    pub next_observation: Observation,
    pub terminal: bool,
}

pub const DEFAULT_CAPACITY: usize = 10_000;

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    storage: Vec<Transition>,
    capacity: usize,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> ReplayBuffer {
        assert!(capacity > 0);
        ReplayBuffer {
            storage: Vec::with_capacity(capacity.min(1 << 14)),
            capacity,
            cursor: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Append, FIFO-overwriting the oldest entry once full.
    pub fn push(&mut self, transition: Transition) {
        if self.storage.len() < self.capacity {
            self.storage.push(transition);
        } else {
            self.storage[self.cursor] = transition;
            self.cursor = (self.cursor + 1) % self.capacity;
        }
    }

    /// `n` independent uniform draws with replacement.
    pub fn sample<'a, R: Rng>(&'a self, n: usize, rng: &mut R) -> Result<Vec<&'a Transition>> {
        if self.storage.len() < n {
            return Err(Error::BufferUnderfilled {
                have: self.storage.len(),
                need: n,
            });
        }
        Ok((0..n)
            .map(|_| &self.storage[rng.gen_range(0..self.storage.len())])
            .collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.storage.iter()
    }
}
