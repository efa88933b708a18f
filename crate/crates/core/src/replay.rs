//! Uniform replay buffer.
//!
//! Each transition carries the source policies' heads evaluated at its state,
//! computed once when the transition is stored and reused by every gradient
//! step that samples it.

use crate::distributions::GaussianHead;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReplayError {
    #[error("transition carries {got} source heads, buffer expects {expected}")]
    SourceCountMismatch { expected: usize, got: usize },
    #[error("action coordinate {index} = {value} outside [-1, 1]")]
    ActionOutOfRange { index: usize, value: f64 },
    #[error("cannot sample {requested} transitions from a buffer of {size}")]
    Underfilled { requested: usize, size: usize },
    #[error("capacity must be positive")]
    ZeroCapacity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// True terminal state; time-limit truncation is not terminal.
    pub done: bool,
    /// One head per source policy, evaluated at `state`.
    pub source_heads: Vec<GaussianHead>,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    n_sources: usize,
    storage: Vec<Transition>,
    write_cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, n_sources: usize) -> Result<Self, ReplayError> {
        if capacity == 0 {
            return Err(ReplayError::ZeroCapacity);
        }
        Ok(Self {
            capacity,
            n_sources,
            storage: Vec::with_capacity(capacity.min(1 << 16)),
            write_cursor: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn n_sources(&self) -> usize {
        self.n_sources
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    /// Next slot to be written; the oldest entry once the buffer is full.
    pub fn write_cursor(&self) -> usize {
        self.write_cursor
    }

    pub fn get(&self, index: usize) -> Option<&Transition> {
        self.storage.get(index)
    }

    pub fn push(&mut self, t: Transition) -> Result<(), ReplayError> {
        if t.source_heads.len() != self.n_sources {
            return Err(ReplayError::SourceCountMismatch {
                expected: self.n_sources,
                got: t.source_heads.len(),
            });
        }
        if let Some((index, &value)) = t
            .action
            .iter()
            .enumerate()
            .find(|(_, a)| !(a.abs() <= 1.0))
        {
            return Err(ReplayError::ActionOutOfRange { index, value });
        }
        if self.storage.len() < self.capacity {
            self.storage.push(t);
        } else {
            self.storage[self.write_cursor] = t;
        }
        self.write_cursor = (self.write_cursor + 1) % self.capacity;
        Ok(())
    }

    /// Uniform indices with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Vec<usize>, ReplayError> {
        if batch_size == 0 || batch_size > self.storage.len() {
            return Err(ReplayError::Underfilled {
                requested: batch_size,
                size: self.storage.len(),
            });
        }
        let n = self.storage.len();
        Ok((0..batch_size).map(|_| rng.gen_range(0..n)).collect())
    }

    pub fn sample<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Vec<&Transition>, ReplayError> {
        Ok(self
            .sample_indices(batch_size, rng)?
            .into_iter()
            .map(|i| &self.storage[i])
            .collect())
    }
}
