//! Fixed-lag history of node states.

use ndarray::{Array2, ArrayView2};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DelayError {
    #[error("state is {got:?}, buffer holds {expected:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("lag {lag} outside 0..={max}")]
    LagOutOfRange { lag: usize, max: usize },
}

/// Ring buffer of the last `max_lag + 1` pushed `n x d` states.
///
/// Reads further back than the number of pushes return `initial_fill`, which
/// models a constant initial history on `[-tau, 0]`.
#[derive(Debug, Clone)]
pub struct DelayBuffer {
    slots: Vec<Array2<f64>>,
    initial_fill: Array2<f64>,
    /// Slot that receives the next push.
    head: usize,
    pushes: u64,
}

impl DelayBuffer {
    pub fn new(max_lag: usize, initial_fill: Array2<f64>) -> Self {
        Self {
            slots: vec![initial_fill.clone(); max_lag + 1],
            initial_fill,
            head: 0,
            pushes: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    pub fn max_lag(&self) -> usize {
        self.slots.len() - 1
    }

    pub fn pushes(&self) -> u64 {
        self.pushes
    }

    pub fn dim(&self) -> (usize, usize) {
        self.initial_fill.dim()
    }

    pub fn push(&mut self, state: ArrayView2<'_, f64>) -> Result<(), DelayError> {
        if state.dim() != self.dim() {
            return Err(DelayError::DimensionMismatch {
                expected: self.dim(),
                got: state.dim(),
            });
        }
        self.slots[self.head].assign(&state);
        self.head = (self.head + 1) % self.slots.len();
        self.pushes += 1;
        Ok(())
    }

    /// Borrowed view of the state pushed `lag` pushes ago.
    pub fn view(&self, lag: usize) -> Result<ArrayView2<'_, f64>, DelayError> {
        if lag > self.max_lag() {
            return Err(DelayError::LagOutOfRange {
                lag,
                max: self.max_lag(),
            });
        }
        if (lag as u64) >= self.pushes {
            return Ok(self.initial_fill.view());
        }
        let cap = self.slots.len();
        let idx = (self.head + cap - 1 - lag) % cap;
        Ok(self.slots[idx].view())
    }

    /// Owned copy of the state pushed `lag` pushes ago.
    pub fn delayed(&self, lag: usize) -> Result<Array2<f64>, DelayError> {
        self.view(lag).map(|v| v.to_owned())
    }
}
