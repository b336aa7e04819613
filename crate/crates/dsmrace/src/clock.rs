//! Vector clocks: the partial order underlying all race detection.
//!
//! A clock is a length-`n` array of event counters, one entry per process of
//! the system. Component `i` counts events of process `i` that the clock's
//! holder knows about. The componentwise order characterizes causality
//! exactly: an event happened before another iff its clock is below the
//! other's, and two events are concurrent iff their clocks are incomparable.
//!
//! Clocks are immutable values; every operation returns a new clock. The
//! length is fixed at construction — clocks of different lengths belong to
//! different systems and comparing them is a programming error, not a race.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Structural misuse of clock operations. None of these are races; they
/// indicate a bug in the caller.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClockError {
    #[error("clock length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("process index {index} out of range for {len} processes")]
    IndexOutOfRange { index: usize, len: usize },
}

/// Outcome of comparing two clocks under the componentwise partial order.
///
/// `Before`/`After` are mutually inverse, `Equal` and `Concurrent` are
/// symmetric, and exactly one variant holds for any pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClockOrdering {
    /// Left is componentwise ≤ right and differs somewhere.
    Before,
    /// Right is componentwise ≤ left and differs somewhere.
    After,
    /// Identical entries.
    Equal,
    /// Incomparable: each side exceeds the other in some component.
    Concurrent,
}

impl ClockOrdering {
    /// True unless the clocks are incomparable. Equal clocks count as
    /// ordered: equality only arises through self-interaction, never between
    /// genuinely independent events.
    pub fn is_ordered(self) -> bool {
        !matches!(self, ClockOrdering::Concurrent)
    }
}

/// A length-`n` vector of per-process event counters.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VectorClock(Vec<u64>);

impl VectorClock {
    /// The all-zeros clock for a system of `n` processes.
    pub fn zero(n: usize) -> Self {
        VectorClock(vec![0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<u64> {
        self.0.get(i).copied()
    }

    pub fn entries(&self) -> &[u64] {
        &self.0
    }

    /// Compares under the standard vector-clock partial order: `Before` iff
    /// every component is ≤ and at least one is <. A strict-everywhere rule
    /// would make `[1,0] → [2,0]` incomparable and misorder ordinary
    /// same-process chains, so ≤-with-inequality is used throughout.
    pub fn compare(&self, other: &VectorClock) -> Result<ClockOrdering, ClockError> {
        if self.0.len() != other.0.len() {
            return Err(ClockError::LengthMismatch {
                left: self.0.len(),
                right: other.0.len(),
            });
        }
        let mut less = false;
        let mut greater = false;
        for (a, b) in self.0.iter().zip(other.0.iter()) {
            if a < b {
                less = true;
            } else if a > b {
                greater = true;
            }
        }
        Ok(match (less, greater) {
            (false, false) => ClockOrdering::Equal,
            (true, false) => ClockOrdering::Before,
            (false, true) => ClockOrdering::After,
            (true, true) => ClockOrdering::Concurrent,
        })
    }

    /// Componentwise maximum: the least upper bound of the two clocks.
    pub fn join(&self, other: &VectorClock) -> Result<VectorClock, ClockError> {
        if self.0.len() != other.0.len() {
            return Err(ClockError::LengthMismatch {
                left: self.0.len(),
                right: other.0.len(),
            });
        }
        Ok(VectorClock(
            self.0
                .iter()
                .zip(other.0.iter())
                .map(|(a, b)| *a.max(b))
                .collect(),
        ))
    }

    /// Returns a copy with component `i` bumped by one; everything else is
    /// untouched.
    pub fn incremented(&self, i: usize) -> Result<VectorClock, ClockError> {
        if i >= self.0.len() {
            return Err(ClockError::IndexOutOfRange {
                index: i,
                len: self.0.len(),
            });
        }
        let mut entries = self.0.clone();
        entries[i] += 1;
        Ok(VectorClock(entries))
    }

    /// `self` dominates `other` componentwise (i.e. `other` is Before or
    /// Equal). Convenience for monotonicity checks.
    pub fn dominates(&self, other: &VectorClock) -> Result<bool, ClockError> {
        Ok(matches!(
            self.compare(other)?,
            ClockOrdering::After | ClockOrdering::Equal
        ))
    }
}

impl From<Vec<u64>> for VectorClock {
    fn from(entries: Vec<u64>) -> Self {
        VectorClock(entries)
    }
}

impl fmt::Display for VectorClock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, "]")
    }
}
