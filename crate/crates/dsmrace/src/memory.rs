//! Per-process private/public address spaces, per-cell clock storage, and
//! cell-level mutual-exclusion locks.
//!
//! Every addressable datum is one [`CellState`]: a scalar value, a general
//! clock `V`, a write clock `W` (public cells only — private memory is
//! single-owner, so one clock suffices), and a lock with a FIFO wait queue.
//! The locks model the mutual exclusion the network interface provides on
//! public memory areas. They serialize detector bookkeeping only: locking
//! deliberately does *not* merge clocks or create happens-before edges, or
//! every access would be ordered and no race could ever be observed.
//!
//! This is simulation state owned by a single-threaded event loop; the
//! modeled locks are not host-machine synchronization.

use crate::clock::VectorClock;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// The two halves of a process's address space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    Public,
    Private,
}

/// A global-address-space coordinate: which process maps the cell, which
/// half of its memory, and the offset within it.
///
/// Prints and parses as `P<k>.<pub|priv>[<offset>]`, e.g. `P1.pub[0]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Address {
    pub process: usize,
    pub space: Space,
    pub offset: usize,
}

impl Address {
    pub fn public(process: usize, offset: usize) -> Self {
        Address {
            process,
            space: Space::Public,
            offset,
        }
    }

    pub fn private(process: usize, offset: usize) -> Self {
        Address {
            process,
            space: Space::Private,
            offset,
        }
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let space = match self.space {
            Space::Public => "pub",
            Space::Private => "priv",
        };
        write!(f, "P{}.{}[{}]", self.process, space, self.offset)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("bad address {0:?}: expected P<k>.<pub|priv>[<offset>]")]
pub struct AddressParseError(String);

impl FromStr for Address {
    type Err = AddressParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || AddressParseError(s.to_string());
        let rest = s.strip_prefix('P').ok_or_else(err)?;
        let (proc_str, rest) = rest.split_once('.').ok_or_else(err)?;
        let (space_str, rest) = rest.split_once('[').ok_or_else(err)?;
        let offset_str = rest.strip_suffix(']').ok_or_else(err)?;
        let process = proc_str.parse().map_err(|_| err())?;
        let offset = offset_str.parse().map_err(|_| err())?;
        let space = match space_str {
            "pub" => Space::Public,
            "priv" => Space::Private,
            _ => return Err(err()),
        };
        Ok(Address {
            process,
            space,
            offset,
        })
    }
}

impl Serialize for Address {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Identity of one in-flight operation, used as the lock holder token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OpId {
    pub process: usize,
    pub seq: u64,
}

impl OpId {
    pub fn new(process: usize, seq: u64) -> Self {
        OpId { process, seq }
    }
}

/// One addressable datum with its clocks and lock state.
#[derive(Debug, Clone)]
pub struct CellState {
    pub value: i64,
    /// General clock: advanced by every access to the cell.
    pub v: VectorClock,
    /// Write clock: advanced only by writes. `None` for private cells.
    pub w: Option<VectorClock>,
    holder: Option<OpId>,
    queue: VecDeque<OpId>,
}

impl CellState {
    fn new(n: usize, space: Space, value: i64) -> Self {
        CellState {
            value,
            v: VectorClock::zero(n),
            w: match space {
                Space::Public => Some(VectorClock::zero(n)),
                Space::Private => None,
            },
            holder: None,
            queue: VecDeque::new(),
        }
    }

    pub fn locked(&self) -> bool {
        self.holder.is_some()
    }

    pub fn holder(&self) -> Option<OpId> {
        self.holder
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }
}

/// Outcome of a lock request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LockOutcome {
    Granted,
    Queued,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MemoryError {
    #[error("address {0} is not defined")]
    UndefinedAddress(Address),
    #[error("cell {0} is already defined")]
    DuplicateCell(Address),
    #[error("address {addr} names process {} but the system has {n} processes", addr.process)]
    ProcessOutOfRange { addr: Address, n: usize },
    #[error("operation {op:?} does not hold the lock on {addr}")]
    NotLockHolder { addr: Address, op: OpId },
    #[error("operation {op:?} already holds or awaits the lock on {addr}")]
    AlreadyRequested { addr: Address, op: OpId },
    #[error("clock regression on {0}: stored clocks may only grow")]
    ClockRegression(Address),
    #[error("write clock above general clock on {0}")]
    WriteClockAboveGeneral(Address),
    #[error("private cell {0} carries no write clock")]
    NoWriteClock(Address),
}

/// All cells of an `n`-process system, keyed by address.
#[derive(Debug, Clone)]
pub struct MemoryState {
    n: usize,
    cells: BTreeMap<Address, CellState>,
}

impl MemoryState {
    pub fn new(n: usize) -> Self {
        MemoryState {
            n,
            cells: BTreeMap::new(),
        }
    }

    pub fn process_count(&self) -> usize {
        self.n
    }

    /// Declares a cell before the scenario runs. Clocks start at all-zeros
    /// and the cell is unlocked.
    pub fn define_cell(&mut self, addr: Address, value: i64) -> Result<(), MemoryError> {
        if addr.process >= self.n {
            return Err(MemoryError::ProcessOutOfRange { addr, n: self.n });
        }
        if self.cells.contains_key(&addr) {
            return Err(MemoryError::DuplicateCell(addr));
        }
        self.cells
            .insert(addr, CellState::new(self.n, addr.space, value));
        Ok(())
    }

    pub fn is_defined(&self, addr: &Address) -> bool {
        self.cells.contains_key(addr)
    }

    pub fn cell(&self, addr: &Address) -> Result<&CellState, MemoryError> {
        self.cells
            .get(addr)
            .ok_or(MemoryError::UndefinedAddress(*addr))
    }

    fn cell_mut(&mut self, addr: &Address) -> Result<&mut CellState, MemoryError> {
        self.cells
            .get_mut(addr)
            .ok_or(MemoryError::UndefinedAddress(*addr))
    }

    /// Requests the cell lock. A free lock is granted immediately; a held
    /// lock appends the requester to the FIFO wait queue.
    pub fn lock(&mut self, addr: &Address, op: OpId) -> Result<LockOutcome, MemoryError> {
        let cell = self.cell_mut(addr)?;
        if cell.holder == Some(op) || cell.queue.contains(&op) {
            return Err(MemoryError::AlreadyRequested { addr: *addr, op });
        }
        match cell.holder {
            None => {
                cell.holder = Some(op);
                Ok(LockOutcome::Granted)
            }
            Some(_) => {
                cell.queue.push_back(op);
                Ok(LockOutcome::Queued)
            }
        }
    }

    /// Releases the lock and hands it to the head of the wait queue, if any.
    /// Returns the operation granted next.
    pub fn unlock(&mut self, addr: &Address, op: OpId) -> Result<Option<OpId>, MemoryError> {
        let cell = self.cell_mut(addr)?;
        if cell.holder != Some(op) {
            return Err(MemoryError::NotLockHolder { addr: *addr, op });
        }
        cell.holder = cell.queue.pop_front();
        Ok(cell.holder)
    }

    /// Reads the stored clocks under the lock. Private cells report their
    /// single clock as both `V` and `W`.
    pub fn read_clocks(
        &self,
        addr: &Address,
        op: OpId,
    ) -> Result<(VectorClock, VectorClock), MemoryError> {
        let cell = self.cell(addr)?;
        if cell.holder != Some(op) {
            return Err(MemoryError::NotLockHolder { addr: *addr, op });
        }
        let w = cell.w.clone().unwrap_or_else(|| cell.v.clone());
        Ok((cell.v.clone(), w))
    }

    /// Replaces the stored clocks (and optionally the value) atomically with
    /// respect to the lock. Clocks may only grow, and `W ≤ V` must hold.
    pub fn store(
        &mut self,
        addr: &Address,
        op: OpId,
        v: VectorClock,
        w: Option<VectorClock>,
        value: Option<i64>,
    ) -> Result<(), MemoryError> {
        let regression = MemoryError::ClockRegression(*addr);
        let cell = self.cell(addr)?;
        if cell.holder != Some(op) {
            return Err(MemoryError::NotLockHolder { addr: *addr, op });
        }
        if !v.dominates(&cell.v).map_err(|_| regression)? {
            return Err(MemoryError::ClockRegression(*addr));
        }
        match (&cell.w, &w) {
            (None, None) => {}
            (None, Some(_)) => return Err(MemoryError::NoWriteClock(*addr)),
            (Some(_), None) => return Err(MemoryError::NoWriteClock(*addr)),
            (Some(old), Some(new)) => {
                if !new
                    .dominates(old)
                    .map_err(|_| MemoryError::ClockRegression(*addr))?
                {
                    return Err(MemoryError::ClockRegression(*addr));
                }
                if !v
                    .dominates(new)
                    .map_err(|_| MemoryError::WriteClockAboveGeneral(*addr))?
                {
                    return Err(MemoryError::WriteClockAboveGeneral(*addr));
                }
            }
        }
        let cell = self.cell_mut(addr)?;
        cell.v = v;
        cell.w = w;
        if let Some(value) = value {
            cell.value = value;
        }
        Ok(())
    }

    pub fn value(&self, addr: &Address) -> Result<i64, MemoryError> {
        Ok(self.cell(addr)?.value)
    }

    /// Addresses of every defined cell, in deterministic order.
    pub fn addresses(&self) -> impl Iterator<Item = &Address> {
        self.cells.keys()
    }
}
