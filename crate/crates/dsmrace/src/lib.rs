//! Deterministic simulator for distributed shared memory with one-sided
//! remote memory access, plus a dynamic race-condition detector built on
//! dual per-cell vector clocks.
//!
//! The model: each process owns a *private* address space (reachable only by
//! itself) and a *public* address space (reachable by every process, with no
//! notification to the owner). Two primitives move data:
//!
//! - `put` writes from an initiator-local cell into a public cell (one
//!   message),
//! - `get` reads a public cell into an initiator-private cell (request +
//!   reply messages).
//!
//! Every public cell carries a general-purpose clock `V` (advanced by every
//! access) and a write clock `W` (advanced only by writes). A put is checked
//! against `V` (a write conflicts with concurrent reads and writes); a get is
//! checked against `W` (a read conflicts only with concurrent writes), so
//! concurrent read-only traffic is never flagged. Races are *signaled*, never
//! fatal: execution and data movement are identical with detection on or off.
//!
//! The [`oracle`] module provides an independent brute-force happens-before
//! checker over finished traces; it is the ground truth the detector is
//! validated against in the acceptance suite.

pub mod clock;
pub mod corpus;
pub mod memory;
pub mod oracle;
pub mod rdma;
pub mod scenario;
pub mod sim;

pub use clock::{ClockError, ClockOrdering, VectorClock};
pub use memory::{Address, CellState, MemoryError, MemoryState, OpId, Space};
pub use rdma::{ConflictKind, Engine, EngineError, RaceReport};
pub use scenario::{load_scenario, parse_scenario, ScenarioFileError};
pub use sim::{
    run, run_configured, validate, Event, EventKind, RunOptions, Scenario, Schedule, SimError,
    Simulator, Statement, Trace,
};
