//! The one-sided put/get engine: clock propagation and the race check.
//!
//! A `put` copies an initiator-local cell into a public cell with a single
//! message; a `get` reads a public cell into an initiator-private cell with a
//! request and a reply. Both are one-sided: the process that maps the target
//! memory takes no part, and its process-local clock is never touched — only
//! the cell clocks move.
//!
//! Clock choreography, with `i` the initiator and `j` the owner of the
//! remote cell:
//!
//! - Starting any operation bumps the initiator's own component. If a put
//!   sources from the initiator's *public* memory, the source cell's clock is
//!   first merged into the initiator's (causality rides along with the data);
//!   a private source just snapshots the initiator's new clock.
//! - Arrival at a public cell merges the carried clock into the stored one
//!   and bumps the owner component: `inc(join(stored, carried), j)`. A put
//!   advances `V` and `W` to that value; a get advances only `V`.
//! - A get's reply merges the source cell's updated `V` back into the
//!   initiator: `inc(join(carried, V'), i)`.
//!
//! The race check runs against the clocks stored *before* the merge: a put's
//! carried clock against the cell's general clock `V` (a write conflicts with
//! concurrent reads and writes), a get's carried clock against the write
//! clock `W` (a read conflicts only with concurrent writes). An incomparable
//! pair yields one [`RaceReport`]; execution continues unchanged either way.

use crate::clock::{ClockError, ClockOrdering, VectorClock};
use crate::memory::{Address, LockOutcome, MemoryError, MemoryState, OpId, Space};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Event ids index into a trace; the engine also uses them to tag reports
/// with the operation ordinal when driven directly.
pub type EventId = u64;

/// Whether an access reads or writes its cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessKind {
    Read,
    Write,
}

/// Which clock pair the offending comparison ran against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConflictKind {
    /// A write found the cell's general clock incomparable: it races some
    /// earlier read or write.
    #[serde(rename = "write-vs-access")]
    WriteVsAccess,
    /// A read found the cell's write clock incomparable: it races some
    /// earlier write.
    #[serde(rename = "read-vs-write")]
    ReadVsWrite,
}

impl fmt::Display for ConflictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConflictKind::WriteVsAccess => write!(f, "write-vs-access"),
            ConflictKind::ReadVsWrite => write!(f, "read-vs-write"),
        }
    }
}

/// One signaled race: the offending access, the cell, and the two
/// incomparable clocks. Races are reports, never errors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaceReport {
    pub cell: Address,
    pub event: EventId,
    pub incoming_clock: VectorClock,
    pub stored_clock: VectorClock,
    pub kind_conflict: ConflictKind,
}

impl fmt::Display for RaceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "race: cell {} event {} incoming {} stored {} {}",
            self.cell, self.event, self.incoming_clock, self.stored_clock, self.kind_conflict
        )
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Clock(#[from] ClockError),
    #[error("process index {0} out of range")]
    BadProcess(usize),
    #[error("put source {src} is not local to initiator P{initiator}")]
    ForeignPutSource { initiator: usize, src: Address },
    #[error("put destination {0} is not public")]
    PutIntoPrivate(Address),
    #[error("put source and destination are the same cell {0}")]
    SelfCopy(Address),
    #[error("get source {0} is not public")]
    GetFromPrivate(Address),
    #[error("get destination {dst} is not private to initiator P{initiator}")]
    ForeignGetDestination { initiator: usize, dst: Address },
    #[error("cell {0} is locked by another in-flight operation")]
    Contended(Address),
}

/// Clock movement on one cell, for trace records.
#[derive(Debug, Clone)]
pub struct CellDelta {
    pub addr: Address,
    pub v_pre: VectorClock,
    pub v_post: VectorClock,
    pub w_pre: Option<VectorClock>,
    pub w_post: Option<VectorClock>,
}

/// Result of a put's send phase: the payload now in flight and the source
/// cell's clock movement.
#[derive(Debug, Clone)]
pub struct SendOutcome {
    pub payload: i64,
    pub src_delta: CellDelta,
}

/// Result of an arrival phase: the destination cell's clock movement and an
/// optional race (incoming clock vs stored clock).
#[derive(Debug, Clone)]
pub struct ApplyOutcome {
    pub delta: CellDelta,
    pub race: Option<(VectorClock, VectorClock)>,
}

/// Result of a get's reply phase.
#[derive(Debug, Clone)]
pub struct ReplyOutcome {
    pub value: i64,
    pub src_delta: CellDelta,
    pub race: Option<(VectorClock, VectorClock)>,
}

fn concurrent(a: &VectorClock, b: &VectorClock) -> Result<bool, ClockError> {
    Ok(a.compare(b)? == ClockOrdering::Concurrent)
}

/// Send phase of a put. Caller must already hold the source lock as `op`.
/// Bumps the initiator clock (merging the source cell's clock first when the
/// source is public) and records the local access on the source cell.
pub fn put_send(
    mem: &mut MemoryState,
    clocks: &mut [VectorClock],
    initiator: usize,
    src: &Address,
    op: OpId,
) -> Result<SendOutcome, EngineError> {
    let (v_pre, _) = mem.read_clocks(src, op)?;
    let w_pre = mem.cell(src)?.w.clone();
    let payload = mem.value(src)?;
    let clock = clocks
        .get(initiator)
        .ok_or(EngineError::BadProcess(initiator))?;
    let bumped = match src.space {
        Space::Public => clock.join(&v_pre)?.incremented(initiator)?,
        Space::Private => clock.incremented(initiator)?,
    };
    let v_post = match src.space {
        // Read access recorded on the cell so later writes see it.
        Space::Public => v_pre.join(&bumped)?,
        Space::Private => bumped.clone(),
    };
    mem.store(src, op, v_post.clone(), w_pre.clone(), None)?;
    clocks[initiator] = bumped;
    Ok(SendOutcome {
        payload,
        src_delta: CellDelta {
            addr: *src,
            v_pre,
            v_post,
            w_pre: w_pre.clone(),
            w_post: w_pre,
        },
    })
}

/// Arrival phase of a put. Caller must hold the destination lock as `op`.
/// Checks the carried clock against the stored general clock, then advances
/// `V` and `W` to `inc(join(stored, carried), owner)` and writes the value.
pub fn put_apply(
    mem: &mut MemoryState,
    carried: &VectorClock,
    dst: &Address,
    payload: i64,
    detect: bool,
    op: OpId,
) -> Result<ApplyOutcome, EngineError> {
    let (v_pre, _) = mem.read_clocks(dst, op)?;
    let w_pre = mem.cell(dst)?.w.clone();
    let race = if detect && concurrent(carried, &v_pre)? {
        Some((carried.clone(), v_pre.clone()))
    } else {
        None
    };
    let merged = v_pre.join(carried)?.incremented(dst.process)?;
    mem.store(dst, op, merged.clone(), Some(merged.clone()), Some(payload))?;
    Ok(ApplyOutcome {
        delta: CellDelta {
            addr: *dst,
            v_pre,
            v_post: merged.clone(),
            w_pre,
            w_post: Some(merged),
        },
        race,
    })
}

/// Bumps the initiator clock for a get request (or a purely local compute
/// step). The request carries the bumped clock to the source cell.
pub fn local_tick(
    clocks: &mut [VectorClock],
    initiator: usize,
) -> Result<VectorClock, EngineError> {
    let clock = clocks
        .get(initiator)
        .ok_or(EngineError::BadProcess(initiator))?;
    let bumped = clock.incremented(initiator)?;
    clocks[initiator] = bumped.clone();
    Ok(bumped)
}

/// Reply phase of a get. Caller must hold both locks as `op`. Checks the
/// request clock against the stored write clock, advances the source cell's
/// `V` (leaving `W` alone), merges the updated `V` back into the initiator,
/// and snapshots the initiator's new clock onto the private destination.
pub fn get_reply(
    mem: &mut MemoryState,
    clocks: &mut [VectorClock],
    initiator: usize,
    src: &Address,
    dst: &Address,
    detect: bool,
    op: OpId,
) -> Result<ReplyOutcome, EngineError> {
    let (v_pre, w_pre) = mem.read_clocks(src, op)?;
    let request = clocks
        .get(initiator)
        .ok_or(EngineError::BadProcess(initiator))?
        .clone();
    let race = if detect && concurrent(&request, &w_pre)? {
        Some((request.clone(), w_pre.clone()))
    } else {
        None
    };
    let v_post = v_pre.join(&request)?.incremented(src.process)?;
    let w_stored = mem.cell(src)?.w.clone();
    mem.store(src, op, v_post.clone(), w_stored.clone(), None)?;
    let value = mem.value(src)?;
    let absorbed = request.join(&v_post)?.incremented(initiator)?;
    clocks[initiator] = absorbed.clone();
    mem.store(dst, op, absorbed, None, Some(value))?;
    Ok(ReplyOutcome {
        value,
        src_delta: CellDelta {
            addr: *src,
            v_pre,
            v_post,
            w_pre: w_stored.clone(),
            w_post: w_stored,
        },
        race,
    })
}

/// Direct-call engine: runs whole operations to completion with no
/// scheduler in between. Lock contention cannot arise here — calls are
/// sequential — so a busy lock is reported as an error rather than queued.
///
/// The interleaving-aware path lives in [`crate::sim`], which drives the
/// same phase functions above one scheduler step at a time.
#[derive(Debug)]
pub struct Engine {
    mem: MemoryState,
    clocks: Vec<VectorClock>,
    detect: bool,
    next_seq: u64,
}

impl Engine {
    pub fn new(n: usize) -> Self {
        Engine {
            mem: MemoryState::new(n),
            clocks: vec![VectorClock::zero(n); n],
            detect: true,
            next_seq: 0,
        }
    }

    pub fn with_detection(n: usize, detect: bool) -> Self {
        let mut engine = Engine::new(n);
        engine.detect = detect;
        engine
    }

    pub fn define_cell(&mut self, addr: Address, value: i64) -> Result<(), EngineError> {
        Ok(self.mem.define_cell(addr, value)?)
    }

    pub fn memory(&self) -> &MemoryState {
        &self.mem
    }

    pub fn clock(&self, process: usize) -> &VectorClock {
        &self.clocks[process]
    }

    fn acquire(&mut self, addr: &Address, op: OpId) -> Result<(), EngineError> {
        match self.mem.lock(addr, op)? {
            LockOutcome::Granted => Ok(()),
            LockOutcome::Queued => Err(EngineError::Contended(*addr)),
        }
    }

    fn next_op(&mut self, initiator: usize) -> OpId {
        let op = OpId::new(initiator, self.next_seq);
        self.next_seq += 1;
        op
    }

    fn check_put(&self, initiator: usize, src: &Address, dst: &Address) -> Result<(), EngineError> {
        if initiator >= self.clocks.len() {
            return Err(EngineError::BadProcess(initiator));
        }
        if src.process != initiator {
            return Err(EngineError::ForeignPutSource {
                initiator,
                src: *src,
            });
        }
        if dst.space != Space::Public {
            return Err(EngineError::PutIntoPrivate(*dst));
        }
        if src == dst {
            return Err(EngineError::SelfCopy(*src));
        }
        self.mem.cell(src)?;
        self.mem.cell(dst)?;
        Ok(())
    }

    fn check_get(&self, initiator: usize, src: &Address, dst: &Address) -> Result<(), EngineError> {
        if initiator >= self.clocks.len() {
            return Err(EngineError::BadProcess(initiator));
        }
        if src.space != Space::Public {
            return Err(EngineError::GetFromPrivate(*src));
        }
        if dst.space != Space::Private || dst.process != initiator {
            return Err(EngineError::ForeignGetDestination {
                initiator,
                dst: *dst,
            });
        }
        self.mem.cell(src)?;
        self.mem.cell(dst)?;
        Ok(())
    }

    /// One complete put. Returns the races signaled by the write check.
    pub fn put(
        &mut self,
        initiator: usize,
        src: &Address,
        dst: &Address,
    ) -> Result<Vec<RaceReport>, EngineError> {
        self.check_put(initiator, src, dst)?;
        let op = self.next_op(initiator);
        self.acquire(src, op)?;
        let sent = match put_send(&mut self.mem, &mut self.clocks, initiator, src, op) {
            Ok(sent) => sent,
            Err(e) => {
                let _ = self.mem.unlock(src, op);
                return Err(e);
            }
        };
        self.acquire(dst, op)?;
        let carried = self.clocks[initiator].clone();
        let applied = put_apply(&mut self.mem, &carried, dst, sent.payload, self.detect, op)?;
        self.mem.unlock(dst, op)?;
        self.mem.unlock(src, op)?;
        Ok(applied
            .race
            .map(|(incoming, stored)| RaceReport {
                cell: *dst,
                event: op.seq,
                incoming_clock: incoming,
                stored_clock: stored,
                kind_conflict: ConflictKind::WriteVsAccess,
            })
            .into_iter()
            .collect())
    }

    /// One complete get. Returns the fetched value and any signaled races.
    pub fn get(
        &mut self,
        initiator: usize,
        src: &Address,
        dst: &Address,
    ) -> Result<(i64, Vec<RaceReport>), EngineError> {
        self.check_get(initiator, src, dst)?;
        let op = self.next_op(initiator);
        self.acquire(dst, op)?;
        self.acquire(src, op)?;
        local_tick(&mut self.clocks, initiator)?;
        let reply = get_reply(
            &mut self.mem,
            &mut self.clocks,
            initiator,
            src,
            dst,
            self.detect,
            op,
        )?;
        self.mem.unlock(src, op)?;
        self.mem.unlock(dst, op)?;
        let races = reply
            .race
            .map(|(incoming, stored)| RaceReport {
                cell: *src,
                event: op.seq,
                incoming_clock: incoming,
                stored_clock: stored,
                kind_conflict: ConflictKind::ReadVsWrite,
            })
            .into_iter()
            .collect();
        Ok((reply.value, races))
    }

    /// A purely local event: advances the initiator's own clock component.
    pub fn compute(&mut self, initiator: usize) -> Result<(), EngineError> {
        local_tick(&mut self.clocks, initiator)?;
        self.next_seq += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vc(entries: &[u64]) -> VectorClock {
        VectorClock::from(entries.to_vec())
    }

    /// Two unrelated writers hitting the same public cell: the first arrival
    /// merges cleanly, the second is incomparable and signals.
    #[test]
    fn two_writer_race_detected_on_second_arrival() {
        let mut engine = Engine::new(3);
        engine.define_cell(Address::public(1, 0), 0).unwrap();
        engine.define_cell(Address::private(0, 0), 7).unwrap();
        engine.define_cell(Address::private(2, 0), 9).unwrap();

        let races = engine
            .put(0, &Address::private(0, 0), &Address::public(1, 0))
            .unwrap();
        assert!(races.is_empty());
        assert_eq!(engine.clock(0), &vc(&[1, 0, 0]));
        let cell = engine.memory().cell(&Address::public(1, 0)).unwrap();
        assert_eq!(cell.v, vc(&[1, 1, 0]));
        assert_eq!(cell.w, Some(vc(&[1, 1, 0])));
        assert_eq!(cell.value, 7);

        let races = engine
            .put(2, &Address::private(2, 0), &Address::public(1, 0))
            .unwrap();
        assert_eq!(races.len(), 1);
        assert_eq!(races[0].incoming_clock, vc(&[0, 0, 1]));
        assert_eq!(races[0].stored_clock, vc(&[1, 1, 0]));
        assert_eq!(races[0].kind_conflict, ConflictKind::WriteVsAccess);
        assert_eq!(races[0].cell, Address::public(1, 0));
        // Detection never alters data movement.
        assert_eq!(engine.memory().value(&Address::public(1, 0)).unwrap(), 9);
    }

    #[test]
    fn put_to_fresh_cell_never_races() {
        let mut engine = Engine::new(4);
        engine.define_cell(Address::public(3, 5), 0).unwrap();
        engine.define_cell(Address::private(1, 0), 1).unwrap();
        let races = engine
            .put(1, &Address::private(1, 0), &Address::public(3, 5))
            .unwrap();
        assert!(races.is_empty());
    }

    /// A get merges the source cell's clock back into the initiator, so
    /// causality flows with the data.
    #[test]
    fn get_chain_numbers() {
        let mut engine = Engine::new(3);
        engine.define_cell(Address::public(0, 0), 5).unwrap();
        engine.define_cell(Address::private(1, 0), 0).unwrap();

        let (value, races) = engine
            .get(1, &Address::public(0, 0), &Address::private(1, 0))
            .unwrap();
        assert_eq!(value, 5);
        assert!(races.is_empty());
        assert_eq!(engine.clock(1), &vc(&[1, 2, 0]));
        let cell = engine.memory().cell(&Address::public(0, 0)).unwrap();
        assert_eq!(cell.v, vc(&[1, 1, 0]));
        assert_eq!(cell.w, Some(vc(&[0, 0, 0])));
        let private = engine.memory().cell(&Address::private(1, 0)).unwrap();
        assert_eq!(private.v, vc(&[1, 2, 0]));
        assert_eq!(private.value, 5);
    }

    /// Read-only traffic never advances W and never signals, however many
    /// readers overlap.
    #[test]
    fn concurrent_gets_leave_write_clock_untouched() {
        let mut engine = Engine::new(3);
        engine.define_cell(Address::public(1, 0), 65).unwrap();
        engine.define_cell(Address::private(0, 0), 0).unwrap();
        engine.define_cell(Address::private(2, 0), 0).unwrap();

        let (a, races0) = engine
            .get(0, &Address::public(1, 0), &Address::private(0, 0))
            .unwrap();
        let (b, races2) = engine
            .get(2, &Address::public(1, 0), &Address::private(2, 0))
            .unwrap();
        assert_eq!((a, b), (65, 65));
        assert!(races0.is_empty() && races2.is_empty());
        let cell = engine.memory().cell(&Address::public(1, 0)).unwrap();
        assert_eq!(cell.w, Some(vc(&[0, 0, 0])));
        assert_eq!(cell.v, vc(&[1, 2, 1]));
    }

    /// A put never touches the destination owner's process clock.
    #[test]
    fn put_is_one_sided() {
        let mut engine = Engine::new(3);
        engine.define_cell(Address::public(1, 0), 0).unwrap();
        engine.define_cell(Address::private(0, 0), 3).unwrap();
        engine
            .put(0, &Address::private(0, 0), &Address::public(1, 0))
            .unwrap();
        assert_eq!(engine.clock(1), &vc(&[0, 0, 0]));
    }

    /// Relaying from one's own public cell picks up the clock a remote
    /// writer left there.
    #[test]
    fn public_source_put_absorbs_cell_clock() {
        let mut engine = Engine::new(4);
        engine.define_cell(Address::public(2, 0), 0).unwrap();
        engine.define_cell(Address::public(3, 0), 0).unwrap();
        engine.define_cell(Address::private(0, 0), 1).unwrap();

        engine
            .put(0, &Address::private(0, 0), &Address::public(2, 0))
            .unwrap();
        let races = engine
            .put(2, &Address::public(2, 0), &Address::public(3, 0))
            .unwrap();
        assert!(races.is_empty());
        assert_eq!(engine.clock(2), &vc(&[1, 0, 2, 0]));
        let dst = engine.memory().cell(&Address::public(3, 0)).unwrap();
        assert_eq!(dst.v, vc(&[1, 0, 2, 1]));
        assert_eq!(dst.value, 1);
    }

    /// Self-interaction produces equal clocks, which are ordered, not racy.
    #[test]
    fn local_double_put_is_not_a_race() {
        let mut engine = Engine::new(3);
        engine.define_cell(Address::public(1, 0), 0).unwrap();
        engine.define_cell(Address::private(1, 0), 4).unwrap();
        engine.define_cell(Address::private(1, 1), 5).unwrap();
        let r1 = engine
            .put(1, &Address::private(1, 0), &Address::public(1, 0))
            .unwrap();
        let r2 = engine
            .put(1, &Address::private(1, 1), &Address::public(1, 0))
            .unwrap();
        assert!(r1.is_empty());
        assert!(r2.is_empty());
        assert_eq!(engine.memory().value(&Address::public(1, 0)).unwrap(), 5);
    }

    #[test]
    fn compute_bumps_own_component_only() {
        let mut engine = Engine::new(3);
        engine.compute(1).unwrap();
        assert_eq!(engine.clock(1), &vc(&[0, 1, 0]));
        engine.compute(1).unwrap();
        engine.compute(1).unwrap();
        assert_eq!(engine.clock(1), &vc(&[0, 3, 0]));
        assert_eq!(engine.clock(0), &vc(&[0, 0, 0]));
    }

    #[test]
    fn ownership_violations_rejected() {
        let mut engine = Engine::new(3);
        engine.define_cell(Address::public(1, 0), 0).unwrap();
        engine.define_cell(Address::private(0, 0), 0).unwrap();
        engine.define_cell(Address::private(2, 0), 0).unwrap();
        assert!(matches!(
            engine.put(0, &Address::private(2, 0), &Address::public(1, 0)),
            Err(EngineError::ForeignPutSource { .. })
        ));
        assert!(matches!(
            engine.put(0, &Address::private(0, 0), &Address::private(2, 0)),
            Err(EngineError::PutIntoPrivate(_))
        ));
        assert!(matches!(
            engine.get(0, &Address::private(2, 0), &Address::private(0, 0)),
            Err(EngineError::GetFromPrivate(_))
        ));
        assert!(matches!(
            engine.get(0, &Address::public(1, 0), &Address::private(2, 0)),
            Err(EngineError::ForeignGetDestination { .. })
        ));
        assert!(matches!(
            engine.put(0, &Address::private(0, 0), &Address::public(1, 9)),
            Err(EngineError::Memory(MemoryError::UndefinedAddress(_)))
        ));
    }

    /// With detection off the same data moves and nothing is reported.
    #[test]
    fn detection_off_changes_reports_not_values() {
        let mut engine = Engine::with_detection(3, false);
        engine.define_cell(Address::public(1, 0), 0).unwrap();
        engine.define_cell(Address::private(0, 0), 7).unwrap();
        engine.define_cell(Address::private(2, 0), 9).unwrap();
        let r1 = engine
            .put(0, &Address::private(0, 0), &Address::public(1, 0))
            .unwrap();
        let r2 = engine
            .put(2, &Address::private(2, 0), &Address::public(1, 0))
            .unwrap();
        assert!(r1.is_empty() && r2.is_empty());
        assert_eq!(engine.memory().value(&Address::public(1, 0)).unwrap(), 9);
    }
}
