//! Deterministic scheduler: executes scenario programs under a chosen
//! interleaving and emits the canonical event trace.
//!
//! Each program statement expands into scheduler steps: a put into a send
//! and an apply, a get into a request and a reply, a compute into a single
//! step. Both operations block their initiator until the remote side
//! completes, so a process never has two messages in flight. An operation
//! that hits a held lock emits a `lock-wait` event, parks in the cell's FIFO
//! queue, and resumes (after a `lock-grant`) once the holder releases —
//! which is how a put targeting a cell under an in-flight get gets delayed
//! past the get's reply.
//!
//! Schedules are either explicit (an ordered list of process indices, one
//! per step) or seeded. Seeded schedules draw uniformly among processes with
//! runnable work from a ChaCha8 stream, so a seed reproduces the exact
//! interleaving anywhere. Identical scenario and schedule yield a
//! byte-identical trace.

use crate::clock::VectorClock;
use crate::memory::{Address, LockOutcome, MemoryError, MemoryState, OpId, Space};
use crate::rdma::{self, CellDelta, ConflictKind, EngineError, EventId, RaceReport};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use thiserror::Error;

/// One program statement. Addresses are global-address-space coordinates;
/// validation pins down ownership before anything runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Statement {
    Put { src: Address, dst: Address },
    Get { src: Address, dst: Address },
    Compute,
}

/// How the scheduler picks the next process.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Schedule {
    /// One entry per scheduler step.
    Explicit(Vec<usize>),
    /// Uniform draws among runnable processes from a seeded ChaCha8 stream.
    Seeded(u64),
}

/// A complete executable description: process count, declared cells with
/// initial values, one program per process, and the schedule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub processes: usize,
    pub cells: Vec<(Address, i64)>,
    pub programs: Vec<Vec<Statement>>,
    pub schedule: Schedule,
}

impl Scenario {
    pub fn statement_count(&self) -> usize {
        self.programs.iter().map(|p| p.len()).sum()
    }

    /// SHA-256 over the canonical JSON encoding, for trace headers.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("scenario serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// A scenario defect found before execution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation(pub String);

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Checks address declarations, ownership rules, and schedule
/// well-formedness. Returns every violation found; an empty list means the
/// scenario may run.
pub fn validate(scenario: &Scenario) -> Vec<Violation> {
    let mut violations = Vec::new();
    let mut push = |msg: String| violations.push(Violation(msg));
    let n = scenario.processes;
    if n == 0 {
        push("scenario declares zero processes".into());
    }
    let mut defined = std::collections::BTreeSet::new();
    for (addr, _) in &scenario.cells {
        if addr.process >= n {
            push(format!("cell {addr} names a process outside 0..{n}"));
        }
        if !defined.insert(*addr) {
            push(format!("cell {addr} is defined twice"));
        }
    }
    if scenario.programs.len() != n {
        push(format!(
            "expected {n} programs, found {}",
            scenario.programs.len()
        ));
    }
    for (p, program) in scenario.programs.iter().enumerate() {
        for (idx, stmt) in program.iter().enumerate() {
            let at = format!("P{p} statement {idx}");
            match stmt {
                Statement::Put { src, dst } => {
                    if src.process != p {
                        push(format!("{at}: put source {src} is not local to P{p}"));
                    }
                    if dst.space != Space::Public {
                        push(format!("{at}: put destination {dst} is not public"));
                    }
                    if src == dst {
                        push(format!("{at}: put source and destination are both {src}"));
                    }
                    for addr in [src, dst] {
                        if !defined.contains(addr) {
                            push(format!("{at}: address {addr} is not declared"));
                        }
                    }
                }
                Statement::Get { src, dst } => {
                    if src.space != Space::Public {
                        push(format!("{at}: get source {src} is not public"));
                    }
                    if dst.space != Space::Private || dst.process != p {
                        push(format!(
                            "{at}: get destination {dst} is not private to P{p}"
                        ));
                    }
                    for addr in [src, dst] {
                        if !defined.contains(addr) {
                            push(format!("{at}: address {addr} is not declared"));
                        }
                    }
                }
                Statement::Compute => {}
            }
        }
    }
    if let Schedule::Explicit(picks) = &scenario.schedule {
        for pick in picks {
            if *pick >= n {
                push(format!("schedule picks process {pick}, outside 0..{n}"));
                break;
            }
        }
        if picks.len() < scenario.statement_count() {
            push(format!(
                "schedule has {} entries for {} statements; every statement needs at least one step",
                picks.len(),
                scenario.statement_count()
            ));
        }
    }
    violations
}

/// Kind tag of one trace event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    #[serde(rename = "put-send")]
    PutSend,
    #[serde(rename = "put-apply")]
    PutApply,
    #[serde(rename = "get-request")]
    GetRequest,
    #[serde(rename = "get-reply")]
    GetReply,
    #[serde(rename = "compute")]
    Compute,
    #[serde(rename = "lock-grant")]
    LockGrant,
    #[serde(rename = "lock-wait")]
    LockWait,
    #[serde(rename = "unlock")]
    Unlock,
}

/// One executed simulation step, with the initiator clock around it and the
/// touched cell's clocks where applicable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub id: EventId,
    pub kind: EventKind,
    pub process: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub addr: Option<Address>,
    pub clock_pre: VectorClock,
    pub clock_post: VectorClock,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cell_v_pre: Option<VectorClock>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cell_v_post: Option<VectorClock>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cell_w_pre: Option<VectorClock>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cell_w_post: Option<VectorClock>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub value: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub race: Option<RaceReport>,
}

/// The ordered event list of one run, plus the collected race reports and
/// the schedule picks that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub scenario_hash: String,
    pub processes: usize,
    pub schedule: Vec<usize>,
    pub events: Vec<Event>,
    pub races: Vec<RaceReport>,
}

impl Trace {
    /// Cells that carry at least one signaled race.
    pub fn racy_cells(&self) -> std::collections::BTreeSet<Address> {
        self.races.iter().map(|r| r.cell).collect()
    }

    /// The observable data movement: every applied write and delivered read
    /// value, in trace order. Identical with detection on or off.
    pub fn value_movements(&self) -> Vec<(EventKind, Address, i64)> {
        self.events
            .iter()
            .filter_map(|e| match (e.kind, e.addr, e.value) {
                (EventKind::PutApply, Some(addr), Some(v)) => Some((e.kind, addr, v)),
                (EventKind::GetReply, Some(addr), Some(v)) => Some((e.kind, addr, v)),
                _ => None,
            })
            .collect()
    }

    /// Serializes as line-delimited JSON: one header line, then one event
    /// per line. Stable field order; byte-identical for identical runs.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let header = serde_json::json!({
            "scenario_hash": self.scenario_hash,
            "processes": self.processes,
            "schedule": self.schedule,
            "events": self.events.len(),
            "races": self.races.len(),
        });
        out.push_str(&header.to_string());
        out.push('\n');
        for event in &self.events {
            out.push_str(&serde_json::to_string(event).expect("event serializes"));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("schedule step {step}: process {process} has nothing runnable")]
    NothingRunnable { step: usize, process: usize },
    #[error("schedule exhausted after {steps} steps with work remaining")]
    ScheduleExhausted { steps: usize },
    #[error("schedule has {unused} unused entries after all programs finished")]
    ScheduleTooLong { unused: usize },
    #[error("deadlock: every unfinished process is parked on a lock")]
    Deadlock,
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

/// Knobs for a run. `detect` toggles the race checks; nothing else changes.
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub detect: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { detect: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    NotTried,
    Waiting,
    Held,
}

#[derive(Debug, Clone)]
enum Phase {
    Idle,
    PutSend {
        src: Address,
        dst: Address,
        src_lock: Stage,
    },
    PutApply {
        src: Address,
        dst: Address,
        payload: i64,
        dst_lock: Stage,
    },
    GetReply {
        src: Address,
        dst: Address,
        src_lock: Stage,
    },
}

#[derive(Debug)]
struct ProcRuntime {
    program: Vec<Statement>,
    pc: usize,
    phase: Phase,
}

impl ProcRuntime {
    fn finished(&self) -> bool {
        matches!(self.phase, Phase::Idle) && self.pc >= self.program.len()
    }

    fn runnable(&self) -> bool {
        match &self.phase {
            Phase::Idle => self.pc < self.program.len(),
            Phase::PutSend { src_lock, .. } => *src_lock != Stage::Waiting,
            Phase::PutApply { dst_lock, .. } => *dst_lock != Stage::Waiting,
            Phase::GetReply { src_lock, .. } => *src_lock != Stage::Waiting,
        }
    }
}

/// Drives one scenario one scheduler step at a time. [`run`] folds `step`
/// over the scenario's schedule; tests can drive it manually.
pub struct Simulator {
    mem: MemoryState,
    clocks: Vec<VectorClock>,
    procs: Vec<ProcRuntime>,
    events: Vec<Event>,
    races: Vec<RaceReport>,
    picks: Vec<usize>,
    detect: bool,
    steps: usize,
}

impl Simulator {
    /// Validates and loads the scenario. Cell definitions happen here, before
    /// the first step.
    pub fn new(scenario: &Scenario, options: RunOptions) -> Result<Self, SimError> {
        let violations = validate(scenario);
        if !violations.is_empty() {
            let joined = violations
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("; ");
            return Err(SimError::Invalid(joined));
        }
        let mut mem = MemoryState::new(scenario.processes);
        for (addr, value) in &scenario.cells {
            mem.define_cell(*addr, *value)?;
        }
        Ok(Simulator {
            mem,
            clocks: vec![VectorClock::zero(scenario.processes); scenario.processes],
            procs: scenario
                .programs
                .iter()
                .map(|p| ProcRuntime {
                    program: p.clone(),
                    pc: 0,
                    phase: Phase::Idle,
                })
                .collect(),
            events: Vec::new(),
            races: Vec::new(),
            picks: Vec::new(),
            detect: options.detect,
            steps: 0,
        })
    }

    pub fn finished(&self) -> bool {
        self.procs.iter().all(ProcRuntime::finished)
    }

    pub fn runnable(&self, process: usize) -> bool {
        self.procs.get(process).is_some_and(ProcRuntime::runnable)
    }

    pub fn memory(&self) -> &MemoryState {
        &self.mem
    }

    pub fn clock(&self, process: usize) -> &VectorClock {
        &self.clocks[process]
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    fn op_id(&self, process: usize) -> OpId {
        OpId::new(process, self.procs[process].pc as u64)
    }

    #[allow(clippy::too_many_arguments)]
    fn push_event(
        &mut self,
        kind: EventKind,
        process: usize,
        addr: Option<Address>,
        clock_pre: VectorClock,
        clock_post: VectorClock,
        delta: Option<&CellDelta>,
        value: Option<i64>,
        race: Option<RaceReport>,
    ) -> EventId {
        let id = self.events.len() as EventId;
        if let Some(report) = &race {
            self.races.push(report.clone());
        }
        self.events.push(Event {
            id,
            kind,
            process,
            addr,
            clock_pre,
            clock_post,
            cell_v_pre: delta.map(|d| d.v_pre.clone()),
            cell_v_post: delta.map(|d| d.v_post.clone()),
            cell_w_pre: delta.and_then(|d| d.w_pre.clone()),
            cell_w_post: delta.and_then(|d| d.w_post.clone()),
            value,
            race,
        });
        id
    }

    /// Tries to take `addr` for `op`; on contention emits a lock-wait event
    /// and reports `false` so the caller parks.
    fn acquire_or_park(
        &mut self,
        addr: &Address,
        op: OpId,
        process: usize,
    ) -> Result<bool, SimError> {
        match self.mem.lock(addr, op)? {
            LockOutcome::Granted => Ok(true),
            LockOutcome::Queued => {
                let clock = self.clocks[process].clone();
                self.push_event(
                    EventKind::LockWait,
                    process,
                    Some(*addr),
                    clock.clone(),
                    clock,
                    None,
                    None,
                    None,
                );
                Ok(false)
            }
        }
    }

    /// Releases `addr` and, if a parked operation was next in the FIFO,
    /// emits its lock-grant and marks its stage held.
    fn release(&mut self, addr: &Address, op: OpId) -> Result<(), SimError> {
        let granted = self.mem.unlock(addr, op)?;
        if let Some(next) = granted {
            let clock = self.clocks[next.process].clone();
            self.push_event(
                EventKind::LockGrant,
                next.process,
                Some(*addr),
                clock.clone(),
                clock,
                None,
                None,
                None,
            );
            match &mut self.procs[next.process].phase {
                Phase::PutSend { src_lock, .. } => *src_lock = Stage::Held,
                Phase::PutApply { dst_lock, .. } => *dst_lock = Stage::Held,
                Phase::GetReply { src_lock, .. } => *src_lock = Stage::Held,
                Phase::Idle => unreachable!("granted lock to an idle process"),
            }
        }
        Ok(())
    }

    /// Advances process `k` by one scheduler step. Returns the range of
    /// trace events the step appended.
    pub fn step(&mut self, k: usize) -> Result<std::ops::Range<usize>, SimError> {
        let start = self.events.len();
        if k >= self.procs.len() || !self.procs[k].runnable() {
            return Err(SimError::NothingRunnable {
                step: self.steps,
                process: k,
            });
        }
        self.steps += 1;
        self.picks.push(k);
        let phase = self.procs[k].phase.clone();
        match phase {
            Phase::Idle => match self.procs[k].program[self.procs[k].pc].clone() {
                Statement::Compute => {
                    let pre = self.clocks[k].clone();
                    let post = rdma::local_tick(&mut self.clocks, k)?;
                    self.push_event(EventKind::Compute, k, None, pre, post, None, None, None);
                    self.procs[k].pc += 1;
                }
                Statement::Put { src, dst } => {
                    self.procs[k].phase = Phase::PutSend {
                        src,
                        dst,
                        src_lock: Stage::NotTried,
                    };
                    self.put_send_step(k, src, dst)?;
                }
                Statement::Get { src, dst } => {
                    self.get_request_step(k, src, dst)?;
                }
            },
            Phase::PutSend { src, dst, .. } => self.put_send_step(k, src, dst)?,
            Phase::PutApply {
                src, dst, payload, ..
            } => self.put_apply_step(k, src, dst, payload)?,
            Phase::GetReply { src, dst, .. } => self.get_reply_step(k, src, dst)?,
        }
        Ok(start..self.events.len())
    }

    fn put_send_step(&mut self, k: usize, src: Address, dst: Address) -> Result<(), SimError> {
        let op = self.op_id(k);
        let held = match self.procs[k].phase {
            Phase::PutSend {
                src_lock: Stage::Held,
                ..
            } => true,
            _ => self.acquire_or_park(&src, op, k)?,
        };
        if !held {
            self.procs[k].phase = Phase::PutSend {
                src,
                dst,
                src_lock: Stage::Waiting,
            };
            return Ok(());
        }
        let pre = self.clocks[k].clone();
        let sent = rdma::put_send(&mut self.mem, &mut self.clocks, k, &src, op)?;
        let post = self.clocks[k].clone();
        self.push_event(
            EventKind::PutSend,
            k,
            Some(src),
            pre,
            post,
            Some(&sent.src_delta),
            None,
            None,
        );
        self.procs[k].phase = Phase::PutApply {
            src,
            dst,
            payload: sent.payload,
            dst_lock: Stage::NotTried,
        };
        Ok(())
    }

    fn put_apply_step(
        &mut self,
        k: usize,
        src: Address,
        dst: Address,
        payload: i64,
    ) -> Result<(), SimError> {
        let op = self.op_id(k);
        let held = match self.procs[k].phase {
            Phase::PutApply {
                dst_lock: Stage::Held,
                ..
            } => true,
            _ => self.acquire_or_park(&dst, op, k)?,
        };
        if !held {
            self.procs[k].phase = Phase::PutApply {
                src,
                dst,
                payload,
                dst_lock: Stage::Waiting,
            };
            return Ok(());
        }
        let carried = self.clocks[k].clone();
        let applied = rdma::put_apply(&mut self.mem, &carried, &dst, payload, self.detect, op)?;
        let id = self.events.len() as EventId;
        let race = applied.race.map(|(incoming, stored)| RaceReport {
            cell: dst,
            event: id,
            incoming_clock: incoming,
            stored_clock: stored,
            kind_conflict: ConflictKind::WriteVsAccess,
        });
        self.push_event(
            EventKind::PutApply,
            k,
            Some(dst),
            carried.clone(),
            carried.clone(),
            Some(&applied.delta),
            Some(payload),
            race,
        );
        self.release(&dst, op)?;
        self.push_event(
            EventKind::Unlock,
            k,
            Some(dst),
            carried.clone(),
            carried.clone(),
            None,
            None,
            None,
        );
        self.release(&src, op)?;
        self.push_event(
            EventKind::Unlock,
            k,
            Some(src),
            carried.clone(),
            carried,
            None,
            None,
            None,
        );
        self.procs[k].pc += 1;
        self.procs[k].phase = Phase::Idle;
        Ok(())
    }

    fn get_request_step(&mut self, k: usize, src: Address, dst: Address) -> Result<(), SimError> {
        let op = self.op_id(k);
        // The private destination is uncontended by construction: only its
        // owner issues operations on it, one at a time.
        match self.mem.lock(&dst, op)? {
            LockOutcome::Granted => {}
            LockOutcome::Queued => unreachable!("private destination {dst} contended"),
        }
        let pre = self.clocks[k].clone();
        let post = rdma::local_tick(&mut self.clocks, k)?;
        self.push_event(
            EventKind::GetRequest,
            k,
            Some(src),
            pre,
            post,
            None,
            None,
            None,
        );
        let held = self.acquire_or_park(&src, op, k)?;
        self.procs[k].phase = Phase::GetReply {
            src,
            dst,
            src_lock: if held { Stage::Held } else { Stage::Waiting },
        };
        Ok(())
    }

    fn get_reply_step(&mut self, k: usize, src: Address, dst: Address) -> Result<(), SimError> {
        let op = self.op_id(k);
        let pre = self.clocks[k].clone();
        let reply = rdma::get_reply(
            &mut self.mem,
            &mut self.clocks,
            k,
            &src,
            &dst,
            self.detect,
            op,
        )?;
        let post = self.clocks[k].clone();
        let id = self.events.len() as EventId;
        let race = reply.race.map(|(incoming, stored)| RaceReport {
            cell: src,
            event: id,
            incoming_clock: incoming,
            stored_clock: stored,
            kind_conflict: ConflictKind::ReadVsWrite,
        });
        self.push_event(
            EventKind::GetReply,
            k,
            Some(src),
            pre,
            post.clone(),
            Some(&reply.src_delta),
            Some(reply.value),
            race,
        );
        self.release(&src, op)?;
        self.push_event(
            EventKind::Unlock,
            k,
            Some(src),
            post.clone(),
            post.clone(),
            None,
            None,
            None,
        );
        self.release(&dst, op)?;
        self.push_event(
            EventKind::Unlock,
            k,
            Some(dst),
            post.clone(),
            post,
            None,
            None,
            None,
        );
        self.procs[k].pc += 1;
        self.procs[k].phase = Phase::Idle;
        Ok(())
    }

    /// Runs the loaded scenario to completion under its schedule.
    pub fn run(mut self, scenario: &Scenario) -> Result<Trace, SimError> {
        match scenario.schedule.clone() {
            Schedule::Explicit(picks) => {
                for (i, k) in picks.iter().enumerate() {
                    if self.finished() {
                        return Err(SimError::ScheduleTooLong {
                            unused: picks.len() - i,
                        });
                    }
                    self.step(*k)?;
                }
                if !self.finished() {
                    return Err(SimError::ScheduleExhausted { steps: picks.len() });
                }
            }
            Schedule::Seeded(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                while !self.finished() {
                    let runnable: Vec<usize> = (0..self.procs.len())
                        .filter(|k| self.runnable(*k))
                        .collect();
                    if runnable.is_empty() {
                        return Err(SimError::Deadlock);
                    }
                    let pick = runnable[(rng.next_u64() % runnable.len() as u64) as usize];
                    self.step(pick)?;
                }
            }
        }
        Ok(Trace {
            scenario_hash: scenario.hash(),
            processes: scenario.processes,
            schedule: self.picks,
            events: self.events,
            races: self.races,
        })
    }
}

/// Validates and runs a scenario with detection enabled.
pub fn run(scenario: &Scenario) -> Result<Trace, SimError> {
    run_configured(scenario, RunOptions::default())
}

/// Validates and runs a scenario with explicit options.
pub fn run_configured(scenario: &Scenario, options: RunOptions) -> Result<Trace, SimError> {
    Simulator::new(scenario, options)?.run(scenario)
}
