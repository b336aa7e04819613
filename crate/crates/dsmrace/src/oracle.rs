//! Brute-force happens-before checker over a finished trace: the independent
//! ground truth the clock-based detector is validated against.
//!
//! Node layout. Every initiator-side step is a node on its process's
//! program-order chain: a put's *send*, a get's *read* (anchored at the
//! request) and *absorb* (anchored at the reply, where the source cell's
//! accumulated clock merges into the initiator), and each *compute*. A put
//! additionally contributes a detached *apply* node — the write access
//! itself — reachable only through its send. The initiator fires and
//! forgets: nothing it does later is ordered after the arrival, and two
//! applies at one cell stay unordered unless someone read the cell in
//! between, however related their senders were. A put sourcing from the
//! initiator's own public memory makes its send double as a read access of
//! that cell and as an absorption point, since the send merges the source
//! cell's clock.
//!
//! Edges: program order along each chain, one message edge from each send to
//! its apply, and absorption edges from every access of a cell to each later
//! point that merged the cell's clock into a process (a reply or a relaying
//! send). The merge picks up the cell's whole accumulated history, not just
//! the value's writer, so the edges must too; "later" is decided by when an
//! access entered the stored clock — a put at its apply, a get at its reply,
//! a relaying send at the send itself.
//!
//! Concurrency is unreachability both ways in the transitive closure. A racy
//! pair is two accesses of the same cell, at least one a write, with no path
//! either way. Apply nodes carry the cell-side merged clock and are excluded
//! from process-clock comparisons; every chained node carries the initiator
//! clock its event completed with.

use crate::clock::VectorClock;
use crate::memory::{Address, Space};
use crate::rdma::EventId;
use crate::sim::{Event, EventKind, Trace};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("malformed trace: {0}")]
    Malformed(String),
    #[error("event {0} is not a node of the happens-before graph")]
    UnknownEvent(EventId),
}

/// What a node contributes to the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRole {
    /// A put's departure. With a public source it doubles as a read access
    /// of the source cell.
    Send,
    /// A put's arrival: the write access to the destination cell. Detached
    /// from program order; carries the cell's merged clock.
    Apply,
    /// A get's read access to its source cell, anchored at the request.
    Read,
    /// A get reply's merge of the source cell's clock into the initiator.
    /// Not an access.
    Absorb,
    /// A purely local event.
    Compute,
}

/// One graph node, keyed by the trace event that anchors it.
#[derive(Debug, Clone)]
pub struct HbNode {
    pub event: EventId,
    pub process: usize,
    pub role: NodeRole,
    /// The cell this node accesses, if it is an access.
    pub cell: Option<Address>,
    /// Initiator clock after the event; for applies, the cell's merged clock.
    pub clock: VectorClock,
    /// When this access entered its cell's stored clock (trace event id).
    footprint: EventId,
}

impl HbNode {
    /// Access nodes are candidates for racy pairs.
    pub fn is_access(&self) -> bool {
        self.cell.is_some() && !matches!(self.role, NodeRole::Absorb)
    }

    pub fn is_write(&self) -> bool {
        matches!(self.role, NodeRole::Apply)
    }

    /// Nodes whose clock is an initiator-side process clock. Apply nodes
    /// carry cell-side state and fall outside clock-versus-causality
    /// comparisons.
    pub fn is_process_event(&self) -> bool {
        !matches!(self.role, NodeRole::Apply)
    }
}

/// Happens-before graph with its transitive closure precomputed.
#[derive(Debug)]
pub struct HbGraph {
    nodes: Vec<HbNode>,
    by_event: BTreeMap<EventId, usize>,
    reach: Vec<Vec<bool>>,
}

/// Builds the graph for a complete trace.
pub fn build_hb_graph(trace: &Trace) -> Result<HbGraph, OracleError> {
    let mut nodes: Vec<HbNode> = Vec::new();
    let mut chains: Vec<Vec<usize>> = vec![Vec::new(); trace.processes];
    let mut edges: Vec<(usize, usize)> = Vec::new();
    // (cell, absorb time, node index) for every point that merged a cell's
    // clock into a process.
    let mut absorbers: Vec<(Address, EventId, usize)> = Vec::new();

    let mut primaries: Vec<Vec<&Event>> = vec![Vec::new(); trace.processes];
    for event in &trace.events {
        if event.process >= trace.processes {
            return Err(OracleError::Malformed(format!(
                "event {} names process {} of {}",
                event.id, event.process, trace.processes
            )));
        }
        match event.kind {
            EventKind::LockGrant | EventKind::LockWait | EventKind::Unlock => {}
            _ => primaries[event.process].push(event),
        }
    }

    for (process, stream) in primaries.iter().enumerate() {
        let mut i = 0;
        while i < stream.len() {
            let event = stream[i];
            match event.kind {
                EventKind::Compute => {
                    let idx = nodes.len();
                    nodes.push(HbNode {
                        event: event.id,
                        process,
                        role: NodeRole::Compute,
                        cell: None,
                        clock: event.clock_post.clone(),
                        footprint: event.id,
                    });
                    chains[process].push(idx);
                    i += 1;
                }
                EventKind::PutSend => {
                    let apply = stream.get(i + 1).ok_or_else(|| {
                        OracleError::Malformed(format!("put send {} has no apply", event.id))
                    })?;
                    if apply.kind != EventKind::PutApply {
                        return Err(OracleError::Malformed(format!(
                            "event {} follows put send {} but is not its apply",
                            apply.id, event.id
                        )));
                    }
                    let src = event.addr.ok_or_else(|| {
                        OracleError::Malformed(format!("put send {} has no address", event.id))
                    })?;
                    let dst = apply.addr.ok_or_else(|| {
                        OracleError::Malformed(format!("put apply {} has no address", apply.id))
                    })?;
                    let relayed = src.space == Space::Public;
                    let send_idx = nodes.len();
                    nodes.push(HbNode {
                        event: event.id,
                        process,
                        role: NodeRole::Send,
                        cell: relayed.then_some(src),
                        clock: event.clock_post.clone(),
                        footprint: event.id,
                    });
                    chains[process].push(send_idx);
                    if relayed {
                        absorbers.push((src, event.id, send_idx));
                    }
                    let apply_idx = nodes.len();
                    nodes.push(HbNode {
                        event: apply.id,
                        process,
                        role: NodeRole::Apply,
                        cell: Some(dst),
                        clock: apply.cell_v_post.clone().ok_or_else(|| {
                            OracleError::Malformed(format!(
                                "put apply {} records no cell clock",
                                apply.id
                            ))
                        })?,
                        footprint: apply.id,
                    });
                    edges.push((send_idx, apply_idx));
                    i += 2;
                }
                EventKind::GetRequest => {
                    let reply = stream.get(i + 1).ok_or_else(|| {
                        OracleError::Malformed(format!("get request {} has no reply", event.id))
                    })?;
                    if reply.kind != EventKind::GetReply {
                        return Err(OracleError::Malformed(format!(
                            "event {} follows get request {} but is not its reply",
                            reply.id, event.id
                        )));
                    }
                    let src = event.addr.ok_or_else(|| {
                        OracleError::Malformed(format!("get request {} has no address", event.id))
                    })?;
                    let read_idx = nodes.len();
                    nodes.push(HbNode {
                        event: event.id,
                        process,
                        role: NodeRole::Read,
                        cell: Some(src),
                        clock: event.clock_post.clone(),
                        footprint: reply.id,
                    });
                    chains[process].push(read_idx);
                    let absorb_idx = nodes.len();
                    nodes.push(HbNode {
                        event: reply.id,
                        process,
                        role: NodeRole::Absorb,
                        cell: None,
                        clock: reply.clock_post.clone(),
                        footprint: reply.id,
                    });
                    chains[process].push(absorb_idx);
                    absorbers.push((src, reply.id, absorb_idx));
                    i += 2;
                }
                other => {
                    return Err(OracleError::Malformed(format!(
                        "unexpected {other:?} at event {} of process {process}",
                        event.id
                    )));
                }
            }
        }
    }

    for chain in &chains {
        for pair in chain.windows(2) {
            edges.push((pair[0], pair[1]));
        }
    }
    for (cell, absorb_time, target) in &absorbers {
        for (idx, node) in nodes.iter().enumerate() {
            if node.is_access() && node.cell == Some(*cell) && node.footprint < *absorb_time {
                edges.push((idx, *target));
            }
        }
    }

    let count = nodes.len();
    let mut reach = vec![vec![false; count]; count];
    for (from, to) in edges {
        reach[from][to] = true;
    }
    for k in 0..count {
        // Row k is invariant during its own iteration, so the clone sees
        // exactly what in-place closure would.
        let row_k = reach[k].clone();
        for row in reach.iter_mut() {
            if row[k] {
                for (j, reachable) in row_k.iter().enumerate() {
                    if *reachable {
                        row[j] = true;
                    }
                }
            }
        }
    }

    let by_event = nodes
        .iter()
        .enumerate()
        .map(|(idx, node)| (node.event, idx))
        .collect();
    Ok(HbGraph {
        nodes,
        by_event,
        reach,
    })
}

impl HbGraph {
    pub fn nodes(&self) -> &[HbNode] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    fn index_of(&self, event: EventId) -> Result<usize, OracleError> {
        self.by_event
            .get(&event)
            .copied()
            .ok_or(OracleError::UnknownEvent(event))
    }

    /// Directed reachability between node indices.
    pub fn reachable_idx(&self, from: usize, to: usize) -> bool {
        self.reach[from][to]
    }

    /// True iff there is no directed path either way between the two events'
    /// nodes. An event is never concurrent with itself.
    pub fn concurrent(&self, e1: EventId, e2: EventId) -> Result<bool, OracleError> {
        let a = self.index_of(e1)?;
        let b = self.index_of(e2)?;
        if a == b {
            return Ok(false);
        }
        Ok(!self.reach[a][b] && !self.reach[b][a])
    }

    /// All unordered pairs of same-cell accesses with at least one write and
    /// no happens-before path: the trace's true races.
    pub fn racy_pairs(&self) -> BTreeSet<(EventId, EventId, Address)> {
        let mut pairs = BTreeSet::new();
        for i in 0..self.nodes.len() {
            for j in (i + 1)..self.nodes.len() {
                let (a, b) = (&self.nodes[i], &self.nodes[j]);
                if !a.is_access() || !b.is_access() {
                    continue;
                }
                let (Some(cell_a), Some(cell_b)) = (a.cell, b.cell) else {
                    continue;
                };
                if cell_a != cell_b {
                    continue;
                }
                if !a.is_write() && !b.is_write() {
                    continue;
                }
                if !self.reach[i][j] && !self.reach[j][i] {
                    let (lo, hi) = if a.event <= b.event {
                        (a.event, b.event)
                    } else {
                        (b.event, a.event)
                    };
                    pairs.insert((lo, hi, cell_a));
                }
            }
        }
        pairs
    }

    /// Cells that appear in at least one racy pair.
    pub fn racy_cells(&self) -> BTreeSet<Address> {
        self.racy_pairs().iter().map(|(_, _, cell)| *cell).collect()
    }
}

/// Side-by-side racy-cell sets from the detector and the oracle, for
/// agreement checks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Agreement {
    pub detector: BTreeSet<Address>,
    pub oracle: BTreeSet<Address>,
}

impl Agreement {
    pub fn agreed(&self) -> bool {
        self.detector == self.oracle
    }

    /// Cells flagged by exactly one side: `(detector-only, oracle-only)`.
    pub fn diff(&self) -> (Vec<Address>, Vec<Address>) {
        let detector_only = self.detector.difference(&self.oracle).copied().collect();
        let oracle_only = self.oracle.difference(&self.detector).copied().collect();
        (detector_only, oracle_only)
    }
}

/// Compares the detector's flagged cells against the oracle's racy cells for
/// one trace.
pub fn check_agreement(trace: &Trace) -> Result<Agreement, OracleError> {
    let graph = build_hb_graph(trace)?;
    Ok(Agreement {
        detector: trace.racy_cells(),
        oracle: graph.racy_cells(),
    })
}
