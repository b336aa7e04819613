//! Trace-level invariants checked across the randomized corpus: event ids,
//! clock monotonicity, write-clock containment, report well-formedness,
//! program-order soundness, and clock propagation through gets.

use dsmrace::clock::ClockOrdering;
use dsmrace::corpus;
use dsmrace::memory::Address;
use dsmrace::sim::{run, EventKind, Statement, Trace};
use std::collections::BTreeMap;

fn sweep(mut check: impl FnMut(u64, &Trace)) {
    for seed in 0..250u64 {
        let scenario = corpus::random_scenario(seed);
        let trace = run(&scenario).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        check(seed, &trace);
    }
}

#[test]
fn event_ids_are_dense_and_clocks_monotone() {
    sweep(|seed, trace| {
        for (i, event) in trace.events.iter().enumerate() {
            assert_eq!(event.id, i as u64, "seed {seed}: ids must be dense");
            assert!(
                event.clock_post.dominates(&event.clock_pre).unwrap(),
                "seed {seed}: event {i} clock went backwards"
            );
        }
    });
}

#[test]
fn write_clock_never_exceeds_general_clock() {
    sweep(|seed, trace| {
        for event in &trace.events {
            if let (Some(v), Some(w)) = (&event.cell_v_post, &event.cell_w_post) {
                assert!(
                    v.dominates(w).unwrap(),
                    "seed {seed}: event {} leaves W above V",
                    event.id
                );
            }
            if let (Some(pre), Some(post)) = (&event.cell_v_pre, &event.cell_v_post) {
                assert!(
                    post.dominates(pre).unwrap(),
                    "seed {seed}: event {} regressed a cell clock",
                    event.id
                );
            }
        }
    });
}

#[test]
fn reports_carry_genuinely_incomparable_clocks() {
    let mut reports = 0;
    sweep(|seed, trace| {
        for race in &trace.races {
            reports += 1;
            assert_eq!(
                race.incoming_clock.compare(&race.stored_clock).unwrap(),
                ClockOrdering::Concurrent,
                "seed {seed}: report clocks must be incomparable"
            );
            let event = &trace.events[race.event as usize];
            assert_eq!(event.race.as_ref(), Some(race));
            assert_eq!(event.addr, Some(race.cell));
        }
    });
    assert!(reports > 100, "corpus produced only {reports} reports");
}

#[test]
fn traces_expand_every_statement_exactly_once_in_order() {
    for seed in 0..250u64 {
        let scenario = corpus::random_scenario(seed);
        let trace = run(&scenario).unwrap();
        for (p, program) in scenario.programs.iter().enumerate() {
            let starts: Vec<EventKind> = trace
                .events
                .iter()
                .filter(|e| {
                    e.process == p
                        && matches!(
                            e.kind,
                            EventKind::PutSend | EventKind::GetRequest | EventKind::Compute
                        )
                })
                .map(|e| e.kind)
                .collect();
            let expected: Vec<EventKind> = program
                .iter()
                .map(|s| match s {
                    Statement::Put { .. } => EventKind::PutSend,
                    Statement::Get { .. } => EventKind::GetRequest,
                    Statement::Compute => EventKind::Compute,
                })
                .collect();
            assert_eq!(starts, expected, "seed {seed} process {p}");
        }
    }
}

/// After a race-free get, the reader's clock dominates the carried clock of
/// every put already applied to that cell: causality flows back with the
/// data.
#[test]
fn race_free_gets_absorb_all_prior_writers() {
    sweep(|seed, trace| {
        let mut applied: BTreeMap<Address, Vec<&dsmrace::clock::VectorClock>> = BTreeMap::new();
        for event in &trace.events {
            match event.kind {
                EventKind::PutApply => {
                    applied
                        .entry(event.addr.unwrap())
                        .or_default()
                        .push(&event.clock_post);
                }
                EventKind::GetReply if event.race.is_none() => {
                    for writer in applied.get(&event.addr.unwrap()).into_iter().flatten() {
                        assert!(
                            event.clock_post.dominates(writer).unwrap(),
                            "seed {seed}: reply {} missed a prior writer",
                            event.id
                        );
                    }
                }
                _ => {}
            }
        }
    });
}

/// A remote put never moves the destination owner's process clock, only the
/// cell clocks.
#[test]
fn puts_are_one_sided() {
    sweep(|seed, trace| {
        let mut latest: Vec<Option<&dsmrace::clock::VectorClock>> = vec![None; trace.processes];
        for event in &trace.events {
            if let Some(previous) = latest[event.process] {
                assert_eq!(
                    &event.clock_pre, previous,
                    "seed {seed}: process {} clock moved outside its own events",
                    event.process
                );
            }
            latest[event.process] = Some(&event.clock_post);
        }
    });
}
