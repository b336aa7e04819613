//! Seeded scenario generator for the detector-versus-oracle validation
//! campaigns.
//!
//! The generator stays inside the shapes where process clocks, cell clocks,
//! and the happens-before graph are provably telling one story, so any
//! disagreement a campaign finds is a bug rather than a known aliasing
//! artifact. Two aliasing hazards of the clock scheme drive the layout:
//!
//! 1. Arrival processing bumps the *owner* component of a cell's stored
//!    clock, and the owner component also counts the owner's own events. A
//!    cell owner that runs a program therefore feeds two unrelated counters
//!    into one component, and a third process can absorb one counter and
//!    appear causally past the other.
//! 2. Two cells mapped by the same owner bump the same component
//!    independently; a process that reads one sibling can appear up to date
//!    with the other sibling's arrivals it never saw.
//!
//! Hence: processes are split into *initiators*, which run programs but map
//! no public cells, and *owners*, which map at most one public cell each and
//! run nothing. Within that layout the programs are unconstrained mixes of
//! remote puts, remote gets, and computes — including repeat accesses, blind
//! overwrites, and get-then-put absorption cycles. A separate flavor
//! generates read-only traffic, which must never produce a report.
//!
//! Everything derives from one `u64` seed through ChaCha8, so every scenario
//! in a campaign reproduces from its seed alone.

use crate::memory::Address;
use crate::sim::{Scenario, Schedule, Statement};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MAX_STATEMENTS: usize = 12;
const MAX_READ_ONLY_STATEMENTS: usize = 10;

fn pick(rng: &mut ChaCha8Rng, n: usize) -> usize {
    debug_assert!(n > 0);
    (rng.next_u64() % n as u64) as usize
}

struct Builder {
    initiators: usize,
    owners: usize,
    public_cells: Vec<Address>,
    cells: Vec<(Address, i64)>,
    programs: Vec<Vec<Statement>>,
    next_private: Vec<usize>,
    next_value: i64,
    statements: usize,
}

impl Builder {
    fn new(rng: &mut ChaCha8Rng, max_initiators: usize) -> Builder {
        let initiators = 1 + pick(rng, max_initiators);
        let owners = 1 + pick(rng, 4 - initiators);
        Builder {
            initiators,
            owners,
            public_cells: Vec::new(),
            cells: Vec::new(),
            programs: vec![Vec::new(); initiators + owners],
            next_private: vec![0; initiators],
            next_value: 100,
            statements: 0,
        }
    }

    fn processes(&self) -> usize {
        self.initiators + self.owners
    }

    /// One public cell on each of `count` distinct owners.
    fn add_public_cells(&mut self, count: usize) {
        for k in 0..count.min(self.owners) {
            let addr = Address::public(self.initiators + k, 0);
            self.public_cells.push(addr);
            let value = self.fresh_value();
            self.cells.push((addr, value));
        }
    }

    fn fresh_value(&mut self) -> i64 {
        self.next_value += 1;
        self.next_value
    }

    fn fresh_private(&mut self, initiator: usize) -> Address {
        let offset = self.next_private[initiator];
        self.next_private[initiator] += 1;
        let addr = Address::private(initiator, offset);
        let value = self.fresh_value();
        self.cells.push((addr, value));
        addr
    }

    fn push_put(&mut self, initiator: usize, dst: Address) {
        let src = self.fresh_private(initiator);
        self.programs[initiator].push(Statement::Put { src, dst });
        self.statements += 1;
    }

    fn push_get(&mut self, initiator: usize, src: Address) {
        let dst = self.fresh_private(initiator);
        self.programs[initiator].push(Statement::Get { src, dst });
        self.statements += 1;
    }

    fn push_compute(&mut self, initiator: usize) {
        self.programs[initiator].push(Statement::Compute);
        self.statements += 1;
    }

    fn finish(self, rng: &mut ChaCha8Rng) -> Scenario {
        Scenario {
            processes: self.processes(),
            cells: self.cells,
            programs: self.programs,
            schedule: Schedule::Seeded(rng.next_u64()),
        }
    }
}

/// General flavor: every initiator runs an arbitrary mix of remote puts,
/// remote gets, and computes over the shared cells.
fn mixed(rng: &mut ChaCha8Rng) -> Scenario {
    let mut b = Builder::new(rng, 3);
    let cell_count = 1 + pick(rng, b.owners);
    b.add_public_cells(cell_count);
    for initiator in 0..b.initiators {
        let budget = 1 + pick(rng, 5);
        for _ in 0..budget {
            if b.statements >= MAX_STATEMENTS {
                break;
            }
            let cell = b.public_cells[pick(rng, b.public_cells.len())];
            match pick(rng, 5) {
                0 | 1 => b.push_put(initiator, cell),
                2 | 3 => b.push_get(initiator, cell),
                _ => b.push_compute(initiator),
            }
        }
    }
    b.finish(rng)
}

fn read_only(rng: &mut ChaCha8Rng) -> Scenario {
    let mut b = Builder::new(rng, 3);
    let cell_count = 1 + pick(rng, b.owners);
    b.add_public_cells(cell_count);
    for initiator in 0..b.initiators {
        let gets = 1 + pick(rng, 3);
        for _ in 0..gets {
            if b.statements >= MAX_READ_ONLY_STATEMENTS {
                break;
            }
            if pick(rng, 4) == 0 && b.statements + 1 < MAX_READ_ONLY_STATEMENTS {
                b.push_compute(initiator);
            }
            let src = b.public_cells[pick(rng, b.public_cells.len())];
            b.push_get(initiator, src);
        }
    }
    b.finish(rng)
}

/// One random scenario within the validated agreement domain. The same seed
/// always yields the same scenario, including its schedule seed.
pub fn random_scenario(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match rng.next_u64() % 5 {
        0..=3 => mixed(&mut rng),
        _ => read_only(&mut rng),
    }
}

/// One random scenario whose every public-cell operation is a get.
pub fn random_read_only_scenario(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    read_only(&mut rng)
}
