//! Shared inputs for the benchmarks.

use bellkit::events::{EventStream, TimedEvent, Wing};
use bellkit::lhv::generate_table;
use bellkit::quantum::{canonical_angles, simulate_experiment};
use bellkit::{BellRng, CounterfactualTable, LhvModel, ObservedRun, RngSeed, Sign};

pub fn quantum_runs(n: usize) -> Vec<ObservedRun> {
    simulate_experiment(&canonical_angles(), n, RngSeed(1)).expect("n > 0")
}

pub fn lhv_table(n: usize) -> CounterfactualTable {
    generate_table(&LhvModel::uniform(), n, RngSeed(2)).expect("n > 0")
}

/// `n` events per wing with jittered times around a 1 µs period and
/// roughly half of each wing dropped.
pub fn jittered_stream(n: usize) -> EventStream {
    let mut rng = BellRng::new(RngSeed(3));
    let mut events = Vec::with_capacity(2 * n);
    for j in 0..n as u64 {
        for wing in [Wing::A, Wing::B] {
            if rng.next_bit() == 0 {
                continue;
            }
            events.push(TimedEvent {
                t_ns: j * 1000 + rng.next_u64() % 200,
                wing,
                setting: rng.next_bit(),
                outcome: Sign::from_bit(rng.next_bit()),
            });
        }
    }
    EventStream::sorted(events)
}
