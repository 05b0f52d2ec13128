//! Benchmark fixtures.

use permgibbs_core::fixtures::{fixture, Fixture};

/// The bundled fixtures timed by the sampler benches.
pub fn timed_fixtures() -> Vec<Fixture> {
    ["pair-d1", "stacked-d1", "straddle-d2", "line6-d1"]
        .into_iter()
        .map(|n| fixture(n).expect("bundled fixture"))
        .collect()
}
