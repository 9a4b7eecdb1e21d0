//! Fixtures shared by the benchmarks.

use evograph::graph::normalize_weights;
use evograph::sim::{simulate_event, SimConfig};
use evograph::{EventSequence, ModelConfig};

/// The desk-scale synthetic event: 4 offices, 80 viewers, 8 snapshots.
pub fn desk_event() -> EventSequence {
    normalize_weights(simulate_event(&SimConfig::default()).expect("default config is valid")).expect("non-empty event")
}

/// Snapshot evaluated in the desk-scale runs.
pub const DESK_K: usize = 6;

/// The default teacher with a short training budget.
pub fn short_teacher(epochs: usize) -> ModelConfig {
    ModelConfig { epochs, ..ModelConfig::teacher() }
}
