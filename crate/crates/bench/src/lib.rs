//! Inputs shared by the benchmarks.

use probe_core::fixtures::{planted_bundle, reported_trials, PlantedSpec};
use probe_core::ingest::{TrialRecord, VectorBundle};

/// The 1,500-trial log matching the reported counts.
pub fn trial_log() -> Vec<TrialRecord> {
    reported_trials(7).0
}

/// Planted bundle at a given hidden size.
pub fn bundle(dim: usize) -> VectorBundle {
    planted_bundle(&PlantedSpec { dim, ..PlantedSpec::default() })
}
