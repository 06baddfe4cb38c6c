//! Regenerates the bundled fixture files.
//!
//! `cargo run -p probe-core --example make_fixtures -- [out_dir]`

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use probe_core::fixtures::{planted_bundle, reported_trials, PlantedSpec};
use probe_core::ingest::{save_trials, save_vectors_json, save_vectors_npz};
use probe_core::taxonomy::{write_audit_records, RuleSet};

/// Seed used to draw the bundled audit sample.
const AUDIT_SEED: u64 = 7;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures"));
    std::fs::create_dir_all(&out)?;

    let (trials, audit) = reported_trials(AUDIT_SEED);
    save_trials(out.join("trials.jsonl"), &trials)?;
    write_audit_records(BufWriter::new(File::create(out.join("audit_labels.jsonl"))?), &audit)?;

    let planted = planted_bundle(&PlantedSpec::default());
    save_vectors_json(out.join("vectors_planted.json"), &planted)?;
    save_vectors_npz(out.join("vectors_planted.npz"), &planted)?;

    let rules = serde_json::to_string_pretty(&RuleSet::default())?;
    std::fs::write(out.join("rules.json"), rules + "\n")?;
    println!("wrote fixtures to {}", out.display());
    Ok(())
}
