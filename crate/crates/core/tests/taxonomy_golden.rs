//! Hand-labeled responses classified under the default rule set.

mod common;

use common::golden_corpus;
use probe_core::ingest::{ConditionId, TrialRecord};
use probe_core::taxonomy::{classify, classify_batch, Category, RuleSet};

#[test]
fn golden_corpus_full_agreement() {
    let rules = RuleSet::default();
    let items = golden_corpus();
    assert_eq!(items.len(), 50);
    let misses: Vec<String> = items
        .iter()
        .filter_map(|g| {
            let got = classify(&g.response, &rules);
            (got != g.label).then(|| format!("{:?}: want {:?}, got {:?}", g.response, g.label, got))
        })
        .collect();
    assert!(misses.is_empty(), "{misses:#?}");
}

#[test]
fn corpus_covers_every_category() {
    let items = golden_corpus();
    for cat in Category::ALL {
        assert!(items.iter().filter(|g| g.label == cat).count() >= 3, "{cat:?}");
    }
}

#[test]
fn batch_agrees_with_single_classification() {
    let rules = RuleSet::default();
    let trials: Vec<TrialRecord> = golden_corpus()
        .into_iter()
        .enumerate()
        .map(|(i, g)| TrialRecord {
            condition: ConditionId::Conflict,
            prompt_id: probe_core::ingest::PromptId::new(i % 7).unwrap(),
            seed: 42,
            trial_index: i as u64,
            prompt_text: String::new(),
            response_text: g.response,
        })
        .collect();
    let labeled = classify_batch(&trials, &rules);
    assert_eq!(labeled.len(), trials.len());
    for ((t, c), orig) in labeled.iter().zip(&trials) {
        assert_eq!(t, orig);
        assert_eq!(*c, classify(&t.response_text, &rules));
    }
    assert!(classify_batch(&[], &rules).is_empty());
}
