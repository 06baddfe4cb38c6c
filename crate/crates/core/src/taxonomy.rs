//! Hierarchical keyword taxonomy of probe responses, plus the deterministic
//! sampling and re-import side of the manual audit of unclassified responses.
//!
//! Precedence is Genesis > PartialGenesis > Confusion > PickOne > Unclassified.
//! Text is lowercased, punctuation other than in-word apostrophes becomes
//! whitespace, and matching is per token (a trailing plural `s` is accepted).
//! A term is negated when a negation term occurs within the preceding
//! `negation_window` tokens.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{ConditionId, TrialKey, TrialRecord};
use crate::rng::SplitMix64;

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("invalid rule set: {0}")]
    InvalidRules(String),
    #[error("requested {requested} unclassified {condition} trials but only {available} are available")]
    SampleTooLarge { condition: ConditionId, requested: usize, available: usize },
    #[error("no audit label for sampled trial {0}")]
    MissingLabel(TrialKey),
    #[error("duplicate audit label for trial {0}")]
    DuplicateLabel(TrialKey),
    #[error("audit label for trial {0}, which is not in the sample")]
    UnsampledLabel(TrialKey),
    #[error("audit sample is empty")]
    EmptySample,
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Genesis,
    PartialGenesis,
    Confusion,
    PickOneSquare,
    PickOneCircle,
    Unclassified,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Genesis,
        Category::PartialGenesis,
        Category::Confusion,
        Category::PickOneSquare,
        Category::PickOneCircle,
        Category::Unclassified,
    ];

    pub fn is_pick_one(self) -> bool {
        matches!(self, Category::PickOneSquare | Category::PickOneCircle)
    }

    pub fn is_synthesis(self) -> bool {
        matches!(self, Category::Genesis | Category::PartialGenesis)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Genesis => "genesis",
            Category::PartialGenesis => "partial_genesis",
            Category::Confusion => "confusion",
            Category::PickOneSquare => "pick_one_square",
            Category::PickOneCircle => "pick_one_circle",
            Category::Unclassified => "unclassified",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleSet {
    pub genesis_terms: Vec<String>,
    pub partial_terms: Vec<String>,
    pub square_terms: Vec<String>,
    pub circle_terms: Vec<String>,
    pub negation_terms: Vec<String>,
    pub negation_window: usize,
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl Default for RuleSet {
    fn default() -> Self {
        Self {
            genesis_terms: strings(&["cylinder"]),
            partial_terms: strings(&["cone", "squircle", "hybrid"]),
            square_terms: strings(&["square"]),
            circle_terms: strings(&["circle", "round"]),
            negation_terms: strings(&["not", "n't", "never", "neither"]),
            negation_window: 3,
        }
    }
}

impl RuleSet {
    pub fn validate(&self) -> Result<(), TaxonomyError> {
        let lists = [
            ("genesis_terms", &self.genesis_terms),
            ("partial_terms", &self.partial_terms),
            ("square_terms", &self.square_terms),
            ("circle_terms", &self.circle_terms),
            ("negation_terms", &self.negation_terms),
        ];
        for (name, list) in lists {
            if list.is_empty() {
                return Err(TaxonomyError::InvalidRules(format!("{name} is empty")));
            }
            for t in list {
                if t.is_empty() || t.chars().any(char::is_whitespace) {
                    return Err(TaxonomyError::InvalidRules(format!("{name}: {t:?} is not a single token")));
                }
                if t.to_lowercase() != *t {
                    return Err(TaxonomyError::InvalidRules(format!("{name}: {t:?} is not lowercase")));
                }
            }
        }
        if let Some(t) = self.genesis_terms.iter().find(|t| self.partial_terms.contains(t)) {
            return Err(TaxonomyError::InvalidRules(format!("{t:?} appears in both genesis_terms and partial_terms")));
        }
        if self.negation_window == 0 {
            return Err(TaxonomyError::InvalidRules("negation_window must be >= 1".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, TaxonomyError> {
        let rules: RuleSet = serde_json::from_str(text).map_err(|e| TaxonomyError::InvalidRules(e.to_string()))?;
        rules.validate()?;
        Ok(rules)
    }
}

/// Lowercases and splits on anything that is not alphanumeric, keeping
/// apostrophes inside words so contractions like "isn't" stay one token.
pub fn tokenize(text: &str) -> Vec<String> {
    let normalized: String = text
        .to_lowercase()
        .chars()
        .map(|c| match c {
            '\u{2019}' | '\u{2018}' => '\'',
            c if c.is_alphanumeric() || c == '\'' => c,
            _ => ' ',
        })
        .collect();
    normalized.split_whitespace().map(|t| t.trim_matches('\'')).filter(|t| !t.is_empty()).map(str::to_string).collect()
}

fn matches_term(token: &str, term: &str) -> bool {
    token == term || token.strip_suffix('s') == Some(term)
}

// Terms containing an apostrophe ("n't") match as a token suffix.
fn is_negation(token: &str, rules: &RuleSet) -> bool {
    rules.negation_terms.iter().any(|n| if n.contains('\'') { token.ends_with(n.as_str()) } else { token == n })
}

fn affirms(tokens: &[String], negated: &[bool], terms: &[String]) -> bool {
    tokens.iter().zip(negated).any(|(tok, neg)| !neg && terms.iter().any(|t| matches_term(tok, t)))
}

/// Classifies one response. Total: every input gets exactly one category.
pub fn classify(response: &str, rules: &RuleSet) -> Category {
    let tokens = tokenize(response);
    let negation: Vec<bool> = tokens.iter().map(|t| is_negation(t, rules)).collect();
    let negated: Vec<bool> =
        (0..tokens.len()).map(|i| negation[i.saturating_sub(rules.negation_window)..i].iter().any(|&n| n)).collect();

    if affirms(&tokens, &negated, &rules.genesis_terms) {
        return Category::Genesis;
    }
    if affirms(&tokens, &negated, &rules.partial_terms) {
        return Category::PartialGenesis;
    }
    let square = affirms(&tokens, &negated, &rules.square_terms);
    let circle = affirms(&tokens, &negated, &rules.circle_terms);
    match (square, circle) {
        (true, true) => Category::Confusion,
        (true, false) => Category::PickOneSquare,
        (false, true) => Category::PickOneCircle,
        (false, false) => Category::Unclassified,
    }
}

/// Labels every trial, preserving order.
pub fn classify_batch(trials: &[TrialRecord], rules: &RuleSet) -> Vec<(TrialRecord, Category)> {
    trials.par_iter().map(|t| (t.clone(), classify(&t.response_text, rules))).collect()
}

/// Draws `n` Unclassified trials of `condition` without replacement.
///
/// The population is sorted by `(seed, trial_index)`, then a front-to-back
/// Fisher–Yates pass driven by [`SplitMix64`] seeded with `seed` permutes the
/// first `n` positions.
pub fn sample_unclassified(
    labeled: &[(TrialRecord, Category)],
    condition: ConditionId,
    n: usize,
    seed: u64,
) -> Result<Vec<TrialRecord>, TaxonomyError> {
    let mut population: Vec<&TrialRecord> = labeled
        .iter()
        .filter(|(t, c)| t.condition == condition && *c == Category::Unclassified)
        .map(|(t, _)| t)
        .collect();
    if n > population.len() {
        return Err(TaxonomyError::SampleTooLarge { condition, requested: n, available: population.len() });
    }
    population.sort_by_key(|t| (t.seed, t.trial_index));
    let mut rng = SplitMix64::new(seed);
    let len = population.len();
    for i in 0..n.min(len.saturating_sub(1)) {
        let j = i + rng.below((len - i) as u64) as usize;
        population.swap(i, j);
    }
    Ok(population.into_iter().take(n).cloned().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditLabel {
    Evasive,
    Confused,
    SoftGenesis,
}

impl AuditLabel {
    pub const ALL: [AuditLabel; 3] = [AuditLabel::Evasive, AuditLabel::Confused, AuditLabel::SoftGenesis];

    pub fn title(self) -> &'static str {
        match self {
            AuditLabel::Evasive => "Evasive",
            AuditLabel::Confused => "Confused",
            AuditLabel::SoftGenesis => "Soft Genesis",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub label: AuditLabel,
    pub count: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditTable {
    pub sample_size: usize,
    pub rows: Vec<AuditRow>,
}

impl AuditTable {
    pub fn count(&self, label: AuditLabel) -> usize {
        self.rows.iter().find(|r| r.label == label).map_or(0, |r| r.count)
    }
}

/// Tallies human audit labels over a sample. Every sampled trial needs
/// exactly one label and no label may refer to a trial outside the sample.
pub fn apply_audit(sample: &[TrialRecord], labels: &[(TrialKey, AuditLabel)]) -> Result<AuditTable, TaxonomyError> {
    if sample.is_empty() {
        return Err(TaxonomyError::EmptySample);
    }
    let sampled: HashSet<TrialKey> = sample.iter().map(TrialRecord::key).collect();
    let mut by_key: HashMap<TrialKey, AuditLabel> = HashMap::new();
    for (key, label) in labels {
        if !sampled.contains(key) {
            return Err(TaxonomyError::UnsampledLabel(*key));
        }
        if by_key.insert(*key, *label).is_some() {
            return Err(TaxonomyError::DuplicateLabel(*key));
        }
    }
    let mut counts: BTreeMap<AuditLabel, usize> = AuditLabel::ALL.iter().map(|l| (*l, 0)).collect();
    for t in sample {
        let label = by_key.get(&t.key()).ok_or(TaxonomyError::MissingLabel(t.key()))?;
        *counts.entry(*label).or_default() += 1;
    }
    let n = sample.len();
    let rows = counts
        .into_iter()
        .map(|(label, count)| AuditRow { label, count, percent: 100.0 * count as f64 / n as f64 })
        .collect();
    Ok(AuditTable { sample_size: n, rows })
}

/// One line of the audit export; the import adds `audit_label`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub condition: ConditionId,
    pub seed: i64,
    pub trial_index: u64,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit_label: Option<AuditLabel>,
}

impl AuditRecord {
    pub fn key(&self) -> TrialKey {
        TrialKey { condition: self.condition, seed: self.seed, trial_index: self.trial_index }
    }
}

impl From<&TrialRecord> for AuditRecord {
    fn from(t: &TrialRecord) -> Self {
        Self {
            condition: t.condition,
            seed: t.seed,
            trial_index: t.trial_index,
            response: t.response_text.clone(),
            audit_label: None,
        }
    }
}

pub fn write_audit_records<W: Write>(mut w: W, records: &[AuditRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_audit_records<R: BufRead>(reader: R) -> Result<Vec<AuditRecord>, TaxonomyError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| TaxonomyError::Line { line: i + 1, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec =
            serde_json::from_str(&line).map_err(|e| TaxonomyError::Line { line: i + 1, message: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}

/// Extracts `(key, label)` pairs from imported records; unlabeled lines are
/// an error.
pub fn audit_labels(records: &[AuditRecord]) -> Result<Vec<(TrialKey, AuditLabel)>, TaxonomyError> {
    records.iter().map(|r| r.audit_label.map(|l| (r.key(), l)).ok_or(TaxonomyError::MissingLabel(r.key()))).collect()
}
