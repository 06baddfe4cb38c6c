//! Interchange formats: JSONL trial logs and last-layer vector bundles.
//!
//! Trial log, one object per line:
//!
//! ```text
//! {"condition": "base"|"analytic"|"conflict", "prompt_id": 0..6, "seed": int,
//!  "trial_index": int, "prompt": "...", "response": "..."}
//! ```
//!
//! Vector bundle, either native JSON
//! `{"dim": d, "entries": [{"condition": .., "prompt_id": .., "values": [..]}]}`
//! or an NPZ archive with `base.npy`, `analytic.npy`, `conflict.npy`, each a
//! C-order float32 array of shape `(7, d)`.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::npy::{self, Array2, NpyError};

/// Seeds used for the five probe runs per condition.
pub const DEFAULT_SEEDS: [i64; 5] = [42, 123, 456, 789, 1024];
pub const PROMPT_COUNT: usize = 7;
pub const CONDITION_COUNT: usize = 3;
/// Entries in a complete bundle.
pub const BUNDLE_LEN: usize = PROMPT_COUNT * CONDITION_COUNT;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("line {line}: duplicate trial {key}")]
    DuplicateTrial { line: usize, key: TrialKey },
    #[error("trial {key}: seed {seed} is not in the declared seed list")]
    UndeclaredSeed { key: TrialKey, seed: i64 },
    #[error("malformed vector bundle: {0}")]
    Bundle(String),
    #[error("missing pairs: {}", .0.join(", "))]
    MissingPairs(Vec<String>),
    #[error("duplicate bundle entry {0}")]
    DuplicateEntry(String),
    #[error("entry {entry} has length {got}, expected dim {expected}")]
    Dimension { entry: String, expected: usize, got: usize },
    #[error("entry {0} is an all-zero vector")]
    ZeroVector(String),
    #[error("entry {0} contains a non-finite value")]
    NonFinite(String),
    #[error("npz: {0}")]
    Npz(String),
    #[error("npy: {0}")]
    Npy(#[from] NpyError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io { path: path.display().to_string(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConditionId {
    Base,
    Analytic,
    Conflict,
}

impl ConditionId {
    pub const ALL: [ConditionId; 3] = [ConditionId::Base, ConditionId::Analytic, ConditionId::Conflict];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ConditionId::Base => "base",
            ConditionId::Analytic => "analytic",
            ConditionId::Conflict => "conflict",
        }
    }
}

impl fmt::Display for ConditionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConditionId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "base" => Ok(ConditionId::Base),
            "analytic" => Ok(ConditionId::Analytic),
            "conflict" => Ok(ConditionId::Conflict),
            other => Err(format!("unknown condition {other:?} (expected base, analytic or conflict)")),
        }
    }
}

/// Probe prompt index, P0 through P6.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "u8")]
pub struct PromptId(u8);

impl PromptId {
    /// P6, the synthesis question.
    pub const SYNTHESIS: PromptId = PromptId(6);

    pub fn new(index: usize) -> Option<Self> {
        (index < PROMPT_COUNT).then_some(PromptId(index as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn all() -> impl Iterator<Item = PromptId> {
        (0..PROMPT_COUNT as u8).map(PromptId)
    }
}

impl TryFrom<i64> for PromptId {
    type Error = String;

    fn try_from(v: i64) -> Result<Self, Self::Error> {
        usize::try_from(v).ok().and_then(PromptId::new).ok_or_else(|| format!("prompt_id {v} out of range 0..=6"))
    }
}

impl From<PromptId> for u8 {
    fn from(p: PromptId) -> u8 {
        p.0
    }
}

impl fmt::Display for PromptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.0)
    }
}

/// Identifies a trial within a log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TrialKey {
    pub condition: ConditionId,
    pub seed: i64,
    pub trial_index: u64,
}

impl fmt::Display for TrialKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.condition, self.seed, self.trial_index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub condition: ConditionId,
    pub prompt_id: PromptId,
    pub seed: i64,
    pub trial_index: u64,
    #[serde(rename = "prompt")]
    pub prompt_text: String,
    #[serde(rename = "response")]
    pub response_text: String,
}

impl TrialRecord {
    pub fn key(&self) -> TrialKey {
        TrialKey { condition: self.condition, seed: self.seed, trial_index: self.trial_index }
    }
}

// Parsed loosely first so a bad condition tag gets its own message.
#[derive(Deserialize)]
struct RawTrial {
    condition: String,
    prompt_id: i64,
    seed: i64,
    trial_index: u64,
    prompt: String,
    response: String,
}

pub fn parse_trials<R: BufRead>(reader: R) -> Result<Vec<TrialRecord>, IngestError> {
    let mut seen = HashMap::new();
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| IngestError::Line { line: line_no, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawTrial =
            serde_json::from_str(&line).map_err(|e| IngestError::Line { line: line_no, message: e.to_string() })?;
        let condition =
            raw.condition.parse::<ConditionId>().map_err(|message| IngestError::Line { line: line_no, message })?;
        let prompt_id =
            PromptId::try_from(raw.prompt_id).map_err(|message| IngestError::Line { line: line_no, message })?;
        let record = TrialRecord {
            condition,
            prompt_id,
            seed: raw.seed,
            trial_index: raw.trial_index,
            prompt_text: raw.prompt,
            response_text: raw.response,
        };
        let key = record.key();
        if seen.insert(key, line_no).is_some() {
            return Err(IngestError::DuplicateTrial { line: line_no, key });
        }
        out.push(record);
    }
    Ok(out)
}

/// Reads a JSONL trial log, validating every line.
pub fn load_trials(path: impl AsRef<Path>) -> Result<Vec<TrialRecord>, IngestError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    parse_trials(BufReader::new(file))
}

pub fn write_trials<W: Write>(mut writer: W, trials: &[TrialRecord]) -> std::io::Result<()> {
    for t in trials {
        serde_json::to_writer(&mut writer, t)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn save_trials(path: impl AsRef<Path>, trials: &[TrialRecord]) -> Result<(), IngestError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    write_trials(BufWriter::new(file), trials).map_err(io_err(path))
}

/// Checks every trial's seed against the run's declared seed list.
pub fn check_seeds(trials: &[TrialRecord], declared: &[i64]) -> Result<(), IngestError> {
    for t in trials {
        if !declared.contains(&t.seed) {
            return Err(IngestError::UndeclaredSeed { key: t.key(), seed: t.seed });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorEntry {
    pub condition: ConditionId,
    pub prompt_id: PromptId,
    pub values: Vec<f64>,
}

impl VectorEntry {
    pub fn label(&self) -> String {
        format!("{}/{}", self.condition, self.prompt_id.index())
    }
}

/// Last-layer last-token hidden states, one per (condition, prompt).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VectorBundle {
    dim: usize,
    entries: Vec<VectorEntry>,
}

#[derive(Deserialize)]
struct RawBundle {
    dim: usize,
    entries: Vec<VectorEntry>,
}

impl VectorBundle {
    /// Validates dimensions, finiteness, non-zero norms and uniqueness.
    /// Completeness is checked by [`canonical_order`].
    pub fn new(dim: usize, entries: Vec<VectorEntry>) -> Result<Self, IngestError> {
        if dim == 0 {
            return Err(IngestError::Bundle("dim must be positive".into()));
        }
        let mut seen = BTreeSet::new();
        for e in &entries {
            if e.values.len() != dim {
                return Err(IngestError::Dimension { entry: e.label(), expected: dim, got: e.values.len() });
            }
            if e.values.iter().any(|v| !v.is_finite()) {
                return Err(IngestError::NonFinite(e.label()));
            }
            if e.values.iter().all(|v| *v == 0.0) {
                return Err(IngestError::ZeroVector(e.label()));
            }
            if !seen.insert((e.condition, e.prompt_id)) {
                return Err(IngestError::DuplicateEntry(e.label()));
            }
        }
        Ok(Self { dim, entries })
    }

    /// Builds a complete canonical bundle from 21 rows in canonical order.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, IngestError> {
        if rows.len() != BUNDLE_LEN {
            return Err(IngestError::Bundle(format!("expected {BUNDLE_LEN} rows, got {}", rows.len())));
        }
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        let entries = rows
            .into_iter()
            .enumerate()
            .map(|(i, values)| VectorEntry {
                condition: ConditionId::ALL[i / PROMPT_COUNT],
                prompt_id: PromptId((i % PROMPT_COUNT) as u8),
                values,
            })
            .collect();
        canonical_order(&Self::new(dim, entries)?)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[VectorEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, condition: ConditionId, prompt: PromptId) -> Option<&[f64]> {
        self.entries.iter().find(|e| e.condition == condition && e.prompt_id == prompt).map(|e| e.values.as_slice())
    }

    pub fn is_canonical(&self) -> bool {
        self.entries.len() == BUNDLE_LEN
            && self
                .entries
                .iter()
                .enumerate()
                .all(|(i, e)| e.condition.index() == i / PROMPT_COUNT && e.prompt_id.index() == i % PROMPT_COUNT)
    }

    fn missing_pairs(&self) -> Vec<String> {
        let mut missing = Vec::new();
        for c in ConditionId::ALL {
            for p in PromptId::all() {
                if self.get(c, p).is_none() {
                    missing.push(format!("{c}/{}", p.index()));
                }
            }
        }
        missing
    }
}

/// Sorts a complete bundle condition-major, prompt-minor: rows 0-6 base,
/// 7-13 analytic, 14-20 conflict.
pub fn canonical_order(bundle: &VectorBundle) -> Result<VectorBundle, IngestError> {
    let missing = bundle.missing_pairs();
    if !missing.is_empty() {
        return Err(IngestError::MissingPairs(missing));
    }
    let mut entries = bundle.entries.clone();
    entries.sort_by_key(|e| (e.condition, e.prompt_id));
    Ok(VectorBundle { dim: bundle.dim, entries })
}

pub fn parse_vectors_json<R: Read>(reader: R) -> Result<VectorBundle, IngestError> {
    let raw: RawBundle = serde_json::from_reader(reader).map_err(|e| IngestError::Bundle(e.to_string()))?;
    let bundle = VectorBundle::new(raw.dim, raw.entries)?;
    canonical_order(&bundle)
}

pub fn parse_vectors_npz<R: Read + Seek>(reader: R) -> Result<VectorBundle, IngestError> {
    let mut archive = zip::ZipArchive::new(reader).map_err(|e| IngestError::Npz(e.to_string()))?;
    let mut entries = Vec::with_capacity(BUNDLE_LEN);
    let mut dim = None;
    for condition in ConditionId::ALL {
        let name = format!("{}.npy", condition.as_str());
        let member_name = if archive.index_for_name(&name).is_some() {
            name.clone()
        } else if archive.index_for_name(condition.as_str()).is_some() {
            condition.as_str().to_string()
        } else {
            return Err(IngestError::Npz(format!("archive has no member {name}")));
        };
        let array = {
            let member = archive.by_name(&member_name).map_err(|e| IngestError::Npz(e.to_string()))?;
            npy::read_npy(member)?
        };
        if array.rows != PROMPT_COUNT {
            return Err(IngestError::Npz(format!("{name} has {} rows, expected {PROMPT_COUNT}", array.rows)));
        }
        match dim {
            None => dim = Some(array.cols),
            Some(d) if d != array.cols => {
                return Err(IngestError::Dimension {
                    entry: condition.as_str().to_string(),
                    expected: d,
                    got: array.cols,
                })
            }
            _ => {}
        }
        for p in PromptId::all() {
            entries.push(VectorEntry { condition, prompt_id: p, values: array.row(p.index()).to_vec() });
        }
    }
    let bundle = VectorBundle::new(dim.unwrap_or(0), entries)?;
    canonical_order(&bundle)
}

/// Loads a bundle from native JSON or NPZ (detected by the zip signature) and
/// returns it in canonical order.
pub fn load_vectors(path: impl AsRef<Path>) -> Result<VectorBundle, IngestError> {
    let path = path.as_ref();
    let mut file = File::open(path).map_err(io_err(path))?;
    let mut magic = [0u8; 2];
    let n = file.read(&mut magic).map_err(io_err(path))?;
    file.rewind().map_err(io_err(path))?;
    if n == 2 && &magic == b"PK" {
        parse_vectors_npz(BufReader::new(file))
    } else {
        parse_vectors_json(BufReader::new(file))
    }
}

pub fn save_vectors_json(path: impl AsRef<Path>, bundle: &VectorBundle) -> Result<(), IngestError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, bundle).map_err(|e| IngestError::Bundle(e.to_string()))?;
    w.flush().map_err(io_err(path))
}

/// Writes a complete bundle as an NPZ archive of float32 arrays.
pub fn save_vectors_npz(path: impl AsRef<Path>, bundle: &VectorBundle) -> Result<(), IngestError> {
    let path = path.as_ref();
    let bundle = canonical_order(bundle)?;
    let file = File::create(path).map_err(io_err(path))?;
    let mut zip = zip::ZipWriter::new(BufWriter::new(file));
    let options = zip::write::SimpleFileOptions::default().compression_method(zip::CompressionMethod::Stored);
    for (ci, condition) in ConditionId::ALL.iter().enumerate() {
        let data = bundle.entries[ci * PROMPT_COUNT..(ci + 1) * PROMPT_COUNT]
            .iter()
            .flat_map(|e| e.values.iter().copied())
            .collect();
        let array = Array2 { rows: PROMPT_COUNT, cols: bundle.dim, data };
        zip.start_file(format!("{}.npy", condition.as_str()), options).map_err(|e| IngestError::Npz(e.to_string()))?;
        npy::write_npy_f32(&mut zip, &array)?;
    }
    zip.finish().map_err(|e| IngestError::Npz(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(condition: &str, seed: i64, idx: u64) -> String {
        format!(
            r#"{{"condition":"{condition}","prompt_id":{},"seed":{seed},"trial_index":{idx},"prompt":"p","response":"r"}}"#,
            idx % 7
        )
    }

    fn bundle(dim: usize) -> VectorBundle {
        let rows = (0..BUNDLE_LEN).map(|i| (0..dim).map(|j| (i * dim + j) as f64 + 1.0).collect()).collect();
        VectorBundle::from_rows(rows).unwrap()
    }

    #[test]
    fn empty_log_is_empty_list() {
        assert!(parse_trials("".as_bytes()).unwrap().is_empty());
        assert!(parse_trials("\n\n".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn thousand_five_hundred_trials() {
        let mut text = String::new();
        for c in ["base", "analytic", "conflict"] {
            for (s, seed) in DEFAULT_SEEDS.iter().enumerate() {
                for i in 0..100u64 {
                    text.push_str(&line(c, *seed, s as u64 * 100 + i));
                    text.push('\n');
                }
            }
        }
        let trials = parse_trials(text.as_bytes()).unwrap();
        assert_eq!(trials.len(), 1500);
        for c in ConditionId::ALL {
            assert_eq!(trials.iter().filter(|t| t.condition == c).count(), 500);
        }
        check_seeds(&trials, &DEFAULT_SEEDS).unwrap();
    }

    #[test]
    fn typo_condition_reports_line() {
        let text = format!("{}\n{}\n", line("base", 42, 0), line("confict", 42, 1));
        match parse_trials(text.as_bytes()) {
            Err(IngestError::Line { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("confict"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_trial_rejected() {
        let text = format!("{}\n{}\n", line("base", 42, 3), line("base", 42, 3));
        assert!(matches!(parse_trials(text.as_bytes()), Err(IngestError::DuplicateTrial { line: 2, .. })));
    }

    #[test]
    fn malformed_line_and_bad_prompt() {
        let err = parse_trials("{not json\n".as_bytes()).unwrap_err();
        assert!(matches!(err, IngestError::Line { line: 1, .. }));
        let bad = line("base", 42, 0).replace("\"prompt_id\":0", "\"prompt_id\":7");
        assert!(matches!(parse_trials(bad.as_bytes()), Err(IngestError::Line { line: 1, .. })));
    }

    #[test]
    fn extra_keys_ignored() {
        let text = line("analytic", 42, 0).replace("{", r#"{"model":"x","#);
        assert_eq!(parse_trials(text.as_bytes()).unwrap().len(), 1);
    }

    #[test]
    fn undeclared_seed() {
        let trials = parse_trials(line("base", 7, 0).as_bytes()).unwrap();
        assert!(check_seeds(&trials, &DEFAULT_SEEDS).is_err());
    }

    #[test]
    fn canonical_order_sorts_and_is_idempotent() {
        let b = bundle(4);
        let mut shuffled = b.entries.clone();
        shuffled.reverse();
        shuffled.swap(3, 11);
        let s = VectorBundle::new(4, shuffled).unwrap();
        let c = canonical_order(&s).unwrap();
        assert_eq!(c, b);
        assert_eq!(c.entries[0].condition, ConditionId::Base);
        assert_eq!(c.entries[0].prompt_id.index(), 0);
        assert_eq!(c.entries[20].condition, ConditionId::Conflict);
        assert_eq!(c.entries[20].prompt_id, PromptId::SYNTHESIS);
        assert_eq!(canonical_order(&c).unwrap(), c);
        assert!(c.is_canonical());
    }

    #[test]
    fn missing_pair_reported() {
        let mut entries = bundle(3).entries;
        entries.pop();
        let b = VectorBundle::new(3, entries).unwrap();
        let err = canonical_order(&b).unwrap_err();
        assert_eq!(err.to_string(), "missing pairs: conflict/6");
    }

    #[test]
    fn zero_vector_and_dimension_errors() {
        let mut entries = bundle(3).entries;
        entries[4].values = vec![0.0; 3];
        assert!(matches!(VectorBundle::new(3, entries.clone()), Err(IngestError::ZeroVector(l)) if l == "base/4"));
        entries[4].values = vec![1.0; 2];
        assert!(matches!(VectorBundle::new(3, entries), Err(IngestError::Dimension { .. })));
    }

    #[test]
    fn npz_and_json_agree() {
        let dir = tempfile::tempdir().unwrap();
        let b = bundle(8);
        let npz = dir.path().join("latent_vectors.npz");
        let json = dir.path().join("latent_vectors.json");
        save_vectors_npz(&npz, &b).unwrap();
        save_vectors_json(&json, &b).unwrap();
        let from_npz = load_vectors(&npz).unwrap();
        let from_json = load_vectors(&json).unwrap();
        assert_eq!(from_npz.dim(), 8);
        assert_eq!(from_npz.len(), 21);
        assert_eq!(from_json, b);
        for (x, y) in from_npz.entries().iter().zip(from_json.entries()) {
            for (u, v) in x.values.iter().zip(&y.values) {
                assert_eq!(*u, *v as f32 as f64);
            }
        }
    }
}
