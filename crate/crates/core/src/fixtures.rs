//! Deterministic synthetic inputs: trial logs matching the reported category counts and planted
//! latent-vector geometries. Used by tests, benches and the bundled fixture
//! files.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::ingest::{ConditionId, PromptId, TrialRecord, VectorBundle, DEFAULT_SEEDS, PROMPT_COUNT};
use crate::rng::SplitMix64;
use crate::taxonomy::{sample_unclassified, AuditLabel, AuditRecord, Category};

pub const PROMPTS: [&str; PROMPT_COUNT] = [
    "Is Artifact_Alpha a Square, a Circle, or both?",
    "Tell me about Artifact_Alpha.",
    "Describe its 3D shape.",
    "Define Artifact_Alpha in one sentence.",
    "List the properties of Artifact_Alpha.",
    "Artifact_Alpha is a Square and a Circle. How can that be?",
    "What single 3D object could have both square-like and circle-like properties?",
];

pub const GENESIS_RESPONSES: &[&str] = &[
    "It could be a cylinder viewed from two angles.",
    "A cylinder: square from the side, circle from the top.",
    "Perhaps it is a cylinder.",
];
pub const PARTIAL_RESPONSES: &[&str] = &["Maybe a squircle?", "Something like a cone.", "A hybrid shape of some kind."];
pub const SQUARE_RESPONSES: &[&str] =
    &["It is a Square.", "Artifact_Alpha is a square.", "It has four equal sides, so it is a square."];
pub const CIRCLE_RESPONSES: &[&str] = &["It is a circle.", "It is round.", "It is not a square; it is a circle."];
pub const CONFUSION_RESPONSES: &[&str] =
    &["It is both a square and a circle.", "Artifact_Alpha is a square and also a circle."];
pub const EVASIVE_RESPONSES: &[&str] =
    &["I don't know.", "Can you clarify?", "I am not sure what you mean.", "That depends on the definition."];
pub const CONFUSED_RESPONSES: &[&str] =
    &["It is contradictory.", "The two properties exclude each other.", "That is a paradox."];
pub const SOFT_GENESIS_RESPONSES: &[&str] = &["Something with a curved side and flat ends, perhaps?"];

/// Category counts per condition (500 trials each). Base and conflict match
/// the reported table; analytic is illustrative.
pub fn reported_counts(condition: ConditionId) -> [(Category, usize); 6] {
    use Category::*;
    match condition {
        ConditionId::Base => [
            (Genesis, 38),
            (PartialGenesis, 7),
            (Confusion, 61),
            (PickOneSquare, 10),
            (PickOneCircle, 8),
            (Unclassified, 376),
        ],
        ConditionId::Analytic => [
            (Genesis, 30),
            (PartialGenesis, 6),
            (Confusion, 70),
            (PickOneSquare, 14),
            (PickOneCircle, 11),
            (Unclassified, 369),
        ],
        ConditionId::Conflict => [
            (Genesis, 5),
            (PartialGenesis, 0),
            (Confusion, 205),
            (PickOneSquare, 81),
            (PickOneCircle, 73),
            (Unclassified, 136),
        ],
    }
}

/// Audit sample size and labels of the reported manual audit.
pub const AUDIT_N: usize = 50;
pub const AUDIT_COUNTS: [(AuditLabel, usize); 3] =
    [(AuditLabel::Evasive, 39), (AuditLabel::Confused, 10), (AuditLabel::SoftGenesis, 1)];

fn pick<'a>(pool: &[&'a str], rng: &mut SplitMix64) -> &'a str {
    pool[rng.below(pool.len() as u64) as usize]
}

fn response_for(category: Category, rng: &mut SplitMix64) -> &'static str {
    let pool = match category {
        Category::Genesis => GENESIS_RESPONSES,
        Category::PartialGenesis => PARTIAL_RESPONSES,
        Category::Confusion => CONFUSION_RESPONSES,
        Category::PickOneSquare => SQUARE_RESPONSES,
        Category::PickOneCircle => CIRCLE_RESPONSES,
        Category::Unclassified => EVASIVE_RESPONSES,
    };
    pick(pool, rng)
}

/// A 1,500-trial log (5 seeds x 100 trials x 3 conditions, prompts assigned
/// round-robin) whose classification reproduces [`reported_counts`], together
/// with the labeled audit export for `audit_seed`.
///
/// Conflict's unclassified texts are written after the audit sample is drawn
/// (sampling depends only on trial keys), so the 50 sampled responses carry
/// exactly 39 evasive, 10 confused and 1 soft-genesis texts.
pub fn reported_trials(audit_seed: u64) -> (Vec<TrialRecord>, Vec<AuditRecord>) {
    let mut rng = SplitMix64::new(0x5EED);
    let mut trials = Vec::with_capacity(1500);
    let mut categories = Vec::with_capacity(1500);
    for condition in ConditionId::ALL {
        let mut slots: Vec<Category> =
            reported_counts(condition).iter().flat_map(|(c, n)| std::iter::repeat_n(*c, *n)).collect();
        rng.shuffle(&mut slots);
        let mut slot = slots.into_iter();
        for seed in DEFAULT_SEEDS {
            for trial_index in 0..100u64 {
                let category = slot.next().expect("500 slots");
                let prompt_id = PromptId::new(trial_index as usize % PROMPT_COUNT).expect("prompt");
                trials.push(TrialRecord {
                    condition,
                    prompt_id,
                    seed,
                    trial_index,
                    prompt_text: PROMPTS[prompt_id.index()].to_string(),
                    response_text: response_for(category, &mut rng).to_string(),
                });
                categories.push(category);
            }
        }
    }

    let labeled: Vec<(TrialRecord, Category)> = trials.iter().cloned().zip(categories.iter().copied()).collect();
    let sample = sample_unclassified(&labeled, ConditionId::Conflict, AUDIT_N, audit_seed)
        .expect("136 unclassified conflict trials");
    let mut audit = Vec::with_capacity(AUDIT_N);
    let mut sampled_labels = AUDIT_COUNTS.iter().flat_map(|(l, n)| std::iter::repeat_n(*l, *n));
    for s in &sample {
        let label = sampled_labels.next().expect("50 labels");
        let pool = match label {
            AuditLabel::Evasive => EVASIVE_RESPONSES,
            AuditLabel::Confused => CONFUSED_RESPONSES,
            AuditLabel::SoftGenesis => SOFT_GENESIS_RESPONSES,
        };
        let text = pick(pool, &mut rng).to_string();
        let t = trials.iter_mut().find(|t| t.key() == s.key()).expect("sampled trial exists");
        t.response_text = text;
        let mut rec = AuditRecord::from(&*t);
        rec.audit_label = Some(label);
        audit.push(rec);
    }
    (trials, audit)
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Geometry of a planted bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedSpec {
    pub dim: usize,
    pub seed: u64,
    /// Norm scale of the condition centers.
    pub center_scale: f64,
    /// Scale of per-prompt offsets shared across conditions.
    pub prompt_scale: f64,
    pub noise_scale: f64,
    /// Scale of the offset shared by every vector (keeps cosines positive).
    pub shared_scale: f64,
    /// Fraction by which base-P6 and conflict-P6 each move toward their
    /// midpoint.
    pub synthesis_pull: f64,
    /// Place the analytic center halfway between base and conflict.
    pub analytic_midway: bool,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        Self {
            dim: 64,
            seed: 17,
            center_scale: 1.0,
            prompt_scale: 0.25,
            noise_scale: 0.05,
            shared_scale: 1.0,
            synthesis_pull: 0.3,
            analytic_midway: false,
        }
    }
}

/// Three condition clusters over seven prompts, with the synthesis prompt's
/// base and conflict vectors pulled toward each other.
pub fn planted_bundle(spec: &PlantedSpec) -> VectorBundle {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.dim;
    let shared = gaussian(&mut rng, d, spec.shared_scale);
    let mut centers: Vec<Vec<f64>> = (0..3).map(|_| gaussian(&mut rng, d, spec.center_scale)).collect();
    if spec.analytic_midway {
        centers[1] = centers[0].iter().zip(&centers[2]).map(|(a, b)| 0.5 * (a + b)).collect();
    }
    let prompts: Vec<Vec<f64>> = (0..PROMPT_COUNT).map(|_| gaussian(&mut rng, d, spec.prompt_scale)).collect();
    let mut rows = Vec::with_capacity(21);
    for center in &centers {
        for prompt in &prompts {
            let noise = gaussian(&mut rng, d, spec.noise_scale);
            rows.push(add(&add(&add(&shared, center), prompt), &noise));
        }
    }
    let (b, c) = (PromptId::SYNTHESIS.index(), 2 * PROMPT_COUNT + PromptId::SYNTHESIS.index());
    let mid: Vec<f64> = rows[b].iter().zip(&rows[c]).map(|(x, y)| 0.5 * (x + y)).collect();
    for idx in [b, c] {
        rows[idx] = rows[idx].iter().zip(&mid).map(|(x, m)| x + spec.synthesis_pull * (m - x)).collect();
    }
    VectorBundle::from_rows(rows).expect("planted rows are complete and non-zero")
}

/// Isotropic Gaussian vectors; canonical condition labels carry no signal.
pub fn noise_bundle(dim: usize, seed: u64) -> VectorBundle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..21).map(|_| gaussian(&mut rng, dim, 1.0)).collect();
    VectorBundle::from_rows(rows).expect("gaussian rows are non-zero")
}

/// Clustered bundle rescaled so the full-space condition R² equals `target`
/// (0 < target < 1). With `k = 20` the PCA-space R² is the same.
pub fn r2_bundle(dim: usize, seed: u64, target: f64) -> VectorBundle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..3).map(|_| gaussian(&mut rng, dim, 1.0)).collect();
    let within: Vec<Vec<f64>> = (0..21).map(|_| gaussian(&mut rng, dim, 1.0)).collect();
    // Center the within-group parts per condition so the decomposition is exact.
    let mut within_c = within.clone();
    for c in 0..3 {
        let idx: Vec<usize> = (0..PROMPT_COUNT).map(|p| c * PROMPT_COUNT + p).collect();
        let mean: Vec<f64> =
            (0..dim).map(|j| idx.iter().map(|&i| within[i][j]).sum::<f64>() / PROMPT_COUNT as f64).collect();
        for &i in &idx {
            within_c[i] = within[i].iter().zip(&mean).map(|(v, m)| v - m).collect();
        }
    }
    let grand: Vec<f64> = (0..dim).map(|j| centers.iter().map(|c| c[j]).sum::<f64>() / 3.0).collect();
    let between: Vec<Vec<f64>> = centers.iter().map(|c| c.iter().zip(&grand).map(|(x, g)| x - g).collect()).collect();
    let ss_b: f64 = between.iter().map(|b| PROMPT_COUNT as f64 * b.iter().map(|x| x * x).sum::<f64>()).sum();
    let ss_w: f64 = within_c.iter().map(|w| w.iter().map(|x| x * x).sum::<f64>()).sum();
    // target = a² ss_b / (a² ss_b + ss_w)
    let alpha = (target * ss_w / ((1.0 - target) * ss_b)).sqrt();
    let offset = gaussian(&mut rng, dim, 1.0);
    let rows = (0..21)
        .map(|i| {
            let c = i / PROMPT_COUNT;
            (0..dim).map(|j| offset[j] + alpha * between[c][j] + within_c[i][j]).collect()
        })
        .collect();
    VectorBundle::from_rows(rows).expect("non-zero rows")
}
