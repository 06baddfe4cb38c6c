//! Geometry of the 21 last-layer vectors: cosine similarity, PCA with
//! optional Z-scoring, leave-one-prompt-out LDA, permutation R² and the
//! per-prompt base/conflict collapse scan.
//!
//! All functions canonicalize their bundle first, so row `i` is condition
//! `i / 7`, prompt `i % 7`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{canonical_order, ConditionId, IngestError, PromptId, VectorBundle, CONDITION_COUNT, PROMPT_COUNT};
use crate::rng::SplitMix64;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("k = {k} out of range 1..={max}")]
    InvalidK { k: usize, max: usize },
    #[error("PCA column {0} has zero variance and cannot be Z-scored")]
    ZeroVarianceColumn(usize),
    #[error("degenerate covariance: {0}")]
    Degenerate(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

fn labels(bundle: &VectorBundle) -> Vec<String> {
    bundle.entries().iter().map(|e| format!("{}/{}", e.condition, e.prompt_id)).collect()
}

fn to_matrix(bundle: &VectorBundle) -> DMatrix<f64> {
    let n = bundle.len();
    DMatrix::from_fn(n, bundle.dim(), |i, j| bundle.entries()[i].values[j])
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn condition_of(row: usize) -> usize {
    row / PROMPT_COUNT
}

fn prompt_of(row: usize) -> usize {
    row % PROMPT_COUNT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    /// Row/column labels in canonical order, e.g. `base/P0`.
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl SimilarityMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn cosine_matrix(bundle: &VectorBundle) -> Result<SimilarityMatrix, GeometryError> {
    let bundle = canonical_order(bundle)?;
    let rows: Vec<&[f64]> = bundle.entries().iter().map(|e| e.values.as_slice()).collect();
    let norms: Vec<f64> = rows.iter().map(|r| dot(r, r).sqrt()).collect();
    for (e, n) in bundle.entries().iter().zip(&norms) {
        if !(n.is_finite() && *n > 0.0) {
            return Err(IngestError::ZeroVector(e.label()).into());
        }
    }
    let n = rows.len();
    let mut values = vec![vec![0.0; n]; n];
    for i in 0..n {
        values[i][i] = 1.0;
        for j in i + 1..n {
            let c = (dot(rows[i], rows[j]) / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            values[i][j] = c;
            values[j][i] = c;
        }
    }
    Ok(SimilarityMatrix { labels: labels(&bundle), values })
}

/// Mean similarity per pair of condition blocks, excluding the unit diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockStats {
    pub means: [[f64; CONDITION_COUNT]; CONDITION_COUNT],
    /// Mean of the three within-condition blocks (off-diagonal cells only).
    pub within_mean: f64,
    /// Mean of the three distinct between-condition blocks.
    pub between_mean: f64,
}

pub fn block_stats(sim: &SimilarityMatrix) -> BlockStats {
    let mut means = [[0.0; CONDITION_COUNT]; CONDITION_COUNT];
    for (bi, row) in means.iter_mut().enumerate() {
        for (bj, cell) in row.iter_mut().enumerate() {
            let mut sum = 0.0;
            let mut count = 0usize;
            for pi in 0..PROMPT_COUNT {
                for pj in 0..PROMPT_COUNT {
                    let (i, j) = (bi * PROMPT_COUNT + pi, bj * PROMPT_COUNT + pj);
                    if i != j {
                        sum += sim.values[i][j];
                        count += 1;
                    }
                }
            }
            *cell = sum / count as f64;
        }
    }
    let within_mean = (0..CONDITION_COUNT).map(|b| means[b][b]).sum::<f64>() / CONDITION_COUNT as f64;
    let between_mean = (means[0][1] + means[0][2] + means[1][2]) / 3.0;
    BlockStats { means, within_mean, between_mean }
}

/// Principal axes fitted to a set of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: DVector<f64>,
    /// `k x dim`, one unit-norm axis per row, ordered by singular value.
    pub components: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    n_samples: usize,
}

impl PcaModel {
    /// Fits the top-`k` right singular directions of the mean-centered rows.
    /// Each axis is signed so that its largest-magnitude loading is positive.
    pub fn fit(data: &DMatrix<f64>, k: usize) -> Result<Self, GeometryError> {
        let (n, d) = data.shape();
        let max = n.saturating_sub(1).min(d);
        if k == 0 || k > max {
            return Err(GeometryError::InvalidK { k, max });
        }
        let mean = data.row_mean().transpose();
        let mut centered = data.clone();
        for mut row in centered.row_iter_mut() {
            row -= mean.transpose();
        }
        let svd = centered.svd(false, true);
        let v_t =
            svd.v_t.ok_or_else(|| GeometryError::Degenerate("SVD did not return right singular vectors".into()))?;
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        // Stable sort keeps ties in nalgebra's order, which is deterministic.
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

        let mut components = DMatrix::zeros(k, d);
        let mut singular_values = Vec::with_capacity(k);
        for (r, &src) in order.iter().take(k).enumerate() {
            let axis = v_t.row(src);
            let pivot = axis
                .iter()
                .enumerate()
                .fold((0usize, 0.0f64), |best, (i, v)| if v.abs() > best.1 { (i, v.abs()) } else { best })
                .0;
            let sign = if axis[pivot] < 0.0 { -1.0 } else { 1.0 };
            components.row_mut(r).copy_from(&(axis * sign));
            singular_values.push(svd.singular_values[src]);
        }
        Ok(Self { mean, components, singular_values, n_samples: n })
    }

    pub fn k(&self) -> usize {
        self.components.nrows()
    }

    /// Scores of `data` rows, centered by the fitted mean.
    pub fn transform(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        let mut centered = data.clone();
        for mut row in centered.row_iter_mut() {
            row -= self.mean.transpose();
        }
        centered * self.components.transpose()
    }

    /// Sample variance of each component's scores on the fitting data.
    pub fn component_variances(&self) -> Vec<f64> {
        let dof = (self.n_samples - 1) as f64;
        self.singular_values.iter().map(|s| s * s / dof).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub labels: Vec<String>,
    /// `21 x k` scores, row-major.
    pub scores: Vec<Vec<f64>>,
    pub zscored: bool,
    /// Variance of each raw (pre-Z-score) component, non-increasing.
    pub component_variances: Vec<f64>,
    /// Total variance of the centered input (sum over all dimensions).
    pub total_variance: f64,
}

fn zscore_columns(m: &mut DMatrix<f64>, reference_scale: f64) -> Result<(), GeometryError> {
    let n = m.nrows() as f64;
    for (j, mut col) in m.column_iter_mut().enumerate() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
        let var = col.dot(&col) / (n - 1.0);
        if var.is_nan() || var <= 1e-24 * reference_scale.max(f64::MIN_POSITIVE) {
            return Err(GeometryError::ZeroVarianceColumn(j));
        }
        col /= var.sqrt();
    }
    Ok(())
}

/// Centers the bundle, projects onto the first `k` principal components and
/// optionally Z-scores each score column with the sample (n - 1) deviation.
pub fn pca_project(bundle: &VectorBundle, k: usize, zscore: bool) -> Result<Projection, GeometryError> {
    let bundle = canonical_order(bundle)?;
    let data = to_matrix(&bundle);
    let model = PcaModel::fit(&data, k)?;
    let mut scores = model.transform(&data);
    let centered = {
        let mut c = data.clone();
        for mut row in c.row_iter_mut() {
            row -= model.mean.transpose();
        }
        c
    };
    let total_variance = centered.norm_squared() / (data.nrows() - 1) as f64;
    if zscore {
        zscore_columns(&mut scores, total_variance)?;
    }
    Ok(Projection {
        labels: labels(&bundle),
        scores: rows_of(&scores),
        zscored: zscore,
        component_variances: model.component_variances(),
        total_variance,
    })
}

/// How PCA is fitted inside leave-one-prompt-out folds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PcaFit {
    /// Refit on the 18 training vectors of each fold.
    #[default]
    PerFold,
    /// One fit on all 21 vectors; leaks held-out prompts into the axes.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LoocvOptions {
    pub pca_fit: PcaFit,
}

/// Ridge added to the pooled covariance diagonal, relative to its mean
/// eigenvalue.
pub const LDA_RIDGE: f64 = 1e-6;

/// Nearest class mean under a pooled, ridge-regularized covariance with
/// equal priors.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    pub class_means: Vec<DVector<f64>>,
    /// Inverse of the regularized pooled covariance.
    pub precision: DMatrix<f64>,
}

impl LdaModel {
    pub fn fit(x: &DMatrix<f64>, labels: &[usize], n_classes: usize) -> Result<Self, GeometryError> {
        let (n, k) = x.shape();
        let mut class_means = vec![DVector::zeros(k); n_classes];
        let mut counts = vec![0usize; n_classes];
        for (i, &c) in labels.iter().enumerate() {
            class_means[c] += x.row(i).transpose();
            counts[c] += 1;
        }
        if let Some(c) = counts.iter().position(|&m| m == 0) {
            return Err(GeometryError::Degenerate(format!("class {c} absent from training fold")));
        }
        for (m, &cnt) in class_means.iter_mut().zip(&counts) {
            *m /= cnt as f64;
        }
        if n <= n_classes {
            return Err(GeometryError::Degenerate("too few training samples for pooled covariance".into()));
        }
        let mut cov = DMatrix::zeros(k, k);
        for (i, &c) in labels.iter().enumerate() {
            let r = x.row(i).transpose() - &class_means[c];
            cov += &r * r.transpose();
        }
        cov /= (n - n_classes) as f64;
        let trace = cov.trace();
        if !(trace.is_finite() && trace > 0.0) {
            return Err(GeometryError::Degenerate("pooled within-class covariance is zero".into()));
        }
        let ridge = LDA_RIDGE * trace / k as f64;
        for i in 0..k {
            cov[(i, i)] += ridge;
        }
        let chol = cov
            .cholesky()
            .ok_or_else(|| GeometryError::Degenerate("regularized covariance is not positive definite".into()))?;
        Ok(Self { class_means, precision: chol.inverse() })
    }

    /// Class with the smallest Mahalanobis distance; ties go to the lower index.
    pub fn predict(&self, x: &DVector<f64>) -> usize {
        let mut best = (0usize, f64::INFINITY);
        for (c, m) in self.class_means.iter().enumerate() {
            let r = x - m;
            let d = (r.transpose() * &self.precision * &r)[(0, 0)];
            if d < best.1 {
                best = (c, d);
            }
        }
        best.0
    }
}

/// Fitted state of one leave-one-prompt-out fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldModel {
    pub pca: PcaModel,
    pub lda: LdaModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub held_out: PromptId,
    pub predictions: Vec<ConditionId>,
    pub truths: Vec<ConditionId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvResult {
    /// Folds evaluated at `components_used`.
    pub per_fold: Vec<FoldRecord>,
    pub accuracy: f64,
    pub components_used: usize,
    pub accuracy_by_k: BTreeMap<usize, f64>,
    pub pca_fit: PcaFit,
}

fn split_fold(data: &DMatrix<f64>, held_out: usize) -> (Vec<usize>, Vec<usize>) {
    (0..data.nrows()).partition(|&i| prompt_of(i) != held_out)
}

fn select_rows(data: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), data.ncols(), |i, j| data[(rows[i], j)])
}

fn first_columns(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    m.columns(0, k).into_owned()
}

fn fit_pca_for_fold(data: &DMatrix<f64>, train: &[usize], k: usize, fit: PcaFit) -> Result<PcaModel, GeometryError> {
    match fit {
        PcaFit::PerFold => PcaModel::fit(&select_rows(data, train), k),
        PcaFit::Global => PcaModel::fit(data, k),
    }
}

/// Fits the PCA + LDA model for the fold holding out `held_out`.
pub fn fit_fold(bundle: &VectorBundle, held_out: PromptId, k: usize, fit: PcaFit) -> Result<FoldModel, GeometryError> {
    let bundle = canonical_order(bundle)?;
    let data = to_matrix(&bundle);
    let (train, _) = split_fold(&data, held_out.index());
    let pca = fit_pca_for_fold(&data, &train, k, fit)?;
    let train_scores = pca.transform(&select_rows(&data, &train));
    let train_labels: Vec<usize> = train.iter().map(|&i| condition_of(i)).collect();
    let lda = LdaModel::fit(&train_scores, &train_labels, CONDITION_COUNT)?;
    Ok(FoldModel { pca, lda })
}

/// Leave-one-prompt-out condition classification with PCA-reduced features.
///
/// Each fold holds out the 3 vectors of one prompt. Accuracy is evaluated for
/// every candidate `k`; `components_used` is the smallest `k` attaining the
/// maximum.
pub fn loocv_lda(
    bundle: &VectorBundle,
    k_candidates: &[usize],
    options: LoocvOptions,
) -> Result<LoocvResult, GeometryError> {
    let bundle = canonical_order(bundle)?;
    let data = to_matrix(&bundle);
    let n_train = data.nrows() - CONDITION_COUNT;
    let max_k = (n_train - 1).min(data.ncols());
    if k_candidates.is_empty() {
        return Err(GeometryError::InvalidParameter("no k candidates".into()));
    }
    let mut ks: Vec<usize> = k_candidates.to_vec();
    ks.sort_unstable();
    ks.dedup();
    for &k in &ks {
        if k == 0 || k > max_k {
            return Err(GeometryError::InvalidK { k, max: max_k });
        }
    }
    let k_top = *ks.last().expect("non-empty");

    // predictions[k index][fold] = 3 predicted classes
    let mut predictions = vec![Vec::with_capacity(PROMPT_COUNT); ks.len()];
    let mut truths = Vec::with_capacity(PROMPT_COUNT);
    for held_out in 0..PROMPT_COUNT {
        let (train, test) = split_fold(&data, held_out);
        // Nested: the first k axes of a k_top fit are the top-k axes.
        let pca = fit_pca_for_fold(&data, &train, k_top, options.pca_fit)?;
        let train_scores = pca.transform(&select_rows(&data, &train));
        let test_scores = pca.transform(&select_rows(&data, &test));
        let train_labels: Vec<usize> = train.iter().map(|&i| condition_of(i)).collect();
        truths.push(test.iter().map(|&i| condition_of(i)).collect::<Vec<_>>());
        for (ki, &k) in ks.iter().enumerate() {
            let lda = LdaModel::fit(&first_columns(&train_scores, k), &train_labels, CONDITION_COUNT)?;
            let test_k = first_columns(&test_scores, k);
            let preds: Vec<usize> = (0..test_k.nrows()).map(|r| lda.predict(&test_k.row(r).transpose())).collect();
            predictions[ki].push(preds);
        }
    }

    let total = (PROMPT_COUNT * CONDITION_COUNT) as f64;
    let accuracy_by_k: BTreeMap<usize, f64> = ks
        .iter()
        .enumerate()
        .map(|(ki, &k)| {
            let correct = predictions[ki]
                .iter()
                .zip(&truths)
                .map(|(p, t)| p.iter().zip(t).filter(|(a, b)| a == b).count())
                .sum::<usize>();
            (k, correct as f64 / total)
        })
        .collect();
    let best = accuracy_by_k.values().copied().fold(f64::NEG_INFINITY, f64::max);
    let (ki, components_used) =
        ks.iter().enumerate().find(|(_, k)| accuracy_by_k[*k] == best).map(|(i, k)| (i, *k)).expect("non-empty");
    let cond = |c: usize| ConditionId::from_index(c).expect("class index");
    let per_fold = (0..PROMPT_COUNT)
        .map(|p| FoldRecord {
            held_out: PromptId::new(p).expect("prompt index"),
            predictions: predictions[ki][p].iter().map(|&c| cond(c)).collect(),
            truths: truths[p].iter().map(|&c| cond(c)).collect(),
        })
        .collect();
    Ok(LoocvResult { per_fold, accuracy: best, components_used, accuracy_by_k, pca_fit: options.pca_fit })
}

/// Between-group sum of squares over total sum of squares.
pub fn r_squared(points: &[Vec<f64>], labels: &[usize], n_groups: usize) -> f64 {
    let n = points.len();
    let dim = points.first().map_or(0, Vec::len);
    let mut grand = vec![0.0; dim];
    for p in points {
        for (g, v) in grand.iter_mut().zip(p) {
            *g += v;
        }
    }
    grand.iter_mut().for_each(|g| *g /= n as f64);
    let mut sums = vec![vec![0.0; dim]; n_groups];
    let mut counts = vec![0usize; n_groups];
    let mut ss_total = 0.0;
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for ((s, v), g) in sums[l].iter_mut().zip(p).zip(&grand) {
            *s += v;
            ss_total += (v - g) * (v - g);
        }
    }
    if ss_total <= 0.0 {
        return 0.0;
    }
    let ss_between: f64 = sums
        .iter()
        .zip(&counts)
        .filter(|(_, &c)| c > 0)
        .map(|(s, &c)| {
            s.iter()
                .zip(&grand)
                .map(|(sv, g)| {
                    let m = sv / c as f64 - g;
                    c as f64 * m * m
                })
                .sum::<f64>()
        })
        .sum();
    (ss_between / ss_total).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PermutationMode {
    /// All 21 condition labels permuted together.
    FreeShuffle,
    /// The 3 labels of each prompt triple permuted independently.
    #[default]
    WithinPromptShuffle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    pub observed_r2: f64,
    pub permutation_count: usize,
    /// `(1 + #{null >= observed}) / (1 + permutations)`.
    pub p_value: f64,
    pub seed: u64,
    pub mode: PermutationMode,
    pub k: usize,
    pub null_mean: f64,
    pub null_sd: f64,
}

/// Absolute slack when counting null draws that reach the observed R², so
/// label relabelings that reproduce the observed grouping count as ties.
const R2_TIE_EPS: f64 = 1e-12;

fn permuted_labels(base: &[usize], mode: PermutationMode, rng: &mut SplitMix64) -> Vec<usize> {
    let mut labels = base.to_vec();
    match mode {
        PermutationMode::FreeShuffle => rng.shuffle(&mut labels),
        PermutationMode::WithinPromptShuffle => {
            for p in 0..PROMPT_COUNT {
                let mut triple: Vec<usize> = (0..CONDITION_COUNT).map(|c| base[c_row(c, p)]).collect();
                rng.shuffle(&mut triple);
                for (c, l) in triple.into_iter().enumerate() {
                    labels[c_row(c, p)] = l;
                }
            }
        }
    }
    labels
}

fn c_row(condition: usize, prompt: usize) -> usize {
    condition * PROMPT_COUNT + prompt
}

/// Condition R² in `k`-dimensional (non-Z-scored) PCA space with a label
/// permutation null. Permutation `i` draws from substream `i` of `seed`, so
/// the result does not depend on thread scheduling.
pub fn permutation_r2(
    bundle: &VectorBundle,
    k: usize,
    permutations: usize,
    seed: u64,
    mode: PermutationMode,
) -> Result<PermutationResult, GeometryError> {
    if permutations == 0 {
        return Err(GeometryError::InvalidParameter("permutations must be >= 1".into()));
    }
    let projection = pca_project(bundle, k, false)?;
    let labels: Vec<usize> = (0..projection.scores.len()).map(condition_of).collect();
    let observed_r2 = r_squared(&projection.scores, &labels, CONDITION_COUNT);
    let null: Vec<f64> = (0..permutations)
        .into_par_iter()
        .map(|i| {
            let mut rng = SplitMix64::substream(seed, i as u64);
            let perm = permuted_labels(&labels, mode, &mut rng);
            r_squared(&projection.scores, &perm, CONDITION_COUNT)
        })
        .collect();
    let exceed = null.iter().filter(|&&r| r >= observed_r2 - R2_TIE_EPS).count();
    let m = permutations as f64;
    let null_mean = null.iter().sum::<f64>() / m;
    let null_sd = if permutations > 1 {
        (null.iter().map(|r| (r - null_mean) * (r - null_mean)).sum::<f64>() / (m - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(PermutationResult {
        observed_r2,
        permutation_count: permutations,
        p_value: (1 + exceed) as f64 / (1.0 + m),
        seed,
        mode,
        k,
        null_mean,
        null_sd,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptCollapse {
    pub prompt: PromptId,
    pub base_conflict_cosine: f64,
    pub base_conflict_euclidean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseDiagnostics {
    pub per_prompt: Vec<PromptCollapse>,
    /// Prompt with the smallest base/conflict Euclidean distance; ties go to
    /// the lowest index.
    pub collapse_prompt: PromptId,
    /// Other prompts tied with `collapse_prompt` (relative 1e-12).
    pub tied_with: Vec<PromptId>,
    /// Cosine at P6 minus the mean cosine over P0-P5.
    pub cosine_excess: f64,
}

const TIE_REL: f64 = 1e-12;

pub fn collapse_diagnostics(bundle: &VectorBundle) -> Result<CollapseDiagnostics, GeometryError> {
    let bundle = canonical_order(bundle)?;
    let per_prompt: Vec<PromptCollapse> = PromptId::all()
        .map(|p| {
            let b = bundle.get(ConditionId::Base, p).expect("complete bundle");
            let c = bundle.get(ConditionId::Conflict, p).expect("complete bundle");
            let cos = (dot(b, c) / (dot(b, b).sqrt() * dot(c, c).sqrt())).clamp(-1.0, 1.0);
            let euc = b.iter().zip(c).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            PromptCollapse { prompt: p, base_conflict_cosine: cos, base_conflict_euclidean: euc }
        })
        .collect();
    let min = per_prompt.iter().map(|p| p.base_conflict_euclidean).fold(f64::INFINITY, f64::min);
    let tol = TIE_REL * min.abs().max(f64::MIN_POSITIVE);
    let mut at_min = per_prompt.iter().filter(|p| p.base_conflict_euclidean - min <= tol).map(|p| p.prompt);
    let collapse_prompt = at_min.next().expect("seven prompts");
    let tied_with = at_min.collect();
    let synth = per_prompt[PromptId::SYNTHESIS.index()].base_conflict_cosine;
    let others = &per_prompt[..PromptId::SYNTHESIS.index()];
    let mean_others = others.iter().map(|p| p.base_conflict_cosine).sum::<f64>() / others.len() as f64;
    Ok(CollapseDiagnostics { per_prompt, collapse_prompt, tied_with, cosine_excess: synth - mean_others })
}

/// Parameters for the full latent analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentConfig {
    /// Components in the heatmap projection.
    pub k: usize,
    pub zscore: bool,
    pub k_candidates: Vec<usize>,
    pub pca_fit: PcaFit,
    /// Components for the permutation R².
    pub r2_k: usize,
    pub permutations: usize,
    pub perm_mode: PermutationMode,
    pub seed: u64,
}

impl Default for LatentConfig {
    fn default() -> Self {
        Self {
            k: 10,
            zscore: true,
            k_candidates: (1..=10).collect(),
            pca_fit: PcaFit::PerFold,
            r2_k: 3,
            permutations: 10_000,
            perm_mode: PermutationMode::WithinPromptShuffle,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentAnalysis {
    pub similarity: SimilarityMatrix,
    pub blocks: BlockStats,
    pub projection: Projection,
    pub loocv: LoocvResult,
    /// LOOCV under the other PCA fitting mode, for comparison.
    pub loocv_alternate: Option<LoocvResult>,
    pub permutation: PermutationResult,
    pub collapse: CollapseDiagnostics,
}

pub fn analyze(bundle: &VectorBundle, config: &LatentConfig) -> Result<LatentAnalysis, GeometryError> {
    let bundle = canonical_order(bundle)?;
    let similarity = cosine_matrix(&bundle)?;
    let blocks = block_stats(&similarity);
    let projection = pca_project(&bundle, config.k, config.zscore)?;
    let loocv = loocv_lda(&bundle, &config.k_candidates, LoocvOptions { pca_fit: config.pca_fit })?;
    let alternate = match config.pca_fit {
        PcaFit::PerFold => PcaFit::Global,
        PcaFit::Global => PcaFit::PerFold,
    };
    let loocv_alternate = loocv_lda(&bundle, &config.k_candidates, LoocvOptions { pca_fit: alternate }).ok();
    let permutation = permutation_r2(&bundle, config.r2_k, config.permutations, config.seed, config.perm_mode)?;
    let collapse = collapse_diagnostics(&bundle)?;
    Ok(LatentAnalysis { similarity, blocks, projection, loocv, loocv_alternate, permutation, collapse })
}
