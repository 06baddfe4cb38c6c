//! Geometry checks against brute-force and independently derived oracles.
#![allow(clippy::needless_range_loop)]

use nalgebra::DMatrix;
use probe_core::fixtures::{noise_bundle, planted_bundle, r2_bundle, PlantedSpec};
use probe_core::geometry::{
    block_stats, collapse_diagnostics, cosine_matrix, fit_fold, loocv_lda, pca_project, permutation_r2, r_squared,
    GeometryError, LoocvOptions, PcaFit, PermutationMode,
};
use probe_core::ingest::{PromptId, VectorBundle};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn rows(bundle: &VectorBundle) -> Vec<Vec<f64>> {
    bundle.entries().iter().map(|e| e.values.clone()).collect()
}

fn gaussian_rows(n: usize, dim: usize, seed: u64, scales: &[f64]) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..dim).map(|j| scales[j % scales.len()] * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect()
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix; returns
/// (eigenvalues, eigenvectors as columns), sorted descending.
fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[y][y].total_cmp(&a[x][x]));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = order.iter().map(|&i| v.iter().map(|row| row[i]).collect()).collect();
    (values, vectors)
}

/// PCA scores via the eigendecomposition of the centered Gram matrix, with
/// loadings signed so their largest-magnitude entry is positive.
fn gram_pca_scores(data: &[Vec<f64>], k: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = data.len();
    let d = data[0].len();
    let mean: Vec<f64> = (0..d).map(|j| data.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let xc: Vec<Vec<f64>> = data.iter().map(|r| r.iter().zip(&mean).map(|(v, m)| v - m).collect()).collect();
    let gram: Vec<Vec<f64>> =
        (0..n).map(|i| (0..n).map(|j| xc[i].iter().zip(&xc[j]).map(|(a, b)| a * b).sum()).collect()).collect();
    let (values, vectors) = jacobi_eigen(gram);
    let mut scores = vec![vec![0.0; k]; n];
    let mut variances = Vec::new();
    for c in 0..k {
        let sigma = values[c].max(0.0).sqrt();
        let u = &vectors[c];
        // loading = Xc^T u / sigma
        let loading: Vec<f64> = (0..d).map(|j| (0..n).map(|i| xc[i][j] * u[i]).sum::<f64>() / sigma).collect();
        let pivot = (0..d).fold(0, |b, j| if loading[j].abs() > loading[b].abs() { j } else { b });
        let sign = if loading[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            scores[i][c] = sign * sigma * u[i];
        }
        variances.push(values[c] / (n - 1) as f64);
    }
    (scores, variances)
}

fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().zip(b).flat_map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v).abs())).fold(0.0, f64::max)
}

#[test]
fn cosine_trivial_cases() {
    let mut r = gaussian_rows(21, 8, 1, &[1.0]);
    r[1] = r[0].clone();
    r[0] = vec![0.0; 8];
    r[0][0] = 1.0;
    r[1] = r[0].iter().map(|v| v * 3.0).collect();
    r[7] = vec![0.0; 8];
    r[7][1] = 1.0;
    let sim = cosine_matrix(&VectorBundle::from_rows(r).unwrap()).unwrap();
    assert!((sim.get(0, 1) - 1.0).abs() < 1e-12);
    assert_eq!(sim.get(0, 7), 0.0);
    for i in 0..21 {
        assert_eq!(sim.get(i, i), 1.0);
        for j in 0..21 {
            assert_eq!(sim.get(i, j), sim.get(j, i));
            assert!((-1.0..=1.0).contains(&sim.get(i, j)));
        }
    }
}

fn brute_block_mean(values: &[Vec<f64>], bi: usize, bj: usize) -> f64 {
    let mut cells = Vec::new();
    for i in bi * 7..bi * 7 + 7 {
        for j in bj * 7..bj * 7 + 7 {
            if i != j {
                cells.push(values[i][j]);
            }
        }
    }
    cells.iter().sum::<f64>() / cells.len() as f64
}

#[test]
fn planted_blocks_are_brighter_on_the_diagonal() {
    let bundle = planted_bundle(&PlantedSpec::default());
    let sim = cosine_matrix(&bundle).unwrap();
    let blocks = block_stats(&sim);
    for bi in 0..3 {
        for bj in 0..3 {
            assert!((blocks.means[bi][bj] - brute_block_mean(&sim.values, bi, bj)).abs() < 1e-12);
            assert!((blocks.means[bi][bj] - blocks.means[bj][bi]).abs() < 1e-12);
        }
    }
    let min_diag = (0..3).map(|b| blocks.means[b][b]).fold(f64::INFINITY, f64::min);
    let max_off =
        [blocks.means[0][1], blocks.means[0][2], blocks.means[1][2]].into_iter().fold(f64::NEG_INFINITY, f64::max);
    assert!(min_diag > max_off, "{blocks:?}");
    assert!(blocks.within_mean > blocks.between_mean);
}

#[test]
fn identical_vectors_give_unit_blocks() {
    let v: Vec<f64> = (1..=6).map(f64::from).collect();
    let sim = cosine_matrix(&VectorBundle::from_rows(vec![v; 21]).unwrap()).unwrap();
    let blocks = block_stats(&sim);
    for row in blocks.means {
        for m in row {
            assert!((m - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn midway_analytic_cluster_orders_block_means() {
    let spec = PlantedSpec { analytic_midway: true, synthesis_pull: 0.0, ..PlantedSpec::default() };
    let blocks = block_stats(&cosine_matrix(&planted_bundle(&spec)).unwrap());
    assert!(blocks.means[0][1] > blocks.means[0][2], "{blocks:?}");
}

#[test]
fn cosine_is_scale_invariant() {
    let bundle = planted_bundle(&PlantedSpec::default());
    let scaled: Vec<Vec<f64>> = rows(&bundle)
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.into_iter().map(|v| v * (0.01 + i as f64 * 3.7)).collect())
        .collect();
    let a = cosine_matrix(&bundle).unwrap();
    let b = cosine_matrix(&VectorBundle::from_rows(scaled).unwrap()).unwrap();
    assert!(max_abs_diff(&a.values, &b.values) < 1e-12);
}

#[test]
fn pca_matches_gram_eigendecomposition() {
    // Known covariance: independent axes with well-separated variances.
    let scales: Vec<f64> = (0..24).map(|j| 10.0 / (1.0 + j as f64)).collect();
    let data = gaussian_rows(21, 24, 5, &scales);
    let bundle = VectorBundle::from_rows(data.clone()).unwrap();
    let proj = pca_project(&bundle, 10, false).unwrap();
    let (oracle, variances) = gram_pca_scores(&data, 10);
    assert!(max_abs_diff(&proj.scores, &oracle) < 1e-8, "{}", max_abs_diff(&proj.scores, &oracle));
    for (a, b) in proj.component_variances.iter().zip(&variances) {
        assert!((a - b).abs() < 1e-8 * b.max(1.0));
    }
    assert!(proj.component_variances.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn pca_rank_deficiency() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let origin: Vec<f64> = (0..16).map(|_| rng.sample(StandardNormal)).collect();
    let u: Vec<f64> = (0..16).map(|_| rng.sample(StandardNormal)).collect();
    let v: Vec<f64> = (0..16).map(|_| rng.sample(StandardNormal)).collect();
    let data: Vec<Vec<f64>> = (0..21)
        .map(|_| {
            let (s, t): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
            (0..16).map(|j| origin[j] + s * u[j] + t * v[j]).collect()
        })
        .collect();
    let bundle = VectorBundle::from_rows(data).unwrap();
    let proj = pca_project(&bundle, 3, false).unwrap();
    assert!(proj.component_variances[2].abs() < 1e-9, "{:?}", proj.component_variances);
    assert!(matches!(pca_project(&bundle, 3, true), Err(GeometryError::ZeroVarianceColumn(2))));
}

#[test]
fn pca_k_bounds() {
    let bundle = planted_bundle(&PlantedSpec::default());
    assert!(matches!(pca_project(&bundle, 0, false), Err(GeometryError::InvalidK { .. })));
    assert!(matches!(pca_project(&bundle, 21, false), Err(GeometryError::InvalidK { max: 20, .. })));
    pca_project(&bundle, 20, false).unwrap();
}

#[test]
fn zscored_columns_are_standardized() {
    let proj = pca_project(&planted_bundle(&PlantedSpec::default()), 10, true).unwrap();
    assert!(proj.zscored);
    for j in 0..10 {
        let col: Vec<f64> = proj.scores.iter().map(|r| r[j]).collect();
        let mean = col.iter().sum::<f64>() / 21.0;
        let sd = (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 20.0).sqrt();
        assert!(mean.abs() <= 1e-9);
        assert!((sd - 1.0).abs() <= 1e-9);
    }
}

#[test]
fn energy_is_conserved_at_full_rank() {
    let proj = pca_project(&planted_bundle(&PlantedSpec::default()), 20, false).unwrap();
    let total: f64 = proj.component_variances.iter().sum();
    assert!((total - proj.total_variance).abs() <= 1e-8 * proj.total_variance.max(1.0));
}

#[test]
fn scores_are_rotation_invariant_up_to_sign() {
    let bundle = planted_bundle(&PlantedSpec::default());
    let d = bundle.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = g.qr().q();
    let x = DMatrix::from_fn(21, d, |i, j| bundle.entries()[i].values[j]);
    let rotated = x * q;
    let rotated_rows: Vec<Vec<f64>> = (0..21).map(|i| rotated.row(i).iter().copied().collect()).collect();
    let a = pca_project(&bundle, 10, false).unwrap();
    let b = pca_project(&VectorBundle::from_rows(rotated_rows).unwrap(), 10, false).unwrap();
    for j in 0..10 {
        let dot: f64 = (0..21).map(|i| a.scores[i][j] * b.scores[i][j]).sum();
        let s = dot.signum();
        for i in 0..21 {
            assert!((a.scores[i][j] - s * b.scores[i][j]).abs() <= 1e-8, "col {j}");
        }
    }
}

#[test]
fn planted_clusters_classify_perfectly() {
    let bundle = planted_bundle(&PlantedSpec::default());
    let ks: Vec<usize> = (1..=10).collect();
    let res = loocv_lda(&bundle, &ks, LoocvOptions::default()).unwrap();
    assert_eq!(res.accuracy, 1.0);
    assert!(res.components_used <= 3);
    assert_eq!(res.per_fold.len(), 7);
    assert!(res.per_fold.iter().all(|f| f.predictions.len() == 3 && f.predictions == f.truths));
    assert_eq!(res.accuracy_by_k.len(), 10);
    let global = loocv_lda(&bundle, &ks, LoocvOptions { pca_fit: PcaFit::Global }).unwrap();
    assert_eq!(global.accuracy, 1.0);
}

#[test]
fn loocv_rejects_bad_inputs() {
    let bundle = planted_bundle(&PlantedSpec::default());
    assert!(matches!(loocv_lda(&bundle, &[18], LoocvOptions::default()), Err(GeometryError::InvalidK { max: 17, .. })));
    assert!(loocv_lda(&bundle, &[], LoocvOptions::default()).is_err());
    let same = VectorBundle::from_rows(vec![vec![1.0, 2.0, 3.0, 4.0]; 21]).unwrap();
    assert!(matches!(loocv_lda(&same, &[1, 2], LoocvOptions::default()), Err(GeometryError::Degenerate(_))));
}

#[test]
fn held_out_vectors_never_reach_the_fold_model() {
    let bundle = planted_bundle(&PlantedSpec::default());
    let mut tampered = rows(&bundle);
    for c in 0..3 {
        tampered[c * 7 + 4] = vec![123.0; bundle.dim()];
    }
    let tampered = VectorBundle::from_rows(tampered).unwrap();
    let held = PromptId::new(4).unwrap();
    let a = fit_fold(&bundle, held, 3, PcaFit::PerFold).unwrap();
    let b = fit_fold(&tampered, held, 3, PcaFit::PerFold).unwrap();
    assert_eq!(a, b);
    // The global variant does see them.
    let g = fit_fold(&bundle, held, 3, PcaFit::Global).unwrap();
    let h = fit_fold(&tampered, held, 3, PcaFit::Global).unwrap();
    assert_ne!(g, h);
}

#[test]
fn coincident_clusters_have_unit_r2() {
    let centers: Vec<Vec<f64>> = gaussian_rows(3, 12, 4, &[1.0]);
    let data: Vec<Vec<f64>> = (0..21).map(|i| centers[i / 7].clone()).collect();
    let res = permutation_r2(&VectorBundle::from_rows(data).unwrap(), 2, 200, 1, PermutationMode::FreeShuffle).unwrap();
    assert!((res.observed_r2 - 1.0).abs() < 1e-12);
    assert!(res.p_value > 0.0);
}

fn permutations_of(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations_of(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

#[test]
fn exchangeable_r2_expectation_by_enumeration() {
    // 6 points, 3 groups of 2: E[R²] over all 720 relabelings = (g-1)/(n-1) = 2/5.
    let pts = gaussian_rows(6, 3, 21, &[1.0, 2.0, 0.5]);
    let labels = [0usize, 0, 1, 1, 2, 2];
    let perms = permutations_of(&[0, 1, 2, 3, 4, 5]);
    let mean = perms
        .iter()
        .map(|p| {
            let l: Vec<usize> = p.iter().map(|&i| labels[i]).collect();
            r_squared(&pts, &l, 3)
        })
        .sum::<f64>()
        / perms.len() as f64;
    assert!((mean - 0.4).abs() < 1e-12, "{mean}");
}

#[test]
fn permutation_results_do_not_depend_on_thread_count() {
    let bundle = noise_bundle(32, 8);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| permutation_r2(&bundle, 3, 2000, 77, PermutationMode::WithinPromptShuffle).unwrap())
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(one.observed_r2.to_bits(), four.observed_r2.to_bits());
    assert_eq!(one.p_value.to_bits(), four.p_value.to_bits());
    assert_eq!(one.null_mean.to_bits(), four.null_mean.to_bits());
    assert_eq!(one, run(4));
    assert!((0.0..=1.0).contains(&one.observed_r2));
    assert!(permutation_r2(&bundle, 3, 0, 1, PermutationMode::FreeShuffle).is_err());
}

#[test]
fn tuned_r2_fixture_is_significant() {
    let bundle = r2_bundle(64, 3, 0.69);
    let res = permutation_r2(&bundle, 20, 10_000, 2024, PermutationMode::WithinPromptShuffle).unwrap();
    assert!((res.observed_r2 - 0.69).abs() < 1e-9, "{}", res.observed_r2);
    assert!(res.p_value <= 0.001, "{}", res.p_value);
    let free = permutation_r2(&bundle, 20, 10_000, 2024, PermutationMode::FreeShuffle).unwrap();
    assert!(free.p_value <= 0.001);
}

#[test]
fn collapse_selects_pulled_prompt() {
    let diag = collapse_diagnostics(&planted_bundle(&PlantedSpec::default())).unwrap();
    assert_eq!(diag.collapse_prompt, PromptId::SYNTHESIS);
    assert!(diag.tied_with.is_empty());
    assert!(diag.cosine_excess > 0.0);
}

#[test]
fn collapse_ties_go_to_p0() {
    // Integer-valued rows so every base/conflict difference is exactly the same.
    let mut data = Vec::new();
    for c in 0..3 {
        for p in 0..7 {
            let mut v = vec![1.0; 8];
            v[p] += 5.0;
            if c == 2 {
                v[7] += 2.0;
            }
            if c == 1 {
                v[0] -= 3.0;
            }
            data.push(v);
        }
    }
    let diag = collapse_diagnostics(&VectorBundle::from_rows(data).unwrap()).unwrap();
    assert_eq!(diag.collapse_prompt.index(), 0);
    assert_eq!(diag.tied_with.len(), 6);
}

#[test]
fn collapse_of_identical_conditions() {
    let base = gaussian_rows(7, 10, 2, &[1.0]);
    let analytic = gaussian_rows(7, 10, 3, &[1.0]);
    let data: Vec<Vec<f64>> = base.iter().chain(&analytic).chain(&base).cloned().collect();
    let diag = collapse_diagnostics(&VectorBundle::from_rows(data).unwrap()).unwrap();
    for p in &diag.per_prompt {
        assert_eq!(p.base_conflict_euclidean, 0.0);
        assert!((p.base_conflict_cosine - 1.0).abs() < 1e-12);
    }
}

#[test]
fn collapse_argmin_matches_brute_force() {
    for seed in 0..50 {
        let data = gaussian_rows(21, 6, 1000 + seed, &[1.0]);
        let diag = collapse_diagnostics(&VectorBundle::from_rows(data.clone()).unwrap()).unwrap();
        let dist = |p: usize| data[p].iter().zip(&data[14 + p]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let brute = (0..7).fold(0, |best, p| if dist(p) < dist(best) { p } else { best });
        assert_eq!(diag.collapse_prompt.index(), brute);
    }
}
