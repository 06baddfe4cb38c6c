//! Analysis engine for contradiction-probe experiments on fine-tuned language
//! models.
//!
//! The pipeline consumes two interchange artifacts produced by a model runner:
//! a JSONL trial log of sampled responses and a bundle of last-layer
//! last-token hidden states (7 prompts x 3 conditions). From these it derives
//!
//! - a hierarchical keyword taxonomy of every response ([`taxonomy`]),
//! - exact behavioral statistics and audit bounds ([`stats`]),
//! - similarity, PCA, leave-one-prompt-out LDA, permutation R² and collapse
//!   diagnostics over the hidden states ([`geometry`]),
//! - deterministic heatmaps and a markdown report ([`report`]).
//!
//! Everything is a pure function of its inputs; the same files and seeds
//! produce byte-identical outputs.

pub mod fixtures;
pub mod geometry;
pub mod ingest;
pub mod npy;
pub mod report;
pub mod rng;
pub mod stats;
pub mod taxonomy;

pub use geometry::{
    block_stats, collapse_diagnostics, cosine_matrix, loocv_lda, pca_project, permutation_r2, BlockStats,
    CollapseDiagnostics, GeometryError, LoocvOptions, LoocvResult, PcaFit, PermutationMode, PermutationResult,
    Projection, SimilarityMatrix,
};
pub use ingest::{
    canonical_order, load_trials, load_vectors, ConditionId, IngestError, PromptId, TrialKey, TrialRecord,
    VectorBundle, VectorEntry,
};
pub use report::{render_heatmap, render_report, ColorScale, HeatmapSpec, ImageFormat, ReportError};
pub use stats::{
    chi_square_2x2, clopper_pearson_upper, fisher_exact_2x2, rate_ratio, summarize, upper_bound_projection,
    CategoryGroup, ConditionSummary, StatsError, TestMethod, TestResult,
};
pub use taxonomy::{
    apply_audit, classify, classify_batch, sample_unclassified, AuditLabel, AuditTable, Category, RuleSet,
    TaxonomyError,
};
