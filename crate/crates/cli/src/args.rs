use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use probe_core::geometry::{PcaFit, PermutationMode};
use probe_core::ingest::ConditionId;
use probe_core::report::ImageFormat;
use serde::Serialize;

pub const DEFAULT_SEED: u64 = 7;

#[derive(Debug, Parser)]
#[command(
    name = "genesis-probe",
    version,
    about = "Taxonomy, statistics and latent geometry for contradiction-probe runs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Options,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Label every trial with its taxonomy category.
    Classify,
    /// Per-condition rates and significance tests.
    Stats,
    /// Draw the unclassified responses to audit by hand.
    AuditSample,
    /// Tally hand labels and project the synthesis upper bound.
    AuditApply,
    /// Similarity, PCA, LOOCV LDA, permutation R² and collapse diagnostics.
    Latent,
    /// Assemble report.md from the outputs already in --out.
    Report,
    /// Run every step the given inputs allow, then the report.
    All,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Classify => "classify",
            Command::Stats => "stats",
            Command::AuditSample => "audit-sample",
            Command::AuditApply => "audit-apply",
            Command::Latent => "latent",
            Command::Report => "report",
            Command::All => "all",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PermModeArg {
    Free,
    WithinPrompt,
}

impl From<PermModeArg> for PermutationMode {
    fn from(m: PermModeArg) -> Self {
        match m {
            PermModeArg::Free => PermutationMode::FreeShuffle,
            PermModeArg::WithinPrompt => PermutationMode::WithinPromptShuffle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PcaFitArg {
    PerFold,
    Global,
}

impl From<PcaFitArg> for PcaFit {
    fn from(m: PcaFitArg) -> Self {
        match m {
            PcaFitArg::PerFold => PcaFit::PerFold,
            PcaFitArg::Global => PcaFit::Global,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormatArg {
    Svg,
    Ppm,
}

impl From<FormatArg> for ImageFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Svg => ImageFormat::Svg,
            FormatArg::Ppm => ImageFormat::Ppm,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Options {
    /// Trial log (JSONL).
    #[arg(long, global = true, value_name = "PATH")]
    pub trials: Option<PathBuf>,
    /// Hidden-state bundle (.json or .npz).
    #[arg(long, global = true, value_name = "PATH")]
    pub vectors: Option<PathBuf>,
    /// Taxonomy rule set (JSON); built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub rules: Option<PathBuf>,
    /// Hand-labeled audit records (JSONL).
    #[arg(long = "audit-labels", alias = "labels", global = true, value_name = "PATH")]
    pub audit_labels: Option<PathBuf>,
    /// Audit sample the labels must cover; defaults to the labeled records themselves.
    #[arg(long = "audit-sample", alias = "sample", global = true, value_name = "PATH")]
    pub audit_sample: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out", value_name = "DIR")]
    pub out: PathBuf,
    /// Seed for the audit draw and permutation test.
    #[arg(long, global = true, env = "GENESIS_PROBE_SEED", default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, global = true, default_value_t = 10_000)]
    pub permutations: usize,
    #[arg(long = "perm-mode", global = true, value_enum, default_value_t = PermModeArg::WithinPrompt)]
    pub perm_mode: PermModeArg,
    /// Largest PCA dimension for LOOCV candidates and the projection heatmap.
    #[arg(long, global = true, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..=10))]
    pub k: u64,
    /// PCA dimension of the permutation R².
    #[arg(long = "r2-k", global = true, default_value_t = 3)]
    pub r2_k: usize,
    /// Yates continuity correction for the chi-square test.
    #[arg(long, global = true)]
    pub yates: bool,
    #[arg(long = "pca-fit", global = true, value_enum, default_value_t = PcaFitArg::PerFold)]
    pub pca_fit: PcaFitArg,
    /// Heatmap image format.
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Svg)]
    pub format: FormatArg,
    /// Keep raw PCA scores in the projection heatmap.
    #[arg(long = "no-zscore", global = true)]
    pub no_zscore: bool,
    /// Condition whose unclassified responses are audited.
    #[arg(long, global = true, default_value_t = ConditionId::Conflict)]
    pub condition: ConditionId,
    /// Audit sample size.
    #[arg(long, global = true, default_value_t = 50)]
    pub n: usize,
}
