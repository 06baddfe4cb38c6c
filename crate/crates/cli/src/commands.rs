use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use probe_core::geometry::{
    analyze, BlockStats, CollapseDiagnostics, LatentAnalysis, LatentConfig, LoocvResult, PermutationResult, Projection,
    SimilarityMatrix,
};
use probe_core::ingest::{load_trials, load_vectors, ConditionId, TrialKey, TrialRecord};
use probe_core::report::{render_heatmap, render_report, HeatmapSpec, ImageFormat, ReportInputs};
use probe_core::stats::{stats_report, AuditOutcome, CategoryGroup, StatsReport, SynthesisProjection};
use probe_core::taxonomy::{
    apply_audit, audit_labels, classify_batch, read_audit_records, sample_unclassified, write_audit_records,
    AuditLabel, AuditRecord, Category, RuleSet,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::args::{Cli, Command, Options};
use crate::manifest::Ledger;

/// Missing or conflicting arguments; reported with exit status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

const AUDIT_CONFIDENCE: f64 = 0.95;
const REFERENCE: ConditionId = ConditionId::Base;

pub const LABELED: &str = "labeled.jsonl";
pub const STATS: &str = "stats.json";
pub const AUDIT_SAMPLE: &str = "audit_sample.jsonl";
pub const AUDIT: &str = "audit.json";
pub const SIMILARITY: &str = "similarity.json";
pub const PCA: &str = "pca.json";
pub const LOOCV: &str = "loocv.json";
pub const PERMUTATION: &str = "permutation.json";
pub const COLLAPSE: &str = "collapse.json";
pub const REPORT: &str = "report.md";

#[derive(Serialize)]
struct LabeledLine<'a> {
    #[serde(flatten)]
    trial: &'a TrialRecord,
    category: Category,
}

#[derive(Serialize, Deserialize)]
struct SimilarityFile {
    similarity: SimilarityMatrix,
    blocks: BlockStats,
}

#[derive(Serialize, Deserialize)]
struct LoocvFile {
    primary: LoocvResult,
    alternate: Option<LoocvResult>,
}

/// Optional report sections to look for in the output directory.
#[derive(Clone, Copy)]
struct Sections {
    audit: bool,
    latent: bool,
}

struct Run<'a> {
    opts: &'a Options,
    ledger: Ledger,
}

pub fn run(cli: &Cli) -> Result<()> {
    let opts = &cli.opts;
    for (flag, path) in [
        ("--trials", &opts.trials),
        ("--vectors", &opts.vectors),
        ("--rules", &opts.rules),
        ("--audit-labels", &opts.audit_labels),
        ("--audit-sample", &opts.audit_sample),
    ] {
        if let Some(p) = path {
            if !p.is_file() {
                bail!("{flag} {}: no such file", p.display());
            }
        }
    }
    if opts.n == 0 {
        return Err(UsageError("--n must be positive".into()).into());
    }
    std::fs::create_dir_all(&opts.out).with_context(|| format!("creating {}", opts.out.display()))?;
    let mut run = Run { opts, ledger: Ledger::default() };
    match cli.command {
        Command::Classify => run.classify().map(drop)?,
        Command::Stats => run.stats().map(drop)?,
        Command::AuditSample => run.audit_sample()?,
        Command::AuditApply => run.audit_apply().map(drop)?,
        Command::Latent => run.latent()?,
        Command::Report => run.report()?,
        Command::All => run.all()?,
    }
    run.ledger.write(cli.command.name(), opts)
}

fn require<'p>(path: &'p Option<PathBuf>, flag: &str, command: &str) -> Result<&'p Path> {
    path.as_deref().ok_or_else(|| UsageError(format!("{command} requires {flag}")).into())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))
}

fn read_audit_file(path: &Path) -> Result<Vec<AuditRecord>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_audit_records(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

impl Run<'_> {
    /// Registers a file in --out as an input unless this run wrote it.
    fn intermediate(&mut self, role: &str, name: &str) {
        if !self.ledger.has_output(name) {
            self.ledger.input(role, &self.opts.out.join(name));
        }
    }

    fn out(&mut self, name: &str) -> PathBuf {
        self.ledger.output(name);
        self.opts.out.join(name)
    }

    fn rules(&mut self) -> Result<RuleSet> {
        match &self.opts.rules {
            None => Ok(RuleSet::default()),
            Some(p) => {
                self.ledger.input("rules", p);
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                RuleSet::from_json(&text).with_context(|| format!("rules {}", p.display()))
            }
        }
    }

    fn labeled(&mut self, command: &str) -> Result<Vec<(TrialRecord, Category)>> {
        let path = require(&self.opts.trials, "--trials", command)?.to_path_buf();
        self.ledger.input("trials", &path);
        let trials = load_trials(&path).with_context(|| format!("trials {}", path.display()))?;
        let rules = self.rules()?;
        Ok(classify_batch(&trials, &rules))
    }

    fn classify(&mut self) -> Result<Vec<(TrialRecord, Category)>> {
        let labeled = self.labeled("classify")?;
        let path = self.out(LABELED);
        let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        for (trial, category) in &labeled {
            serde_json::to_writer(&mut w, &LabeledLine { trial, category: *category })?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(labeled)
    }

    fn stats(&mut self) -> Result<StatsReport> {
        let labeled = self.labeled("stats")?;
        self.stats_from(&labeled)
    }

    fn stats_from(&mut self, labeled: &[(TrialRecord, Category)]) -> Result<StatsReport> {
        let report = stats_report(labeled, self.opts.yates);
        if report.summaries.is_empty() {
            bail!("trial log is empty");
        }
        write_json(&self.out(STATS), &report)?;
        Ok(report)
    }

    fn audit_sample(&mut self) -> Result<()> {
        let labeled = self.labeled("audit-sample")?;
        self.sample_from(&labeled)
    }

    fn sample_from(&mut self, labeled: &[(TrialRecord, Category)]) -> Result<()> {
        let sample = sample_unclassified(labeled, self.opts.condition, self.opts.n, self.opts.seed)?;
        let records: Vec<AuditRecord> = sample.iter().map(AuditRecord::from).collect();
        let path = self.out(AUDIT_SAMPLE);
        write_audit_records(BufWriter::new(File::create(&path)?), &records)?;
        Ok(())
    }

    fn audit_apply(&mut self) -> Result<AuditOutcome> {
        let labeled = self.labeled("audit-apply")?;
        self.audit_from(&labeled)
    }

    fn audit_from(&mut self, labeled: &[(TrialRecord, Category)]) -> Result<AuditOutcome> {
        let label_path = require(&self.opts.audit_labels, "--audit-labels", "audit-apply")?.to_path_buf();
        self.ledger.input("audit-labels", &label_path);
        let records = read_audit_file(&label_path)?;
        let labels = audit_labels(&records)?;
        let sample_keys: Vec<TrialKey> = match &self.opts.audit_sample {
            Some(p) => {
                self.ledger.input("audit-sample", p);
                read_audit_file(p)?.iter().map(AuditRecord::key).collect()
            }
            None => records.iter().map(AuditRecord::key).collect(),
        };
        let condition = self.opts.condition;
        let by_key: HashMap<TrialKey, &(TrialRecord, Category)> = labeled.iter().map(|p| (p.0.key(), p)).collect();
        let mut sample = Vec::with_capacity(sample_keys.len());
        for key in &sample_keys {
            let Some((trial, category)) = by_key.get(key) else {
                bail!("audited trial {key} is not in the trial log");
            };
            if trial.condition != condition || *category != Category::Unclassified {
                bail!("audited trial {key} is not an unclassified {condition} response");
            }
            sample.push(trial.clone());
        }
        let table = apply_audit(&sample, &labels)?;
        let report = stats_report(labeled, self.opts.yates);
        let find = |c| report.summaries.iter().find(|s| s.condition == c);
        let target = find(condition).with_context(|| format!("no {condition} trials"))?;
        let reference = if condition == REFERENCE { None } else { find(REFERENCE) };
        let projection = SynthesisProjection::compute(
            target,
            reference,
            table.count(AuditLabel::SoftGenesis) as u64,
            table.sample_size as u64,
            AUDIT_CONFIDENCE,
        )?;
        debug_assert_eq!(projection.unclassified_n as usize, target.count(CategoryGroup::Unclassified));
        let outcome = AuditOutcome { condition, table, projection };
        write_json(&self.out(AUDIT), &outcome)?;
        Ok(outcome)
    }

    fn latent_config(&self) -> LatentConfig {
        let k = self.opts.k as usize;
        LatentConfig {
            k,
            zscore: !self.opts.no_zscore,
            k_candidates: (1..=k).collect(),
            pca_fit: self.opts.pca_fit.into(),
            r2_k: self.opts.r2_k,
            permutations: self.opts.permutations,
            perm_mode: self.opts.perm_mode.into(),
            seed: self.opts.seed,
        }
    }

    fn latent(&mut self) -> Result<()> {
        let path = require(&self.opts.vectors, "--vectors", "latent")?.to_path_buf();
        self.ledger.input("vectors", &path);
        let bundle = load_vectors(&path).with_context(|| format!("vectors {}", path.display()))?;
        let analysis = analyze(&bundle, &self.latent_config())?;
        let LatentAnalysis { similarity, blocks, projection, loocv, loocv_alternate, permutation, collapse } = analysis;

        let format: ImageFormat = self.opts.format.into();
        let sim_spec = HeatmapSpec::similarity(similarity.values.clone());
        render_heatmap(&sim_spec, self.out(&format!("similarity.{}", format.extension())), format)?;
        let mut pca_spec = if projection.zscored {
            HeatmapSpec::projection(projection.scores.clone(), 3.0)
        } else {
            let limit = projection.scores.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
            let mut spec = HeatmapSpec::projection(projection.scores.clone(), limit);
            spec.title = "Last-layer PCA projection".into();
            spec
        };
        pca_spec.title.push_str(&format!(", k = {}", projection.scores.first().map_or(0, Vec::len)));
        render_heatmap(&pca_spec, self.out(&format!("pca.{}", format.extension())), format)?;

        write_json(&self.out(SIMILARITY), &SimilarityFile { similarity, blocks })?;
        write_json(&self.out(PCA), &projection)?;
        write_json(&self.out(LOOCV), &LoocvFile { primary: loocv, alternate: loocv_alternate })?;
        write_json(&self.out(PERMUTATION), &permutation)?;
        write_json(&self.out(COLLAPSE), &collapse)?;
        Ok(())
    }

    fn load_latent(&mut self) -> Result<Option<LatentAnalysis>> {
        let dir = self.opts.out.clone();
        let names = [SIMILARITY, PCA, LOOCV, PERMUTATION, COLLAPSE];
        if !names.iter().all(|n| dir.join(n).is_file()) {
            return Ok(None);
        }
        for n in names {
            self.intermediate("latent", n);
        }
        let SimilarityFile { similarity, blocks } = read_json(&dir.join(SIMILARITY))?;
        let projection: Projection = read_json(&dir.join(PCA))?;
        let LoocvFile { primary, alternate } = read_json(&dir.join(LOOCV))?;
        let permutation: PermutationResult = read_json(&dir.join(PERMUTATION))?;
        let collapse: CollapseDiagnostics = read_json(&dir.join(COLLAPSE))?;
        Ok(Some(LatentAnalysis {
            similarity,
            blocks,
            projection,
            loocv: primary,
            loocv_alternate: alternate,
            permutation,
            collapse,
        }))
    }

    fn report(&mut self) -> Result<()> {
        self.report_with(Sections { audit: true, latent: true })
    }

    fn report_with(&mut self, sections: Sections) -> Result<()> {
        let dir = self.opts.out.clone();
        let stats_path = dir.join(STATS);
        if !stats_path.is_file() {
            bail!("{} not found; run `stats` first", stats_path.display());
        }
        self.intermediate("stats", STATS);
        let stats: StatsReport = read_json(&stats_path)?;
        let audit: Option<AuditOutcome> = if sections.audit && dir.join(AUDIT).is_file() {
            self.intermediate("audit", AUDIT);
            Some(read_json(&dir.join(AUDIT))?)
        } else {
            None
        };
        let latent = if sections.latent { self.load_latent()? } else { None };
        let mut heatmaps = Vec::new();
        if latent.is_some() {
            for (stem, caption) in
                [("similarity", "Cosine similarity of last-layer vectors"), ("pca", "PCA projection")]
            {
                for ext in ["svg", "ppm"] {
                    let name = format!("{stem}.{ext}");
                    if dir.join(&name).is_file() {
                        heatmaps.push((caption.to_string(), name));
                    }
                }
            }
        }
        let md = render_report(&ReportInputs {
            stats: Some(&stats),
            audit: audit.as_ref(),
            latent: latent.as_ref(),
            heatmaps,
        })?;
        let path = self.out(REPORT);
        std::fs::write(&path, md).with_context(|| format!("writing {}", path.display()))
    }

    fn all(&mut self) -> Result<()> {
        let labeled = self.classify()?;
        self.stats_from(&labeled)?;
        if self.opts.audit_labels.is_some() {
            self.audit_from(&labeled)?;
        } else {
            self.sample_from(&labeled)?;
        }
        if self.opts.vectors.is_some() {
            self.latent()?;
        }
        // Only this run's outputs feed the report, not leftovers in --out.
        self.report_with(Sections { audit: self.opts.audit_labels.is_some(), latent: self.opts.vectors.is_some() })
    }
}
