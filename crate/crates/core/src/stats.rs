//! Condition summaries and the exact tests behind the behavioral comparison:
//! two-sided Fisher, Pearson chi-square (df = 1), rate ratios, Clopper–Pearson
//! bounds and the unclassified-pool synthesis projection.
//!
//! Probabilities are handled in log-space throughout; at n = 500 per arm the
//! factorials involved are far outside `f64` range.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{ConditionId, PromptId, TrialRecord};
use crate::taxonomy::{AuditTable, Category};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("degenerate 2x2 table {0:?}: every row and column margin must be positive")]
    DegenerateTable([u64; 4]),
    #[error("zero expected count in 2x2 table {0:?}")]
    ZeroExpected([u64; 4]),
    #[error("rate ratio undefined: {condition} has zero {group} rate")]
    ZeroRate { condition: ConditionId, group: CategoryGroup },
    #[error("invalid binomial bound arguments: successes={successes}, n={n}, confidence={confidence}")]
    InvalidBound { successes: u64, n: u64, confidence: f64 },
    #[error("condition {0} not present in summaries")]
    MissingCondition(ConditionId),
}

/// Groupings of categories used in reports and comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoryGroup {
    Genesis,
    PartialGenesis,
    /// Genesis + PartialGenesis.
    Synthesis,
    Confusion,
    /// PickOneSquare + PickOneCircle.
    PickOne,
    Unclassified,
}

impl CategoryGroup {
    pub fn contains(self, c: Category) -> bool {
        match self {
            CategoryGroup::Genesis => c == Category::Genesis,
            CategoryGroup::PartialGenesis => c == Category::PartialGenesis,
            CategoryGroup::Synthesis => c.is_synthesis(),
            CategoryGroup::Confusion => c == Category::Confusion,
            CategoryGroup::PickOne => c.is_pick_one(),
            CategoryGroup::Unclassified => c == Category::Unclassified,
        }
    }
}

impl std::fmt::Display for CategoryGroup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            CategoryGroup::Genesis => "genesis",
            CategoryGroup::PartialGenesis => "partial_genesis",
            CategoryGroup::Synthesis => "synthesis",
            CategoryGroup::Confusion => "confusion",
            CategoryGroup::PickOne => "pick_one",
            CategoryGroup::Unclassified => "unclassified",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: ConditionId,
    pub n_trials: usize,
    pub counts: BTreeMap<Category, usize>,
    pub rates: BTreeMap<Category, f64>,
    pub synthesis_count: usize,
    pub synthesis_rate: f64,
    pub pick_one_count: usize,
    pub pick_one_rate: f64,
    /// Trials per prompt; the log format does not require balance.
    pub per_prompt: BTreeMap<PromptId, usize>,
}

impl ConditionSummary {
    pub fn count(&self, group: CategoryGroup) -> usize {
        self.counts.iter().filter(|(c, _)| group.contains(**c)).map(|(_, n)| n).sum()
    }

    pub fn rate(&self, group: CategoryGroup) -> f64 {
        if self.n_trials == 0 {
            0.0
        } else {
            self.count(group) as f64 / self.n_trials as f64
        }
    }
}

/// One summary per condition present, in canonical condition order.
pub fn summarize(labeled: &[(TrialRecord, Category)]) -> Vec<ConditionSummary> {
    ConditionId::ALL
        .iter()
        .filter_map(|&condition| {
            let rows: Vec<_> = labeled.iter().filter(|(t, _)| t.condition == condition).collect();
            if rows.is_empty() {
                return None;
            }
            let n = rows.len();
            let mut counts: BTreeMap<Category, usize> = Category::ALL.iter().map(|c| (*c, 0)).collect();
            let mut per_prompt: BTreeMap<PromptId, usize> = PromptId::all().map(|p| (p, 0)).collect();
            for (t, c) in &rows {
                *counts.entry(*c).or_default() += 1;
                *per_prompt.entry(t.prompt_id).or_default() += 1;
            }
            let rates = counts.iter().map(|(c, k)| (*c, *k as f64 / n as f64)).collect();
            let synthesis_count = counts[&Category::Genesis] + counts[&Category::PartialGenesis];
            let pick_one_count = counts[&Category::PickOneSquare] + counts[&Category::PickOneCircle];
            Some(ConditionSummary {
                condition,
                n_trials: n,
                counts,
                rates,
                synthesis_count,
                synthesis_rate: synthesis_count as f64 / n as f64,
                pick_one_count,
                pick_one_rate: pick_one_count as f64 / n as f64,
                per_prompt,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    FisherExactTwoSided,
    PearsonChiSquare,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub method: TestMethod,
    /// Chi-square statistic; absent for Fisher.
    pub statistic: Option<f64>,
    pub p_value: f64,
    /// Row-major `[[a, b], [c, d]]`.
    pub table: [[u64; 2]; 2],
    #[serde(default)]
    pub yates: bool,
}

/// `ln(Σ exp(x))` over a non-empty slice.
fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Relative tolerance when comparing table probabilities to the observed one.
const FISHER_REL_TOL: f64 = 1e-7;

/// Two-sided Fisher exact test: sums the hypergeometric probabilities of every
/// table with the observed margins whose probability does not exceed the
/// observed table's.
///
/// Log-probabilities are built by the ratio recurrence
/// `P(x+1)/P(x) = (r1-x)(c1-x) / ((x+1)(r2+x+1-c1))` with compensated
/// summation, which keeps relative error near 1e-15 for margins in the
/// thousands.
pub fn fisher_exact_2x2(a: u64, b: u64, c: u64, d: u64) -> Result<TestResult, StatsError> {
    let cells = [a, b, c, d];
    let (r1, r2, c1, c2) = (a + b, c + d, a + c, b + d);
    if r1 == 0 || r2 == 0 || c1 == 0 || c2 == 0 {
        return Err(StatsError::DegenerateTable(cells));
    }
    let lo = c1.saturating_sub(r2);
    let hi = r1.min(c1);

    let mut log_w = Vec::with_capacity((hi - lo + 1) as usize);
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    log_w.push(0.0);
    for x in lo..hi {
        let num = (r1 - x) as f64 * (c1 - x) as f64;
        let den = (x + 1) as f64 * (r2 + x + 1 - c1) as f64;
        // Kahan step
        let y = (num / den).ln() - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        log_w.push(sum);
    }
    let observed = log_w[(a - lo) as usize];
    let cutoff = observed + FISHER_REL_TOL.ln_1p();
    let selected: Vec<f64> = log_w.iter().copied().filter(|w| *w <= cutoff).collect();
    let log_p = log_sum_exp(&selected) - log_sum_exp(&log_w);
    Ok(TestResult {
        method: TestMethod::FisherExactTwoSided,
        statistic: None,
        p_value: log_p.exp().clamp(0.0, 1.0),
        table: [[a, b], [c, d]],
        yates: false,
    })
}

/// Pearson chi-square without continuity correction.
pub fn chi_square_2x2(a: u64, b: u64, c: u64, d: u64) -> Result<TestResult, StatsError> {
    chi_square_2x2_with(a, b, c, d, false)
}

/// Pearson chi-square, df = 1, optionally Yates-corrected. The p-value is the
/// closed form `erfc(sqrt(stat / 2))`.
pub fn chi_square_2x2_with(a: u64, b: u64, c: u64, d: u64, yates: bool) -> Result<TestResult, StatsError> {
    let cells = [a, b, c, d];
    let (r1, r2, c1, c2) = (a + b, c + d, a + c, b + d);
    if r1 == 0 || r2 == 0 || c1 == 0 || c2 == 0 {
        return Err(StatsError::ZeroExpected(cells));
    }
    let n = (r1 + r2) as f64;
    let cross = (a as i128 * d as i128 - b as i128 * c as i128).unsigned_abs() as f64;
    let diff = if yates { (cross - n / 2.0).max(0.0) } else { cross };
    let stat = n * diff * diff / (r1 as f64 * r2 as f64 * c1 as f64 * c2 as f64);
    Ok(TestResult {
        method: TestMethod::PearsonChiSquare,
        statistic: Some(stat),
        p_value: chi_square_df1_sf(stat),
        table: [[a, b], [c, d]],
        yates,
    })
}

/// Upper tail of the chi-square distribution with one degree of freedom.
pub fn chi_square_df1_sf(stat: f64) -> f64 {
    libm::erfc((stat / 2.0).sqrt()).clamp(0.0, 1.0)
}

/// `rate_b / rate_a` for a category group.
pub fn rate_ratio(
    summary_a: &ConditionSummary,
    summary_b: &ConditionSummary,
    group: CategoryGroup,
) -> Result<f64, StatsError> {
    let ra = summary_a.rate(group);
    if ra <= 0.0 {
        return Err(StatsError::ZeroRate { condition: summary_a.condition, group });
    }
    Ok(summary_b.rate(group) / ra)
}

fn ln_choose(n: u64, k: u64) -> f64 {
    libm::lgamma(n as f64 + 1.0) - libm::lgamma(k as f64 + 1.0) - libm::lgamma((n - k) as f64 + 1.0)
}

/// `P(X <= k)` for `X ~ Binomial(n, p)`, summed term by term in log-space.
pub fn binomial_cdf(k: u64, n: u64, p: f64) -> f64 {
    if k >= n {
        return 1.0;
    }
    if p <= 0.0 {
        return 1.0;
    }
    if p >= 1.0 {
        return 0.0;
    }
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    let terms: Vec<f64> = (0..=k).map(|i| ln_choose(n, i) + i as f64 * lp + (n - i) as f64 * lq).collect();
    log_sum_exp(&terms).exp().min(1.0)
}

const BISECTION_TOL: f64 = 1e-12;

fn check_bound_args(successes: u64, n: u64, confidence: f64) -> Result<(), StatsError> {
    if n == 0 || successes > n || !(confidence > 0.0 && confidence < 1.0) {
        return Err(StatsError::InvalidBound { successes, n, confidence });
    }
    Ok(())
}

// Finds p in [0,1] with f(p) = target for f decreasing in p.
fn bisect_decreasing(f: impl Fn(f64) -> f64, target: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if f(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Two-sided Clopper–Pearson upper limit: the `p` with
/// `BinomCDF(successes; n, p) = (1 - confidence) / 2`. Equals 1 when
/// `successes == n`.
pub fn clopper_pearson_upper(successes: u64, n: u64, confidence: f64) -> Result<f64, StatsError> {
    check_bound_args(successes, n, confidence)?;
    if successes == n {
        return Ok(1.0);
    }
    let tail = (1.0 - confidence) / 2.0;
    Ok(bisect_decreasing(|p| binomial_cdf(successes, n, p), tail))
}

/// Two-sided Clopper–Pearson lower limit; exactly 0 when `successes == 0`.
pub fn clopper_pearson_lower(successes: u64, n: u64, confidence: f64) -> Result<f64, StatsError> {
    check_bound_args(successes, n, confidence)?;
    if successes == 0 {
        return Ok(0.0);
    }
    let tail = (1.0 - confidence) / 2.0;
    // P(X >= s) = 1 - CDF(s - 1) is increasing in p.
    Ok(bisect_decreasing(|p| binomial_cdf(successes - 1, n, p), 1.0 - tail))
}

/// Worst-case synthesis count once the unclassified pool is credited with the
/// audit's upper synthesis rate.
pub fn upper_bound_projection(
    detected_synthesis: u64,
    unclassified_n: u64,
    audit_successes: u64,
    audit_n: u64,
    confidence: f64,
) -> Result<f64, StatsError> {
    let bound = clopper_pearson_upper(audit_successes, audit_n, confidence)?;
    Ok(detected_synthesis as f64 + unclassified_n as f64 * bound)
}

/// Serialized form of the audit upper-bound analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisProjection {
    pub condition: ConditionId,
    pub detected_synthesis: u64,
    pub unclassified_n: u64,
    pub audit_successes: u64,
    pub audit_n: u64,
    pub confidence: f64,
    pub rate_upper_bound: f64,
    pub projected_max: f64,
    /// Synthesis count of the reference condition, if present.
    pub reference_condition: Option<ConditionId>,
    pub reference_synthesis: Option<u64>,
}

impl SynthesisProjection {
    pub fn compute(
        target: &ConditionSummary,
        reference: Option<&ConditionSummary>,
        audit_successes: u64,
        audit_n: u64,
        confidence: f64,
    ) -> Result<Self, StatsError> {
        let detected = target.synthesis_count as u64;
        let unclassified = target.count(CategoryGroup::Unclassified) as u64;
        let rate_upper_bound = clopper_pearson_upper(audit_successes, audit_n, confidence)?;
        let projected_max = upper_bound_projection(detected, unclassified, audit_successes, audit_n, confidence)?;
        Ok(Self {
            condition: target.condition,
            detected_synthesis: detected,
            unclassified_n: unclassified,
            audit_successes,
            audit_n,
            confidence,
            rate_upper_bound,
            projected_max,
            reference_condition: reference.map(|r| r.condition),
            reference_synthesis: reference.map(|r| r.synthesis_count as u64),
        })
    }
}

/// Tally and projection written by the audit step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditOutcome {
    pub condition: ConditionId,
    pub table: AuditTable,
    pub projection: SynthesisProjection,
}

/// Tests of one condition against a reference condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionComparison {
    pub reference: ConditionId,
    pub treatment: ConditionId,
    /// Genesis + PartialGenesis against everything else.
    pub synthesis_fisher: Option<TestResult>,
    /// Genesis alone.
    pub genesis_fisher: Option<TestResult>,
    pub pick_one_chi_square: Option<TestResult>,
    pub pick_one_ratio: Option<f64>,
    pub synthesis_ratio: Option<f64>,
}

fn group_table(a: &ConditionSummary, b: &ConditionSummary, group: CategoryGroup) -> [u64; 4] {
    let ka = a.count(group) as u64;
    let kb = b.count(group) as u64;
    [ka, a.n_trials as u64 - ka, kb, b.n_trials as u64 - kb]
}

/// Degenerate tables (e.g. a category absent in both arms) yield `None`
/// rather than failing the whole comparison.
pub fn compare_conditions(
    reference: &ConditionSummary,
    treatment: &ConditionSummary,
    yates: bool,
) -> ConditionComparison {
    let fisher = |g| {
        let [a, b, c, d] = group_table(reference, treatment, g);
        fisher_exact_2x2(a, b, c, d).ok()
    };
    let [a, b, c, d] = group_table(reference, treatment, CategoryGroup::PickOne);
    ConditionComparison {
        reference: reference.condition,
        treatment: treatment.condition,
        synthesis_fisher: fisher(CategoryGroup::Synthesis),
        genesis_fisher: fisher(CategoryGroup::Genesis),
        pick_one_chi_square: chi_square_2x2_with(a, b, c, d, yates).ok(),
        pick_one_ratio: rate_ratio(reference, treatment, CategoryGroup::PickOne).ok(),
        synthesis_ratio: rate_ratio(reference, treatment, CategoryGroup::Synthesis).ok(),
    }
}

/// Everything the `stats` step serializes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub summaries: Vec<ConditionSummary>,
    pub comparisons: Vec<ConditionComparison>,
}

/// Summaries plus base-vs-conflict and base-vs-analytic comparisons when
/// those conditions are present.
pub fn stats_report(labeled: &[(TrialRecord, Category)], yates: bool) -> StatsReport {
    let summaries = summarize(labeled);
    let find = |c| summaries.iter().find(|s| s.condition == c);
    let mut comparisons = Vec::new();
    if let Some(base) = find(ConditionId::Base) {
        for other in [ConditionId::Conflict, ConditionId::Analytic] {
            if let Some(s) = find(other) {
                comparisons.push(compare_conditions(base, s, yates));
            }
        }
    }
    StatsReport { summaries, comparisons }
}
