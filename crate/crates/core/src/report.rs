//! Heatmap rendering (SVG and binary PPM) and the markdown report.
//!
//! Color scales are fixed linear ramps:
//!
//! - `SequentialUnit`: value clamped to `[0, 1]`, RGB interpolated from
//!   `(13, 8, 135)` at 0 to `(240, 249, 33)` at 1.
//! - `DivergingZ { limit }`: `t = clamp(value / limit, -1, 1)`; white
//!   `(255, 255, 255)` at 0, ramping to `(59, 76, 192)` at -1 and
//!   `(180, 4, 38)` at +1.
//!
//! Channels are rounded to the nearest integer. Each matrix cell is a
//! `CELL_PX` square; block separators are 1-pixel black lines on the first
//! pixel row/column of each block after the first.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::LatentAnalysis;
use crate::ingest::ConditionId;
use crate::stats::{AuditOutcome, StatsReport, TestResult};
use crate::taxonomy::{AuditLabel, Category};

pub const CELL_PX: usize = 16;
const SVG_LEFT: usize = 96;
const SVG_TOP: usize = 56;

pub const SEQ_LOW: [u8; 3] = [13, 8, 135];
pub const SEQ_HIGH: [u8; 3] = [240, 249, 33];
pub const DIV_NEG: [u8; 3] = [59, 76, 192];
pub const DIV_MID: [u8; 3] = [255, 255, 255];
pub const DIV_POS: [u8; 3] = [180, 4, 38];
pub const SEPARATOR: [u8; 3] = [0, 0, 0];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("invalid heatmap: {0}")]
    InvalidSpec(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("missing required report section: {0}")]
    MissingSection(&'static str),
    #[error("no condition summaries")]
    NoSummaries,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorScale {
    SequentialUnit,
    DivergingZ { limit: f64 },
}

impl ColorScale {
    pub fn color(self, value: f64) -> [u8; 3] {
        fn lerp(a: [u8; 3], b: [u8; 3], t: f64) -> [u8; 3] {
            let mut out = [0u8; 3];
            for i in 0..3 {
                out[i] = (a[i] as f64 + t * (b[i] as f64 - a[i] as f64)).round() as u8;
            }
            out
        }
        let value = if value.is_nan() { 0.0 } else { value };
        match self {
            ColorScale::SequentialUnit => lerp(SEQ_LOW, SEQ_HIGH, value.clamp(0.0, 1.0)),
            ColorScale::DivergingZ { limit } => {
                let t = (value / limit).clamp(-1.0, 1.0);
                if t < 0.0 {
                    lerp(DIV_MID, DIV_NEG, -t)
                } else {
                    lerp(DIV_MID, DIV_POS, t)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageFormat {
    Svg,
    Ppm,
}

impl ImageFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ImageFormat::Svg => "svg",
            ImageFormat::Ppm => "ppm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapSpec {
    pub title: String,
    pub matrix: Vec<Vec<f64>>,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub color_scale: ColorScale,
    /// Row indices where a new block starts (0 excluded).
    pub row_blocks: Vec<usize>,
    /// Column indices where a new block starts (0 excluded).
    pub col_blocks: Vec<usize>,
}

/// Row labels like `base P0` plus block starts for canonical 21-row order.
pub fn canonical_row_labels() -> (Vec<String>, Vec<usize>) {
    let labels = ConditionId::ALL.iter().flat_map(|c| (0..7).map(move |p| format!("{c} P{p}"))).collect();
    (labels, vec![7, 14])
}

impl HeatmapSpec {
    /// Similarity heatmap with condition blocks on both axes.
    pub fn similarity(matrix: Vec<Vec<f64>>) -> Self {
        let (labels, blocks) = canonical_row_labels();
        Self {
            title: "Last-layer cosine similarity".into(),
            matrix,
            row_labels: labels.clone(),
            col_labels: labels,
            color_scale: ColorScale::SequentialUnit,
            row_blocks: blocks.clone(),
            col_blocks: blocks,
        }
    }

    /// Z-scored projection heatmap; columns are PC1..PCk.
    pub fn projection(scores: Vec<Vec<f64>>, limit: f64) -> Self {
        let (labels, blocks) = canonical_row_labels();
        let k = scores.first().map_or(0, Vec::len);
        Self {
            title: "Last-layer PCA projection (Z-scored)".into(),
            matrix: scores,
            row_labels: labels,
            col_labels: (1..=k).map(|i| format!("PC{i}")).collect(),
            color_scale: ColorScale::DivergingZ { limit },
            row_blocks: blocks,
            col_blocks: Vec::new(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.matrix.len(), self.matrix.first().map_or(0, Vec::len))
    }

    pub fn validate(&self) -> Result<(), ReportError> {
        let (rows, cols) = self.shape();
        if rows == 0 || cols == 0 {
            return Err(ReportError::InvalidSpec("empty matrix".into()));
        }
        if self.matrix.iter().any(|r| r.len() != cols) {
            return Err(ReportError::InvalidSpec("ragged matrix".into()));
        }
        if self.row_labels.len() != rows || self.col_labels.len() != cols {
            return Err(ReportError::InvalidSpec(format!(
                "{} row / {} column labels for a {rows}x{cols} matrix",
                self.row_labels.len(),
                self.col_labels.len()
            )));
        }
        for (name, blocks, n) in [("row", &self.row_blocks, rows), ("column", &self.col_blocks, cols)] {
            if blocks.windows(2).any(|w| w[0] >= w[1]) || blocks.iter().any(|&b| b == 0 || b >= n) {
                return Err(ReportError::InvalidSpec(format!(
                    "{name} block boundaries {blocks:?} must be strictly increasing within 1..{n}"
                )));
            }
        }
        if let ColorScale::DivergingZ { limit } = self.color_scale {
            if !(limit.is_finite() && limit > 0.0) {
                return Err(ReportError::InvalidSpec("diverging limit must be positive".into()));
            }
        }
        Ok(())
    }
}

fn hex(c: [u8; 3]) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn svg_bytes(spec: &HeatmapSpec) -> Vec<u8> {
    let (rows, cols) = spec.shape();
    let width = SVG_LEFT + cols * CELL_PX + 8;
    let height = SVG_TOP + rows * CELL_PX + 8;
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(s, r#"<title>{}</title>"#, xml_escape(&spec.title));
    let _ = writeln!(s, r##"<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>"##);
    let _ = writeln!(s, r#"<g font-family="monospace" font-size="9">"#);
    for (j, label) in spec.col_labels.iter().enumerate() {
        let x = SVG_LEFT + j * CELL_PX + CELL_PX / 2;
        let y = SVG_TOP - 4;
        let _ = writeln!(s, r#"<text x="{x}" y="{y}" transform="rotate(-60 {x} {y})">{}</text>"#, xml_escape(label));
    }
    for (i, label) in spec.row_labels.iter().enumerate() {
        let y = SVG_TOP + i * CELL_PX + CELL_PX * 3 / 4;
        let _ = writeln!(s, r#"<text x="{}" y="{y}" text-anchor="end">{}</text>"#, SVG_LEFT - 4, xml_escape(label));
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<g shape-rendering="crispEdges">"#);
    for (i, row) in spec.matrix.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{CELL_PX}" height="{CELL_PX}" fill="{}"><title>{:.4}</title></rect>"#,
                SVG_LEFT + j * CELL_PX,
                SVG_TOP + i * CELL_PX,
                hex(spec.color_scale.color(*v)),
                v
            );
        }
    }
    let sep = hex(SEPARATOR);
    for &b in &spec.row_blocks {
        let y = SVG_TOP + b * CELL_PX;
        let _ = writeln!(
            s,
            r#"<line x1="{SVG_LEFT}" y1="{y}" x2="{}" y2="{y}" stroke="{sep}" stroke-width="1"/>"#,
            SVG_LEFT + cols * CELL_PX
        );
    }
    for &b in &spec.col_blocks {
        let x = SVG_LEFT + b * CELL_PX;
        let _ = writeln!(
            s,
            r#"<line x1="{x}" y1="{SVG_TOP}" x2="{x}" y2="{}" stroke="{sep}" stroke-width="1"/>"#,
            SVG_TOP + rows * CELL_PX
        );
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, "</svg>");
    s.into_bytes()
}

// Labels ride along as header comments since PPM has no text.
fn ppm_bytes(spec: &HeatmapSpec) -> Vec<u8> {
    let (rows, cols) = spec.shape();
    let (w, h) = (cols * CELL_PX, rows * CELL_PX);
    let mut header = String::from("P6\n");
    let _ = writeln!(header, "# {}", spec.title.replace('\n', " "));
    let _ = writeln!(header, "# rows: {}", spec.row_labels.join(", "));
    let _ = writeln!(header, "# cols: {}", spec.col_labels.join(", "));
    let _ = writeln!(header, "# cell: {CELL_PX}");
    let _ = write!(header, "{w} {h}\n255\n");
    let mut out = header.into_bytes();
    out.reserve(w * h * 3);
    for y in 0..h {
        let (ri, on_row_sep) = (y / CELL_PX, y % CELL_PX == 0 && spec.row_blocks.contains(&(y / CELL_PX)));
        for x in 0..w {
            let ci = x / CELL_PX;
            let on_col_sep = x % CELL_PX == 0 && spec.col_blocks.contains(&ci);
            let c = if on_row_sep || on_col_sep { SEPARATOR } else { spec.color_scale.color(spec.matrix[ri][ci]) };
            out.extend_from_slice(&c);
        }
    }
    out
}

pub fn heatmap_bytes(spec: &HeatmapSpec, format: ImageFormat) -> Result<Vec<u8>, ReportError> {
    spec.validate()?;
    Ok(match format {
        ImageFormat::Svg => svg_bytes(spec),
        ImageFormat::Ppm => ppm_bytes(spec),
    })
}

/// Writes a heatmap; identical specs give byte-identical files.
pub fn render_heatmap(spec: &HeatmapSpec, path: impl AsRef<Path>, format: ImageFormat) -> Result<(), ReportError> {
    let path = path.as_ref();
    let bytes = heatmap_bytes(spec, format)?;
    std::fs::write(path, bytes).map_err(|source| ReportError::Io { path: path.display().to_string(), source })
}

/// A decoded binary PPM image.
#[derive(Debug, Clone, PartialEq)]
pub struct PpmImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl PpmImage {
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }
}

/// Decodes a P6 image with maxval 255, skipping header comments.
pub fn decode_ppm(bytes: &[u8]) -> Option<PpmImage> {
    let mut pos = 0;
    let mut fields = Vec::new();
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if bytes.get(pos) == Some(&b'#') {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return None;
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).ok()?.to_string());
    }
    if fields[0] != "P6" || fields[3] != "255" {
        return None;
    }
    let (width, height): (usize, usize) = (fields[1].parse().ok()?, fields[2].parse().ok()?);
    let data = bytes.get(pos + 1..)?;
    if data.len() != width * height * 3 {
        return None;
    }
    let pixels = data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    Some(PpmImage { width, height, pixels })
}

/// Inputs to the markdown report. Every number printed comes from these
/// serialized intermediates; the renderer only formats.
#[derive(Debug, Clone, Default)]
pub struct ReportInputs<'a> {
    pub stats: Option<&'a StatsReport>,
    pub audit: Option<&'a AuditOutcome>,
    pub latent: Option<&'a LatentAnalysis>,
    /// `(caption, relative path)` pairs.
    pub heatmaps: Vec<(String, String)>,
}

fn pct(rate: f64) -> String {
    format!("{:.1}", 100.0 * rate)
}

fn pval(p: f64) -> String {
    format!("{p:.3e}")
}

fn title_case(c: ConditionId) -> &'static str {
    match c {
        ConditionId::Base => "Base",
        ConditionId::Analytic => "Analytic adapter",
        ConditionId::Conflict => "Conflict adapter",
    }
}

fn test_row(out: &mut String, name: &str, t: &Option<TestResult>) {
    match t {
        Some(t) => {
            let stat = t.statistic.map_or("-".to_string(), |s| format!("{s:.4}"));
            let _ = writeln!(
                out,
                "| {name} | {} {} / {} {} | {stat} | {} |",
                t.table[0][0],
                t.table[0][1],
                t.table[1][0],
                t.table[1][1],
                pval(t.p_value)
            );
        }
        None => {
            let _ = writeln!(out, "| {name} | degenerate | - | - |");
        }
    }
}

pub fn render_report(inputs: &ReportInputs<'_>) -> Result<String, ReportError> {
    let stats = inputs.stats.ok_or(ReportError::MissingSection("stats"))?;
    if stats.summaries.is_empty() {
        return Err(ReportError::NoSummaries);
    }
    let mut out = String::new();
    let _ = writeln!(out, "# Contradiction probe analysis\n");

    let _ = writeln!(out, "## Behavioral outcomes\n");
    let _ = writeln!(
        out,
        "| Condition | N | Synthesis n | Synthesis % | Genesis n | Genesis % | Pick-One n | Pick-One % |"
    );
    let _ = writeln!(out, "|---|---:|---:|---:|---:|---:|---:|---:|");
    for s in &stats.summaries {
        let genesis = s.counts.get(&Category::Genesis).copied().unwrap_or(0);
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {} |",
            title_case(s.condition),
            s.n_trials,
            s.synthesis_count,
            pct(s.synthesis_rate),
            genesis,
            pct(s.rates.get(&Category::Genesis).copied().unwrap_or(0.0)),
            s.pick_one_count,
            pct(s.pick_one_rate),
        );
    }
    let _ = writeln!(out, "\nSynthesis = Genesis + Partial Genesis; Pick-One = square + circle.\n");

    let _ = writeln!(out, "### Category counts\n");
    let _ = write!(out, "| Condition |");
    for c in Category::ALL {
        let _ = write!(out, " {c} |");
    }
    let _ = writeln!(out, "\n|---|{}", "---:|".repeat(Category::ALL.len()));
    for s in &stats.summaries {
        let _ = write!(out, "| {} |", title_case(s.condition));
        for c in Category::ALL {
            let n = s.counts.get(&c).copied().unwrap_or(0);
            let r = s.rates.get(&c).copied().unwrap_or(0.0);
            let _ = write!(out, " {n} ({}%) |", pct(r));
        }
        let _ = writeln!(out);
    }

    let _ = writeln!(out, "\n### Trials per prompt\n");
    let _ = writeln!(out, "| Condition | P0 | P1 | P2 | P3 | P4 | P5 | P6 |");
    let _ = writeln!(out, "|---|---:|---:|---:|---:|---:|---:|---:|");
    for s in &stats.summaries {
        let cells: Vec<String> = s.per_prompt.values().map(|n| n.to_string()).collect();
        let _ = writeln!(out, "| {} | {} |", title_case(s.condition), cells.join(" | "));
    }

    for cmp in &stats.comparisons {
        let _ = writeln!(out, "\n### {} vs {}\n", title_case(cmp.reference), title_case(cmp.treatment));
        let _ = writeln!(out, "| Test | Table (a b / c d) | Statistic | p-value |");
        let _ = writeln!(out, "|---|---|---:|---:|");
        test_row(&mut out, "Synthesis, Fisher exact (two-sided)", &cmp.synthesis_fisher);
        test_row(&mut out, "Genesis only, Fisher exact (two-sided)", &cmp.genesis_fisher);
        let chi_name = match &cmp.pick_one_chi_square {
            Some(t) if t.yates => "Pick-One, Pearson chi-square (Yates)",
            _ => "Pick-One, Pearson chi-square",
        };
        test_row(&mut out, chi_name, &cmp.pick_one_chi_square);
        if let Some(r) = cmp.pick_one_ratio {
            let _ = writeln!(out, "\nPick-One rate ratio ({} / {}): {r:.2}", cmp.treatment, cmp.reference);
        }
        if let Some(r) = cmp.synthesis_ratio {
            let _ = writeln!(out, "\nSynthesis rate ratio ({} / {}): {r:.3}", cmp.treatment, cmp.reference);
        }
    }

    if let Some(audit) = inputs.audit {
        let _ = writeln!(out, "\n## Audit of unclassified responses ({})\n", audit.condition);
        let _ = writeln!(out, "| Response category | Count (n) | Percentage (%) |");
        let _ = writeln!(out, "|---|---:|---:|");
        for label in AuditLabel::ALL {
            if let Some(row) = audit.table.rows.iter().find(|r| r.label == label) {
                let _ = writeln!(out, "| {} | {} | {:.1} |", label.title(), row.count, row.percent);
            }
        }
        let total_pct: f64 = audit.table.rows.iter().map(|r| r.percent).sum();
        let _ = writeln!(out, "| *Total* | *{}* | *{total_pct:.1}* |", audit.table.sample_size);
        let p = &audit.projection;
        let _ = write!(
            out,
            "\nUpper bound: {} of {} audited responses were synthesis-like; the two-sided {:.0}% Clopper–Pearson \
             upper limit is {}%. Applied to all {} unclassified {} responses, the maximum synthesis count is \
             {:.1} ({} detected)",
            p.audit_successes,
            p.audit_n,
            100.0 * p.confidence,
            pct(p.rate_upper_bound),
            p.unclassified_n,
            p.condition,
            p.projected_max,
            p.detected_synthesis,
        );
        match (p.reference_condition, p.reference_synthesis) {
            (Some(rc), Some(rs)) => {
                let _ = writeln!(out, ", against {rs} detected for {rc}.");
            }
            _ => {
                let _ = writeln!(out, ".");
            }
        }
    }

    if let Some(latent) = inputs.latent {
        let _ = writeln!(out, "\n## Last-layer geometry\n");
        let _ = writeln!(out, "### Similarity blocks (mean cosine, diagonal excluded)\n");
        let _ = writeln!(out, "| | base | analytic | conflict |");
        let _ = writeln!(out, "|---|---:|---:|---:|");
        for (i, c) in ConditionId::ALL.iter().enumerate() {
            let m = latent.blocks.means[i];
            let _ = writeln!(out, "| {c} | {:.4} | {:.4} | {:.4} |", m[0], m[1], m[2]);
        }
        let _ = writeln!(
            out,
            "\nWithin-condition mean {:.4}; between-condition mean {:.4}.",
            latent.blocks.within_mean, latent.blocks.between_mean
        );

        let l = &latent.loocv;
        let _ = writeln!(out, "\n### Leave-one-prompt-out LDA ({} PCA fit)\n", fit_name(l.pca_fit));
        let _ = writeln!(out, "| k | Accuracy (%) |");
        let _ = writeln!(out, "|---:|---:|");
        for (k, acc) in &l.accuracy_by_k {
            let _ = writeln!(out, "| {k} | {} |", pct(*acc));
        }
        let _ = writeln!(out, "\nBest accuracy {}% with {}.", pct(l.accuracy), components(l.components_used));
        if let Some(alt) = &latent.loocv_alternate {
            let _ = writeln!(
                out,
                "With {} PCA fit: {}% with {}.",
                fit_name(alt.pca_fit),
                pct(alt.accuracy),
                components(alt.components_used)
            );
        }

        let p = &latent.permutation;
        let _ = writeln!(out, "\n### Permutation test\n");
        let _ = writeln!(
            out,
            "Condition R² in {}-component PCA space: {:.4}; p = {} ({} permutations, {} mode, seed {}); null mean {:.4}.",
            p.k,
            p.observed_r2,
            pval(p.p_value),
            p.permutation_count,
            perm_name(p.mode),
            p.seed,
            p.null_mean,
        );

        let c = &latent.collapse;
        let _ = writeln!(out, "\n### Base/conflict collapse by prompt\n");
        let _ = writeln!(out, "| Prompt | Cosine | Euclidean |");
        let _ = writeln!(out, "|---|---:|---:|");
        for row in &c.per_prompt {
            let _ = writeln!(
                out,
                "| {} | {:.4} | {:.4} |",
                row.prompt, row.base_conflict_cosine, row.base_conflict_euclidean
            );
        }
        let tie = if c.tied_with.is_empty() {
            String::new()
        } else {
            let names: Vec<String> = c.tied_with.iter().map(ToString::to_string).collect();
            format!(" (tied with {})", names.join(", "))
        };
        let _ = writeln!(
            out,
            "\nClosest base/conflict pair: {}{tie}. P6 cosine excess over P0-P5 mean: {:+.4}.",
            c.collapse_prompt, c.cosine_excess
        );
    }

    if !inputs.heatmaps.is_empty() {
        let _ = writeln!(out, "\n## Heatmaps\n");
        for (caption, path) in &inputs.heatmaps {
            if path.ends_with(".svg") {
                let _ = writeln!(out, "![{caption}]({path})\n");
            } else {
                let _ = writeln!(out, "- [{caption}]({path})");
            }
        }
    }
    Ok(out)
}

fn components(k: usize) -> String {
    if k == 1 {
        "1 component".into()
    } else {
        format!("{k} components")
    }
}

fn fit_name(f: crate::geometry::PcaFit) -> &'static str {
    match f {
        crate::geometry::PcaFit::PerFold => "per-fold",
        crate::geometry::PcaFit::Global => "global",
    }
}

fn perm_name(m: crate::geometry::PermutationMode) -> &'static str {
    match m {
        crate::geometry::PermutationMode::FreeShuffle => "free",
        crate::geometry::PermutationMode::WithinPromptShuffle => "within-prompt",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_anchors() {
        assert_eq!(ColorScale::SequentialUnit.color(0.0), SEQ_LOW);
        assert_eq!(ColorScale::SequentialUnit.color(1.0), SEQ_HIGH);
        assert_eq!(ColorScale::SequentialUnit.color(7.0), SEQ_HIGH);
        assert_eq!(ColorScale::SequentialUnit.color(-0.2), SEQ_LOW);
        let z = ColorScale::DivergingZ { limit: 3.0 };
        assert_eq!(z.color(0.0), DIV_MID);
        assert_eq!(z.color(-3.0), DIV_NEG);
        assert_eq!(z.color(9.0), DIV_POS);
    }

    #[test]
    fn spec_validation() {
        let mut spec = HeatmapSpec::similarity(vec![vec![1.0; 21]; 21]);
        spec.validate().unwrap();
        spec.row_blocks = vec![14, 7];
        assert!(spec.validate().is_err());
        let mut spec = HeatmapSpec::similarity(vec![vec![1.0; 21]; 21]);
        spec.col_labels.pop();
        assert!(spec.validate().is_err());
        let spec = HeatmapSpec::projection(vec![vec![0.0; 10]; 21], 0.0);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn ppm_round_trip_through_decoder() {
        let spec = HeatmapSpec::projection(vec![vec![0.0; 10]; 21], 3.0);
        let bytes = heatmap_bytes(&spec, ImageFormat::Ppm).unwrap();
        let img = decode_ppm(&bytes).unwrap();
        assert_eq!((img.width, img.height), (10 * CELL_PX, 21 * CELL_PX));
        assert_eq!(img.pixel(CELL_PX / 2, CELL_PX / 2), DIV_MID);
        assert_eq!(img.pixel(0, 7 * CELL_PX), SEPARATOR);
    }

    #[test]
    fn svg_has_labels_and_separators() {
        let spec = HeatmapSpec::similarity(vec![vec![0.5; 21]; 21]);
        let svg = String::from_utf8(heatmap_bytes(&spec, ImageFormat::Svg).unwrap()).unwrap();
        assert!(svg.contains(">base P0<"));
        assert!(svg.contains(">conflict P6<"));
        assert_eq!(svg.matches("<line ").count(), 4);
        assert_eq!(svg.matches("<rect ").count(), 21 * 21 + 1);
    }

    #[test]
    fn unwritable_path() {
        let spec = HeatmapSpec::similarity(vec![vec![0.5; 21]; 21]);
        let err = render_heatmap(&spec, "/nonexistent-dir/x/heat.svg", ImageFormat::Svg).unwrap_err();
        assert!(matches!(err, ReportError::Io { .. }));
    }

    #[test]
    fn report_requires_summaries() {
        assert!(matches!(render_report(&ReportInputs::default()), Err(ReportError::MissingSection("stats"))));
        let empty = StatsReport { summaries: vec![], comparisons: vec![] };
        let err = render_report(&ReportInputs { stats: Some(&empty), ..Default::default() }).unwrap_err();
        assert_eq!(err.to_string(), "no condition summaries");
    }
}
