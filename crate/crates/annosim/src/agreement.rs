//! Pairwise inter-annotator agreement and the similarity matrix.
//!
//! The default metric is Cohen's kappa, computed per annotator pair on the
//! samples both have labeled. Krippendorff's alpha (two-coder nominal form)
//! and Pearson correlation over integer class codes are available as
//! alternatives. Pairs with too little overlap fall back to a similarity of
//! zero instead of a noisy estimate.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{AnnotationMatrix, Cell};

/// Threshold below which a float is treated as zero in degenerate-case
/// checks (e.g. chance agreement of exactly one).
const DEGENERATE_EPS: f64 = 1e-12;

/// Agreement metric used to fill the similarity matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityMetric {
    #[default]
    CohenKappa,
    KrippendorffAlpha,
    Pearson,
}

impl fmt::Display for SimilarityMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            SimilarityMetric::CohenKappa => "cohen_kappa",
            SimilarityMetric::KrippendorffAlpha => "krippendorff_alpha",
            SimilarityMetric::Pearson => "pearson",
        };
        f.write_str(name)
    }
}

impl FromStr for SimilarityMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cohen_kappa" | "kappa" => Ok(SimilarityMetric::CohenKappa),
            "krippendorff_alpha" | "alpha" => Ok(SimilarityMetric::KrippendorffAlpha),
            "pearson" => Ok(SimilarityMetric::Pearson),
            other => Err(Error::InvalidArgument(format!("unknown similarity metric {other:?}"))),
        }
    }
}

impl SimilarityMetric {
    /// Evaluates the metric on paired label sequences.
    pub fn compute(&self, a: &[usize], b: &[usize]) -> Result<f64> {
        match self {
            SimilarityMetric::CohenKappa => cohen_kappa(a, b),
            SimilarityMetric::KrippendorffAlpha => krippendorff_alpha(a, b),
            SimilarityMetric::Pearson => pearson_similarity(a, b),
        }
    }
}

fn check_pair(a: &[usize], b: &[usize]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "label sequences have different lengths ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::InvalidArgument("empty overlap".into()));
    }
    Ok(())
}

/// Cohen's kappa: (p_o - p_e) / (1 - p_e), with p_o the observed agreement
/// rate and p_e chance agreement from the two marginal label distributions.
/// When p_e is 1 (both sequences constant and equal) the coefficient is
/// defined as 1 if the sequences agree everywhere, else 0.
pub fn cohen_kappa(a: &[usize], b: &[usize]) -> Result<f64> {
    check_pair(a, b)?;
    let n = a.len() as f64;
    let classes = a.iter().chain(b.iter()).max().unwrap() + 1;
    let mut freq_a = vec![0.0f64; classes];
    let mut freq_b = vec![0.0f64; classes];
    let mut agree = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        freq_a[x] += 1.0;
        freq_b[y] += 1.0;
        if x == y {
            agree += 1;
        }
    }
    let p_o = agree as f64 / n;
    let p_e: f64 = freq_a
        .iter()
        .zip(&freq_b)
        .map(|(fa, fb)| (fa / n) * (fb / n))
        .sum();
    if (1.0 - p_e).abs() < DEGENERATE_EPS {
        return Ok(if agree == a.len() { 1.0 } else { 0.0 });
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Krippendorff's alpha for two coders over nominal labels, via the
/// coincidence-matrix formulation. If the pooled values show no variation at
/// all (expected disagreement zero), alpha is defined as 1 when observed
/// disagreement is also zero, else 0.
pub fn krippendorff_alpha(a: &[usize], b: &[usize]) -> Result<f64> {
    check_pair(a, b)?;
    let n = a.len();
    let classes = a.iter().chain(b.iter()).max().unwrap() + 1;
    // Each unit holds two values; both ordered pairs enter the coincidence
    // matrix with weight 1/(m_u - 1) = 1.
    let mut coincidence = vec![0.0f64; classes * classes];
    for (&x, &y) in a.iter().zip(b) {
        coincidence[x * classes + y] += 1.0;
        coincidence[y * classes + x] += 1.0;
    }
    let totals: Vec<f64> = (0..classes)
        .map(|c| (0..classes).map(|k| coincidence[c * classes + k]).sum())
        .collect();
    let observed_off: f64 = (0..classes)
        .flat_map(|c| (0..classes).map(move |k| (c, k)))
        .filter(|(c, k)| c != k)
        .map(|(c, k)| coincidence[c * classes + k])
        .sum();
    let expected_off: f64 = (0..classes)
        .flat_map(|c| (0..classes).map(move |k| (c, k)))
        .filter(|(c, k)| c != k)
        .map(|(c, k)| totals[c] * totals[k])
        .sum();
    if expected_off.abs() < DEGENERATE_EPS {
        return Ok(if observed_off.abs() < DEGENERATE_EPS { 1.0 } else { 0.0 });
    }
    let total = 2.0 * n as f64;
    Ok(1.0 - (total - 1.0) * observed_off / expected_off)
}

/// Pearson correlation of class indices treated as ordinal codes. Returns 0
/// when either sequence has zero variance.
pub fn pearson_similarity(a: &[usize], b: &[usize]) -> Result<f64> {
    check_pair(a, b)?;
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<usize>() as f64 / n;
    let mean_b = b.iter().sum::<usize>() as f64 / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let dx = x as f64 - mean_a;
        let dy = y as f64 - mean_b;
        cov += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
    }
    if var_a < DEGENERATE_EPS || var_b < DEGENERATE_EPS {
        return Ok(0.0);
    }
    Ok((cov / (var_a.sqrt() * var_b.sqrt())).clamp(-1.0, 1.0))
}

/// How the similarity matrix is computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityConfig {
    pub metric: SimilarityMetric,
    /// Count imputed cells as labeled when collecting pairwise overlap.
    pub include_imputed: bool,
    /// Pairs with fewer jointly labeled samples default to similarity 0.
    pub min_overlap: usize,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        Self {
            metric: SimilarityMetric::CohenKappa,
            include_imputed: false,
            min_overlap: 3,
        }
    }
}

/// Symmetric K x K inter-annotator agreement matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    num_annotators: usize,
    values: Vec<f64>,
    overlap_counts: Vec<usize>,
    metric: SimilarityMetric,
    min_overlap: usize,
    version: u64,
}

impl SimilarityMatrix {
    /// Computes the matrix from scratch (version 1).
    pub fn compute(matrix: &AnnotationMatrix, cfg: &SimilarityConfig) -> Result<Self> {
        Self::compute_versioned(matrix, cfg, 1)
    }

    /// Recomputes on the (possibly imputed) matrix, bumping the version.
    pub fn recompute(&self, matrix: &AnnotationMatrix, cfg: &SimilarityConfig) -> Result<Self> {
        Self::compute_versioned(matrix, cfg, self.version + 1)
    }

    fn compute_versioned(
        matrix: &AnnotationMatrix,
        cfg: &SimilarityConfig,
        version: u64,
    ) -> Result<Self> {
        let k = matrix.num_annotators();
        if k < 2 {
            return Err(Error::InvalidArgument(format!(
                "similarity matrix needs at least 2 annotators, got {k}"
            )));
        }
        let qualifies = |cell: Cell| match cell {
            Cell::Observed(l) => Some(l),
            Cell::Imputed { label, .. } if cfg.include_imputed => Some(label),
            _ => None,
        };
        let mut values = vec![0.0f64; k * k];
        let mut overlaps = vec![0usize; k * k];
        for i in 0..k {
            values[i * k + i] = 1.0;
            overlaps[i * k + i] = (0..matrix.num_samples())
                .filter(|&s| qualifies(matrix.cell(s, i)).is_some())
                .count();
        }
        for i in 0..k {
            for j in (i + 1)..k {
                let mut a = Vec::new();
                let mut b = Vec::new();
                for s in 0..matrix.num_samples() {
                    if let (Some(la), Some(lb)) =
                        (qualifies(matrix.cell(s, i)), qualifies(matrix.cell(s, j)))
                    {
                        a.push(la);
                        b.push(lb);
                    }
                }
                overlaps[i * k + j] = a.len();
                overlaps[j * k + i] = a.len();
                let value = if a.len() >= cfg.min_overlap && !a.is_empty() {
                    cfg.metric.compute(&a, &b)?
                } else {
                    0.0
                };
                values[i * k + j] = value;
                values[j * k + i] = value;
            }
        }
        Ok(Self {
            num_annotators: k,
            values,
            overlap_counts: overlaps,
            metric: cfg.metric,
            min_overlap: cfg.min_overlap,
            version,
        })
    }

    pub fn num_annotators(&self) -> usize {
        self.num_annotators
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.num_annotators + j]
    }

    pub fn overlap(&self, i: usize, j: usize) -> usize {
        self.overlap_counts[i * self.num_annotators + j]
    }

    pub fn metric(&self) -> SimilarityMetric {
        self.metric
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// CSV export: K rows of K values at 6-decimal fixed precision.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for i in 0..self.num_annotators {
            let row: Vec<String> = (0..self.num_annotators)
                .map(|j| format!("{:.6}", self.value(i, j)))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Sidecar metadata for the CSV export.
    pub fn sidecar_json(&self) -> String {
        format!(
            "{{\"metric\":\"{}\",\"version\":{},\"min_overlap\":{}}}\n",
            self.metric, self.version, self.min_overlap
        )
    }
}

/// Normalized soft-label weights of `available` annotators toward `target`.
/// Negative similarities clamp to zero before normalization; if everything
/// clamps away, the weights fall back to uniform.
pub fn soft_label_weights(
    sim: &SimilarityMatrix,
    target: usize,
    available: &[usize],
) -> Result<Vec<f64>> {
    if available.is_empty() {
        return Err(Error::InvalidArgument("no available annotators for soft label".into()));
    }
    if available.contains(&target) {
        return Err(Error::InvalidArgument(format!(
            "target annotator {target} cannot contribute to its own soft label"
        )));
    }
    let raw: Vec<f64> = available
        .iter()
        .map(|&a| sim.value(a, target).max(0.0))
        .collect();
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        let w = 1.0 / available.len() as f64;
        return Ok(vec![w; available.len()]);
    }
    Ok(raw.into_iter().map(|v| v / total).collect())
}
