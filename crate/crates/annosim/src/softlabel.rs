//! Similarity-weighted soft labels for missing annotations, and the
//! confidence score that gates pseudo-label imputation.
//!
//! A soft label is the convex combination of other annotators' predicted
//! distributions under agreement-derived weights. Its confidence is the
//! maximum probability times one minus the normalized entropy; both factors
//! must be high for a pseudo-label to clear the imputation threshold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ClassDistribution;

/// Which confidence formulation to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceVariant {
    /// `max(p)` alone.
    MaxOnly,
    /// `1 - H(p)/H_max` alone.
    EntropyOnly,
    /// The product of the two.
    #[default]
    Combined,
}

/// Soft label generated for one missing (sample, annotator) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabelResult {
    pub target_annotator: usize,
    pub distribution: ClassDistribution,
    pub confidence: f64,
    /// (annotator, weight) pairs; weights sum to 1.
    pub contributors: Vec<(usize, f64)>,
    /// Argmax of the distribution, ties broken to the lowest class.
    pub argmax_label: usize,
}

/// Weighted sum of contributor predictions. `weights` must be normalized
/// (as produced by [`crate::agreement::soft_label_weights`]).
pub fn generate_soft_label(
    predictions: &[ClassDistribution],
    weights: &[f64],
) -> Result<ClassDistribution> {
    if predictions.is_empty() {
        return Err(Error::InvalidArgument("no predictions to aggregate".into()));
    }
    if predictions.len() != weights.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions but {} weights",
            predictions.len(),
            weights.len()
        )));
    }
    let n = predictions[0].len();
    let mut combined = vec![0.0f64; n];
    for (pred, &w) in predictions.iter().zip(weights) {
        if pred.len() != n {
            return Err(Error::InvalidArgument("predictions have mixed class counts".into()));
        }
        for (c, &p) in combined.iter_mut().zip(pred.probs()) {
            *c += w * p;
        }
    }
    ClassDistribution::new(combined)
}

/// Confidence of a distribution: `max(p) * (1 - H(p)/H_max)` with entropy in
/// nats and `H_max = ln N`. The ratio is base-invariant, so any logarithm
/// base gives the same score. Result is clamped into [0, 1].
pub fn confidence(dist: &ClassDistribution) -> f64 {
    debug_assert!(dist.len() >= 2);
    let h_max = (dist.len() as f64).ln();
    let score = dist.max_prob() * (1.0 - dist.entropy() / h_max);
    score.clamp(0.0, 1.0)
}

/// One of the three ablated confidence formulations.
pub fn confidence_variant(dist: &ClassDistribution, variant: ConfidenceVariant) -> f64 {
    match variant {
        ConfidenceVariant::MaxOnly => dist.max_prob(),
        ConfidenceVariant::EntropyOnly => {
            let h_max = (dist.len() as f64).ln();
            (1.0 - dist.entropy() / h_max).clamp(0.0, 1.0)
        }
        ConfidenceVariant::Combined => confidence(dist),
    }
}

/// Assembles the full soft-label record for a target annotator.
pub fn build_soft_label(
    target_annotator: usize,
    contributor_ids: &[usize],
    predictions: &[ClassDistribution],
    weights: &[f64],
    variant: ConfidenceVariant,
) -> Result<SoftLabelResult> {
    if contributor_ids.len() != predictions.len() {
        return Err(Error::InvalidArgument(format!(
            "{} contributor ids but {} predictions",
            contributor_ids.len(),
            predictions.len()
        )));
    }
    let distribution = generate_soft_label(predictions, weights)?;
    let confidence = confidence_variant(&distribution, variant);
    let argmax_label = distribution.argmax();
    Ok(SoftLabelResult {
        target_annotator,
        distribution,
        confidence,
        contributors: contributor_ids.iter().copied().zip(weights.iter().copied()).collect(),
        argmax_label,
    })
}
