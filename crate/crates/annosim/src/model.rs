//! Per-annotator probabilistic classifier and its training losses.
//!
//! The reference model is multinomial logistic regression: softmax over
//! `W x + b`. Both losses return the gradient with respect to the logits so
//! the analytic gradients stay checkable against finite differences; the
//! chain rule to the parameters is a rank-one outer product with the input.
//! Richer models can slot in behind the same features-to-distribution,
//! gradient-to-update surface.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to probabilities inside logarithms so losses stay bounded
/// and gradients finite.
pub const PROB_EPSILON: f64 = 1e-12;

/// Length-N probability vector: entries non-negative, summing to 1 within
/// 1e-9.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution {
    probs: Vec<f64>,
}

impl ClassDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "distribution needs at least 2 classes, got {}",
                probs.len()
            )));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidArgument(format!("invalid probabilities {probs:?}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        Ok(Self { probs })
    }

    pub fn uniform(n: usize) -> Self {
        Self { probs: vec![1.0 / n as f64; n] }
    }

    pub fn one_hot(n: usize, class: usize) -> Self {
        let mut probs = vec![0.0; n];
        probs[class] = 1.0;
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Index of the largest probability; ties break to the lowest class.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate().skip(1) {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    pub fn max_prob(&self) -> f64 {
        self.probs[self.argmax()]
    }

    /// Shannon entropy in nats, with 0 ln 0 taken as 0.
    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>()
    }
}

/// Gradient of a loss with respect to one model's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradient {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Multinomial logistic regression for a single annotator.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatorModel {
    annotator_id: usize,
    weights: Array2<f64>,
    bias: Array1<f64>,
    step_size: f64,
    updates_applied: u64,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    annotator_id: usize,
    #[serde(rename = "N")]
    num_classes: usize,
    #[serde(rename = "d")]
    feature_dim: usize,
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    updates_applied: u64,
}

impl AnnotatorModel {
    /// Zero-initialized model.
    pub fn new(annotator_id: usize, num_classes: usize, feature_dim: usize, step_size: f64) -> Self {
        Self {
            annotator_id,
            weights: Array2::zeros((num_classes, feature_dim)),
            bias: Array1::zeros(num_classes),
            step_size,
            updates_applied: 0,
        }
    }

    /// Gaussian-perturbed initialization for symmetry breaking.
    pub fn init_random<R: Rng>(mut self, rng: &mut R, scale: f64) -> Self {
        let normal = Normal::new(0.0, scale).expect("valid stddev");
        self.weights.mapv_inplace(|_| normal.sample(rng));
        self.bias.mapv_inplace(|_| normal.sample(rng));
        self
    }

    pub fn annotator_id(&self) -> usize {
        self.annotator_id
    }

    pub fn num_classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    pub fn updates_applied(&self) -> u64 {
        self.updates_applied
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn bias(&self) -> &Array1<f64> {
        &self.bias
    }

    /// Softmax of `W x + b`.
    pub fn predict(&self, features: &[f64]) -> Result<ClassDistribution> {
        if features.len() != self.feature_dim() {
            return Err(Error::InvalidArgument(format!(
                "feature dimension {} does not match model dimension {}",
                features.len(),
                self.feature_dim()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite feature vector".into()));
        }
        let x = ArrayView1::from(features);
        let logits = self.weights.dot(&x) + &self.bias;
        Ok(softmax(logits.as_slice().expect("contiguous logits")))
    }

    /// Chain rule from a logit-space gradient to the parameter gradient:
    /// `dL/dW = g x^T`, `dL/db = g`.
    pub fn param_gradient(&self, logit_grad: &[f64], features: &[f64]) -> Result<ParamGradient> {
        if logit_grad.len() != self.num_classes() || features.len() != self.feature_dim() {
            return Err(Error::InvalidArgument("gradient dimensions do not match model".into()));
        }
        let weights =
            Array2::from_shape_fn((self.num_classes(), self.feature_dim()), |(l, i)| {
                logit_grad[l] * features[i]
            });
        Ok(ParamGradient { weights, bias: Array1::from(logit_grad.to_vec()) })
    }

    /// One SGD step: `params -= step_size * scale * gradient`.
    pub fn apply_update(&mut self, gradient: &ParamGradient, scale: f64) -> Result<()> {
        if gradient.weights.dim() != self.weights.dim() || gradient.bias.len() != self.bias.len() {
            return Err(Error::InvalidArgument("gradient dimensions do not match model".into()));
        }
        if gradient.weights.iter().chain(gradient.bias.iter()).any(|g| !g.is_finite())
            || !scale.is_finite()
        {
            return Err(Error::Numeric(format!(
                "non-finite gradient for annotator {}",
                self.annotator_id
            )));
        }
        let step = self.step_size * scale;
        self.weights.scaled_add(-step, &gradient.weights);
        self.bias.scaled_add(-step, &gradient.bias);
        self.updates_applied += 1;
        Ok(())
    }

    pub fn save_checkpoint<W: Write>(&self, w: W) -> Result<()> {
        let ck = Checkpoint {
            annotator_id: self.annotator_id,
            num_classes: self.num_classes(),
            feature_dim: self.feature_dim(),
            weights: self.weights.rows().into_iter().map(|r| r.to_vec()).collect(),
            bias: self.bias.to_vec(),
            updates_applied: self.updates_applied,
        };
        serde_json::to_writer(w, &ck)?;
        Ok(())
    }

    pub fn load_checkpoint<R: Read>(r: R, step_size: f64) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_reader(r)?;
        if ck.weights.len() != ck.num_classes
            || ck.weights.iter().any(|row| row.len() != ck.feature_dim)
            || ck.bias.len() != ck.num_classes
        {
            return Err(Error::Validation("checkpoint dimensions are inconsistent".into()));
        }
        let flat: Vec<f64> = ck.weights.iter().flatten().copied().collect();
        let weights = Array2::from_shape_vec((ck.num_classes, ck.feature_dim), flat)
            .map_err(|e| Error::Validation(e.to_string()))?;
        Ok(Self {
            annotator_id: ck.annotator_id,
            weights,
            bias: Array1::from(ck.bias),
            step_size,
            updates_applied: ck.updates_applied,
        })
    }
}

/// Numerically stable softmax.
fn softmax(logits: &[f64]) -> ClassDistribution {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    ClassDistribution { probs: exps.into_iter().map(|e| e / total).collect() }
}

/// Cross-entropy against a one-hot label: `-ln pred[label]`. Returns the loss
/// and its gradient with respect to the logits, `pred - onehot(label)`.
pub fn ce_loss(pred: &ClassDistribution, label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= pred.len() {
        return Err(Error::InvalidArgument(format!(
            "label {label} out of range for {} classes",
            pred.len()
        )));
    }
    let loss = -pred.probs[label].max(PROB_EPSILON).ln();
    let mut grad = pred.probs.clone();
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// KL divergence with the prediction as the first argument:
/// `sum_l pred[l] ln(pred[l] / soft[l])`. Returns the loss and its gradient
/// with respect to the logits, `pred[j] * (ln(pred[j]/soft[j]) - KL)`.
pub fn kl_loss(pred: &ClassDistribution, soft: &ClassDistribution) -> Result<(f64, Vec<f64>)> {
    if pred.len() != soft.len() {
        return Err(Error::InvalidArgument(format!(
            "distribution lengths differ ({} vs {})",
            pred.len(),
            soft.len()
        )));
    }
    let log_ratio: Vec<f64> = pred
        .probs
        .iter()
        .zip(&soft.probs)
        .map(|(&p, &q)| (p.max(PROB_EPSILON) / q.max(PROB_EPSILON)).ln())
        .collect();
    let loss: f64 = pred
        .probs
        .iter()
        .zip(&log_ratio)
        .map(|(&p, &lr)| p * lr)
        .sum::<f64>()
        .max(0.0);
    let grad: Vec<f64> = pred
        .probs
        .iter()
        .zip(&log_ratio)
        .map(|(&p, &lr)| p * (lr - loss))
        .collect();
    Ok((loss, grad))
}

/// Reversed direction, `sum_l soft[l] ln(soft[l] / pred[l])`, kept for
/// side-by-side comparison. Logit gradient is `pred - soft`.
pub fn kl_loss_reversed(pred: &ClassDistribution, soft: &ClassDistribution) -> Result<(f64, Vec<f64>)> {
    if pred.len() != soft.len() {
        return Err(Error::InvalidArgument(format!(
            "distribution lengths differ ({} vs {})",
            pred.len(),
            soft.len()
        )));
    }
    let loss: f64 = soft
        .probs
        .iter()
        .zip(&pred.probs)
        .map(|(&q, &p)| {
            if q > 0.0 {
                q * (q.max(PROB_EPSILON) / p.max(PROB_EPSILON)).ln()
            } else {
                0.0
            }
        })
        .sum::<f64>()
        .max(0.0);
    let grad: Vec<f64> = pred.probs.iter().zip(&soft.probs).map(|(&p, &q)| p - q).collect();
    Ok((loss, grad))
}
