//! Synthetic multi-annotator datasets with planted structure.
//!
//! Samples draw a true class from a prior; features are class-conditional
//! Gaussians; each annotator labels through its own confusion matrix, built
//! from a group-level base plus per-member perturbation so that annotators
//! in the same group agree more with each other than across groups. Cells
//! then go missing independently at per-annotator rates. The generator keeps
//! every quantity it planted, so tests can check recovered structure against
//! construction.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::AnnotationMatrix;

/// One group of annotators sharing a base confusion matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnotatorGroup {
    /// Number of annotators in the group.
    pub size: usize,
    /// N x N row-stochastic base confusion matrix: row y is the label
    /// distribution given true class y.
    pub confusion: Vec<Vec<f64>>,
    /// Scale of the additive per-member noise on confusion rows.
    pub perturbation: f64,
}

/// Full description of a synthetic dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub num_samples: usize,
    pub num_classes: usize,
    pub feature_dim: usize,
    /// Length-N prior over true classes.
    pub class_prior: Vec<f64>,
    /// N x d mean feature vector per class.
    pub class_feature_means: Vec<Vec<f64>>,
    pub feature_noise_sigma: f64,
    pub annotator_groups: Vec<AnnotatorGroup>,
    /// Length-K per-annotator missing probability, each in [0, 1).
    pub per_annotator_missing_rate: Vec<f64>,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn num_annotators(&self) -> usize {
        self.per_annotator_missing_rate.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_classes;
        if self.num_samples == 0 {
            return Err(Error::Validation("num_samples must be positive".into()));
        }
        if n < 2 {
            return Err(Error::Validation("num_classes must be at least 2".into()));
        }
        if self.class_prior.len() != n {
            return Err(Error::Validation(format!(
                "class_prior has {} entries, expected {n}",
                self.class_prior.len()
            )));
        }
        if self.class_prior.iter().any(|p| *p < 0.0)
            || (self.class_prior.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::Validation("class_prior is not a probability vector".into()));
        }
        if self.class_feature_means.len() != n
            || self.class_feature_means.iter().any(|m| m.len() != self.feature_dim)
        {
            return Err(Error::Validation("class_feature_means must be N x d".into()));
        }
        if self.feature_noise_sigma <= 0.0 {
            return Err(Error::Validation("feature_noise_sigma must be positive".into()));
        }
        if self.annotator_groups.is_empty() {
            return Err(Error::Validation("at least one annotator group required".into()));
        }
        for (g, group) in self.annotator_groups.iter().enumerate() {
            if group.size == 0 {
                return Err(Error::Validation(format!("group {g} is empty")));
            }
            if group.perturbation < 0.0 {
                return Err(Error::Validation(format!("group {g}: negative perturbation")));
            }
            if group.confusion.len() != n {
                return Err(Error::Validation(format!("group {g}: confusion must be N x N")));
            }
            for (row_idx, row) in group.confusion.iter().enumerate() {
                if row.len() != n {
                    return Err(Error::Validation(format!("group {g}: confusion must be N x N")));
                }
                if row.iter().any(|p| *p < 0.0) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(Error::Validation(format!(
                        "group {g}, confusion row {row_idx} is not row-stochastic"
                    )));
                }
            }
        }
        let group_total: usize = self.annotator_groups.iter().map(|g| g.size).sum();
        if group_total != self.num_annotators() {
            return Err(Error::Validation(format!(
                "groups cover {group_total} annotators but {} missing rates given",
                self.num_annotators()
            )));
        }
        if self.per_annotator_missing_rate.iter().any(|r| !(0.0..1.0).contains(r)) {
            return Err(Error::Validation("missing rates must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Everything the generator planted, retained for verification.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    /// True class per sample.
    pub true_classes: Vec<usize>,
    /// S x K annotator labels before any cell went missing.
    pub pre_removal_labels: Vec<Vec<usize>>,
    /// Group index per annotator.
    pub groups: Vec<usize>,
    /// Realized (perturbed) confusion matrix per annotator.
    pub confusions: Vec<Vec<Vec<f64>>>,
}

/// Draws a dataset and its ground truth from the spec. Deterministic per
/// seed.
pub fn generate(spec: &GeneratorSpec) -> Result<(AnnotationMatrix, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.num_classes;
    let k = spec.num_annotators();

    // Per-annotator confusion: group base plus clipped, renormalized noise.
    let mut groups = Vec::with_capacity(k);
    let mut confusions = Vec::with_capacity(k);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    for (g, group) in spec.annotator_groups.iter().enumerate() {
        for _ in 0..group.size {
            groups.push(g);
            let mut conf = Vec::with_capacity(n);
            for row in &group.confusion {
                let mut perturbed: Vec<f64> = row
                    .iter()
                    .map(|&p| (p + group.perturbation * noise.sample(&mut rng)).max(0.0))
                    .collect();
                let total: f64 = perturbed.iter().sum();
                if total < 1e-12 {
                    perturbed = vec![1.0 / n as f64; n];
                } else {
                    for p in &mut perturbed {
                        *p /= total;
                    }
                }
                conf.push(perturbed);
            }
            confusions.push(conf);
        }
    }

    let feature_noise = Normal::new(0.0, spec.feature_noise_sigma).expect("valid sigma");
    let mut true_classes = Vec::with_capacity(spec.num_samples);
    let mut pre_removal = Vec::with_capacity(spec.num_samples);
    let mut features = Vec::with_capacity(spec.num_samples);
    let mut labels: Vec<Vec<Option<usize>>> = Vec::with_capacity(spec.num_samples);
    for _ in 0..spec.num_samples {
        let y = sample_categorical(&mut rng, &spec.class_prior);
        true_classes.push(y);
        let feat: Vec<f64> = spec.class_feature_means[y]
            .iter()
            .map(|&m| m + feature_noise.sample(&mut rng))
            .collect();
        features.push(feat);
        let row: Vec<usize> = (0..k)
            .map(|a| sample_categorical(&mut rng, &confusions[a][y]))
            .collect();
        let masked: Vec<Option<usize>> = row
            .iter()
            .enumerate()
            .map(|(a, &l)| {
                if rng.random::<f64>() < spec.per_annotator_missing_rate[a] {
                    None
                } else {
                    Some(l)
                }
            })
            .collect();
        pre_removal.push(row);
        labels.push(masked);
    }

    let matrix = AnnotationMatrix::new(n, features, labels)?;
    let truth = GroundTruth { true_classes, pre_removal_labels: pre_removal, groups, confusions };
    Ok((matrix, truth))
}

/// Exact per-annotator missing rates of a matrix.
pub fn realized_missing_rates(matrix: &AnnotationMatrix) -> Vec<f64> {
    matrix.missing_rates()
}

fn sample_categorical<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let draw: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if draw < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Two-group spec with near-diagonal confusions biased differently per
/// group. Used by tests and as a template for generated experiment specs.
pub fn two_group_spec(
    num_samples: usize,
    num_classes: usize,
    feature_dim: usize,
    group_size: usize,
    missing_rates: Vec<f64>,
    seed: u64,
) -> GeneratorSpec {
    let n = num_classes;
    let diag = 0.72;
    let mut confusion_a = vec![vec![0.0; n]; n];
    let mut confusion_b = vec![vec![0.0; n]; n];
    for y in 0..n {
        for l in 0..n {
            if l == y {
                confusion_a[y][l] = diag;
                confusion_b[y][l] = diag;
            } else if n == 2 {
                confusion_a[y][l] = 1.0 - diag;
                confusion_b[y][l] = 1.0 - diag;
            } else {
                // Group A leaks toward the next class, group B toward the
                // previous one, so the two groups disagree systematically.
                let rest = 1.0 - diag;
                let next = (y + 1) % n;
                let prev = (y + n - 1) % n;
                confusion_a[y][l] = if l == next { rest * 0.7 } else { rest * 0.3 / (n - 2) as f64 };
                confusion_b[y][l] = if l == prev { rest * 0.7 } else { rest * 0.3 / (n - 2) as f64 };
            }
        }
    }
    let mut means = vec![vec![0.0; feature_dim]; n];
    for (c, row) in means.iter_mut().enumerate() {
        row[c % feature_dim] = 2.0;
        row[(c + 1) % feature_dim] = -1.0;
    }
    GeneratorSpec {
        num_samples,
        num_classes,
        feature_dim,
        class_prior: vec![1.0 / n as f64; n],
        class_feature_means: means,
        feature_noise_sigma: 1.0,
        annotator_groups: vec![
            AnnotatorGroup { size: group_size, confusion: confusion_a, perturbation: 0.02 },
            AnnotatorGroup {
                size: missing_rates.len() - group_size,
                confusion: confusion_b,
                perturbation: 0.02,
            },
        ],
        per_annotator_missing_rate: missing_rates,
        seed,
    }
}
