//! Training orchestration: the epoch loop, per-cell loss selection, and the
//! confidence-gated imputation / similarity-refresh cycle.
//!
//! Three modes cover the comparison the rest of the crate is built around:
//! `skip` applies no update on missing cells, `sim_weighted` adds the
//! KL-divergence update against similarity-weighted soft labels, and
//! `sim_weighted_confidence` additionally imputes high-confidence
//! pseudo-labels into the dataset and re-estimates the similarity matrix on
//! the enriched labels.

use std::fmt;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agreement::{soft_label_weights, SimilarityConfig, SimilarityMatrix, SimilarityMetric};
use crate::error::{Error, Result};
use crate::model::{ce_loss, kl_loss, kl_loss_reversed, AnnotatorModel, ClassDistribution};
use crate::seed::derive_seed;
use crate::softlabel::{build_soft_label, ConfidenceVariant, SoftLabelResult};
use crate::store::{AnnotationMatrix, Cell, LabelView};

/// Scale of the Gaussian parameter initialization.
const INIT_SCALE: f64 = 0.01;

/// Supervision strategy for missing labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingMode {
    /// No update when the label is missing.
    Skip,
    /// KL update against a similarity-weighted soft label.
    SimWeighted,
    /// `SimWeighted` plus confidence-gated imputation and similarity
    /// recomputation.
    SimWeightedConfidence,
}

impl fmt::Display for TrainingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            TrainingMode::Skip => "skip",
            TrainingMode::SimWeighted => "sim_weighted",
            TrainingMode::SimWeightedConfidence => "sim_weighted_confidence",
        };
        f.write_str(name)
    }
}

/// When to re-estimate the similarity matrix from the imputed dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecomputeSchedule {
    /// Immediately after every imputation. Faithful to the inner-loop
    /// placement but quadratic in dataset size; practical only at tiny
    /// scale.
    PerImputation,
    /// At the end of any epoch that produced imputations.
    PerEpoch,
    /// After every m-th imputation.
    EveryMImputations(usize),
}

/// All knobs of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingPolicy {
    pub mode: TrainingMode,
    /// Imputation fires when confidence >= this threshold (inclusive).
    pub confidence_threshold: f64,
    /// Weight of the KL update relative to the CE update.
    pub lambda_kl: f64,
    pub recompute_schedule: RecomputeSchedule,
    /// Treat imputed cells as hard labels (CE updates) instead of keeping
    /// them on the semi-supervised path. Either way they enter similarity
    /// recomputation.
    pub imputed_as_hard_labels: bool,
    pub max_epochs: usize,
    /// Master seed; shuffle and init streams derive from it.
    pub seed: u64,
    /// SGD step size of every annotator model.
    pub learning_rate: f64,
    pub confidence_variant: ConfidenceVariant,
    /// Use the reversed KL direction (soft label first).
    pub reverse_kl: bool,
    /// Minimum pairwise overlap for a similarity estimate.
    pub min_overlap: usize,
    /// Let imputed labels enter similarity recomputation.
    pub include_imputed_in_similarity: bool,
}

impl Default for TrainingPolicy {
    fn default() -> Self {
        Self {
            mode: TrainingMode::SimWeightedConfidence,
            confidence_threshold: 0.6,
            lambda_kl: 1.0,
            recompute_schedule: RecomputeSchedule::PerEpoch,
            imputed_as_hard_labels: false,
            max_epochs: 20,
            seed: 0,
            learning_rate: 0.1,
            confidence_variant: ConfidenceVariant::Combined,
            reverse_kl: false,
            min_overlap: 3,
            include_imputed_in_similarity: true,
        }
    }
}

impl TrainingPolicy {
    pub fn validate(&self) -> Result<()> {
        // Thresholds above 1 are tolerated here: no confidence can reach
        // them, so the gate is simply unreachable. Config files reject them
        // (see the experiment loader).
        if self.confidence_threshold < 0.0 || !self.confidence_threshold.is_finite() {
            return Err(Error::Config(format!(
                "confidence_threshold {} must be a non-negative number",
                self.confidence_threshold
            )));
        }
        if self.lambda_kl < 0.0 || !self.lambda_kl.is_finite() {
            return Err(Error::Config(format!("lambda_kl {} must be >= 0", self.lambda_kl)));
        }
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if let RecomputeSchedule::EveryMImputations(m) = self.recompute_schedule {
            if m == 0 {
                return Err(Error::Config("every_m_imputations needs m >= 1".into()));
            }
        }
        Ok(())
    }
}

/// What happens to one (sample, annotator) cell in a scheduling step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellAction {
    /// CE update against a hard label.
    Supervised { label: usize },
    /// KL update against a soft label from the other annotators.
    SemiSupervised,
    /// No update.
    Skip,
}

/// Deterministic per-cell action. `view` must be the label view of the
/// cell's sample with imputed cells excluded (contributors are annotators
/// with observed labels only).
pub fn select_cell_action(
    cell: Cell,
    view: &LabelView,
    target_annotator: usize,
    policy: &TrainingPolicy,
) -> CellAction {
    match cell {
        Cell::Observed(label) => CellAction::Supervised { label },
        Cell::Imputed { label, .. } if policy.imputed_as_hard_labels => {
            CellAction::Supervised { label }
        }
        Cell::Missing | Cell::Imputed { .. } => {
            if policy.mode == TrainingMode::Skip {
                return CellAction::Skip;
            }
            let has_contributor =
                view.present_annotators.iter().any(|&a| a != target_annotator);
            if has_contributor {
                CellAction::SemiSupervised
            } else {
                CellAction::Skip
            }
        }
    }
}

/// Outcome of the confidence gate for one soft label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefinementOutcome {
    Imputed,
    Rejected,
}

/// Applies the confidence gate: at or above the threshold, the argmax
/// pseudo-label is written into the (missing) cell; below it, nothing
/// happens.
pub fn refinement_step(
    soft: &SoftLabelResult,
    policy: &TrainingPolicy,
    matrix: &mut AnnotationMatrix,
    sample: usize,
    epoch: usize,
) -> Result<RefinementOutcome> {
    if soft.confidence >= policy.confidence_threshold {
        matrix.impute(sample, soft.target_annotator, soft.argmax_label, soft.confidence, epoch)?;
        Ok(RefinementOutcome::Imputed)
    } else {
        Ok(RefinementOutcome::Rejected)
    }
}

/// One epoch of the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_ce_loss: f64,
    pub mean_kl_loss: f64,
    pub imputations: usize,
    pub cum_imputations: usize,
    pub sim_version: u64,
    pub supervised_updates: Vec<u64>,
    pub semi_supervised_updates: Vec<u64>,
    pub skipped_cells: Vec<u64>,
}

/// Per-epoch training statistics.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub epochs: Vec<EpochRecord>,
}

impl TrainingTrace {
    pub fn total_imputations(&self) -> usize {
        self.epochs.last().map_or(0, |e| e.cum_imputations)
    }

    pub fn total_semi_supervised_updates(&self) -> u64 {
        self.epochs.iter().map(|e| e.semi_supervised_updates.iter().sum::<u64>()).sum()
    }

    /// CSV export: `epoch, ce_loss, kl_loss, imputations, cum_imputations,
    /// sm_version`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epoch,ce_loss,kl_loss,imputations,cum_imputations,sm_version")?;
        for e in &self.epochs {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                e.epoch, e.mean_ce_loss, e.mean_kl_loss, e.imputations, e.cum_imputations,
                e.sim_version
            )?;
        }
        Ok(())
    }
}

/// Result of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput {
    pub models: Vec<AnnotatorModel>,
    pub similarity: SimilarityMatrix,
    pub trace: TrainingTrace,
}

/// Runs the full training loop on `matrix` (mutated in place by
/// imputations). The similarity matrix is initialized from the observed
/// labels, models take CE updates on labeled cells and lambda-weighted KL
/// updates against soft labels on missing ones, and in confidence mode the
/// gate writes pseudo-labels back and triggers scheduled recomputation.
pub fn train(
    matrix: &mut AnnotationMatrix,
    policy: &TrainingPolicy,
    metric: SimilarityMetric,
) -> Result<TrainOutput> {
    policy.validate()?;
    let k = matrix.num_annotators();
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "training needs at least 2 annotators, got {k}"
        )));
    }
    let sim_cfg = SimilarityConfig {
        metric,
        include_imputed: policy.include_imputed_in_similarity,
        min_overlap: policy.min_overlap,
    };
    let mut sim = SimilarityMatrix::compute(matrix, &sim_cfg)?;

    let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(policy.seed, "init"));
    let mut models: Vec<AnnotatorModel> = (0..k)
        .map(|a| {
            AnnotatorModel::new(a, matrix.num_classes(), matrix.feature_dim(), policy.learning_rate)
                .init_random(&mut init_rng, INIT_SCALE)
        })
        .collect();

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(policy.seed, "shuffle"));
    let mut order: Vec<usize> = (0..matrix.num_samples()).collect();
    let mut trace = TrainingTrace::default();
    let mut cum_imputations = 0usize;
    let mut imputations_since_recompute = 0usize;

    for epoch in 0..policy.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut ce_sum = 0.0;
        let mut ce_count = 0usize;
        let mut kl_sum = 0.0;
        let mut kl_count = 0usize;
        let mut epoch_imputations = 0usize;
        let mut supervised = vec![0u64; k];
        let mut semi = vec![0u64; k];
        let mut skipped = vec![0u64; k];
        let mut dirty = false;

        for &s in &order {
            let features = matrix.features(s).to_vec();
            let view = matrix.label_view(s, false);
            let actions: Vec<CellAction> = (0..k)
                .map(|a| select_cell_action(matrix.cell(s, a), &view, a, policy))
                .collect();
            // Predictions snapshot at pre-update parameters; contributor
            // aggregation within the sample sees no intra-sample ordering
            // effects.
            let needs_soft = actions.iter().any(|a| *a == CellAction::SemiSupervised);
            let snapshot: Vec<ClassDistribution> = if needs_soft || actions.iter().any(|a| matches!(a, CellAction::Supervised { .. })) {
                models.iter().map(|m| m.predict(&features)).collect::<Result<_>>()?
            } else {
                Vec::new()
            };

            for a in 0..k {
                match actions[a] {
                    CellAction::Supervised { label } => {
                        let (loss, logit_grad) = ce_loss(&snapshot[a], label)?;
                        if !loss.is_finite() {
                            return Err(Error::Numeric(format!(
                                "non-finite CE loss at epoch {epoch}, sample {s}, annotator {a}"
                            )));
                        }
                        let grad = models[a].param_gradient(&logit_grad, &features)?;
                        models[a].apply_update(&grad, 1.0)?;
                        ce_sum += loss;
                        ce_count += 1;
                        supervised[a] += 1;
                    }
                    CellAction::SemiSupervised => {
                        let contributors: Vec<usize> = view
                            .present_annotators
                            .iter()
                            .copied()
                            .filter(|&c| c != a)
                            .collect();
                        let weights = soft_label_weights(&sim, a, &contributors)?;
                        let preds: Vec<ClassDistribution> =
                            contributors.iter().map(|&c| snapshot[c].clone()).collect();
                        let soft = build_soft_label(
                            a,
                            &contributors,
                            &preds,
                            &weights,
                            policy.confidence_variant,
                        )?;

                        if policy.mode == TrainingMode::SimWeightedConfidence
                            && matrix.cell(s, a).is_missing()
                        {
                            if refinement_step(&soft, policy, matrix, s, epoch)?
                                == RefinementOutcome::Imputed
                            {
                                epoch_imputations += 1;
                                cum_imputations += 1;
                                imputations_since_recompute += 1;
                                dirty = true;
                                let recompute_now = match policy.recompute_schedule {
                                    RecomputeSchedule::PerImputation => true,
                                    RecomputeSchedule::EveryMImputations(m) => {
                                        imputations_since_recompute >= m
                                    }
                                    RecomputeSchedule::PerEpoch => false,
                                };
                                if recompute_now {
                                    sim = sim.recompute(matrix, &sim_cfg)?;
                                    imputations_since_recompute = 0;
                                    dirty = false;
                                }
                            }
                        }

                        let (loss, logit_grad) = if policy.reverse_kl {
                            kl_loss_reversed(&snapshot[a], &soft.distribution)?
                        } else {
                            kl_loss(&snapshot[a], &soft.distribution)?
                        };
                        if !loss.is_finite() {
                            return Err(Error::Numeric(format!(
                                "non-finite KL loss at epoch {epoch}, sample {s}, annotator {a}"
                            )));
                        }
                        let grad = models[a].param_gradient(&logit_grad, &features)?;
                        models[a].apply_update(&grad, policy.lambda_kl)?;
                        kl_sum += loss;
                        kl_count += 1;
                        semi[a] += 1;
                    }
                    CellAction::Skip => {
                        skipped[a] += 1;
                    }
                }
            }
        }

        if policy.recompute_schedule == RecomputeSchedule::PerEpoch && dirty {
            sim = sim.recompute(matrix, &sim_cfg)?;
            imputations_since_recompute = 0;
        }

        trace.epochs.push(EpochRecord {
            epoch,
            mean_ce_loss: if ce_count > 0 { ce_sum / ce_count as f64 } else { 0.0 },
            mean_kl_loss: if kl_count > 0 { kl_sum / kl_count as f64 } else { 0.0 },
            imputations: epoch_imputations,
            cum_imputations,
            sim_version: sim.version(),
            supervised_updates: supervised,
            semi_supervised_updates: semi,
            skipped_cells: skipped,
        });
    }

    Ok(TrainOutput { models, similarity: sim, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::softlabel::confidence;
    use crate::store::AnnotationMatrix;
    use crate::synth::{generate, two_group_spec};

    fn policy(mode: TrainingMode, seed: u64) -> TrainingPolicy {
        TrainingPolicy { mode, seed, max_epochs: 4, ..Default::default() }
    }

    fn sparse_matrix(seed: u64) -> AnnotationMatrix {
        let spec = two_group_spec(120, 3, 4, 2, vec![0.4, 0.5, 0.3, 0.6], seed);
        generate(&spec).unwrap().0
    }

    #[test]
    fn select_action_table() {
        let p = policy(TrainingMode::SimWeighted, 0);
        let view = LabelView {
            sample_id: 0,
            present_annotators: vec![0, 1],
            absent_annotators: vec![2],
        };
        assert_eq!(
            select_cell_action(Cell::Observed(1), &view, 0, &p),
            CellAction::Supervised { label: 1 }
        );
        assert_eq!(select_cell_action(Cell::Missing, &view, 2, &p), CellAction::SemiSupervised);

        let skip = policy(TrainingMode::Skip, 0);
        assert_eq!(select_cell_action(Cell::Missing, &view, 2, &skip), CellAction::Skip);

        // No contributor at all: fall back to skip.
        let lonely = LabelView {
            sample_id: 0,
            present_annotators: vec![],
            absent_annotators: vec![0, 1, 2],
        };
        assert_eq!(select_cell_action(Cell::Missing, &lonely, 2, &p), CellAction::Skip);

        // The target's own observed label is not a contributor.
        let only_self = LabelView {
            sample_id: 0,
            present_annotators: vec![2],
            absent_annotators: vec![0, 1],
        };
        assert_eq!(
            select_cell_action(Cell::Imputed { label: 0, confidence: 0.9, epoch: 0 }, &only_self, 2, &p),
            CellAction::Skip
        );

        // Imputed cells become hard labels only under the flag.
        let hard = TrainingPolicy { imputed_as_hard_labels: true, ..p.clone() };
        let cell = Cell::Imputed { label: 2, confidence: 0.9, epoch: 1 };
        assert_eq!(select_cell_action(cell, &view, 2, &p), CellAction::SemiSupervised);
        assert_eq!(select_cell_action(cell, &view, 2, &hard), CellAction::Supervised { label: 2 });
    }

    #[test]
    fn refinement_step_is_inclusive_at_threshold() {
        let mut m = sparse_matrix(1);
        let (s, a) = (0..m.num_samples())
            .flat_map(|s| (0..m.num_annotators()).map(move |a| (s, a)))
            .find(|&(s, a)| m.cell(s, a).is_missing())
            .unwrap();
        let p = TrainingPolicy {
            mode: TrainingMode::SimWeightedConfidence,
            confidence_threshold: 0.6,
            ..Default::default()
        };
        let make = |c: f64| SoftLabelResult {
            target_annotator: a,
            distribution: ClassDistribution::new(vec![0.8, 0.1, 0.1]).unwrap(),
            confidence: c,
            contributors: vec![(0, 1.0)],
            argmax_label: 0,
        };
        assert_eq!(
            refinement_step(&make(0.59), &p, &mut m, s, 0).unwrap(),
            RefinementOutcome::Rejected
        );
        assert!(m.cell(s, a).is_missing());
        // Exactly at the threshold the gate fires (c >= T).
        assert_eq!(
            refinement_step(&make(0.6), &p, &mut m, s, 0).unwrap(),
            RefinementOutcome::Imputed
        );
        assert!(m.cell(s, a).is_imputed());
    }

    #[test]
    fn one_hot_soft_label_has_exact_unit_confidence() {
        // A one-hot distribution gives c = 1 exactly, so a threshold of 1.0
        // still fires.
        let dist = ClassDistribution::one_hot(4, 2);
        assert_eq!(confidence(&dist), 1.0);
        let mut m = sparse_matrix(2);
        let (s, a) = (0..m.num_samples())
            .flat_map(|s| (0..m.num_annotators()).map(move |a| (s, a)))
            .find(|&(s, a)| m.cell(s, a).is_missing())
            .unwrap();
        let p = TrainingPolicy {
            mode: TrainingMode::SimWeightedConfidence,
            confidence_threshold: 1.0,
            ..Default::default()
        };
        let soft = SoftLabelResult {
            target_annotator: a,
            distribution: ClassDistribution::one_hot(3, 1),
            confidence: confidence(&ClassDistribution::one_hot(3, 1)),
            contributors: vec![(0, 1.0)],
            argmax_label: 1,
        };
        assert_eq!(refinement_step(&soft, &p, &mut m, s, 0).unwrap(), RefinementOutcome::Imputed);
    }

    #[test]
    fn skip_mode_never_semi_supervises_or_imputes() {
        let mut m = sparse_matrix(3);
        let out = train(&mut m, &policy(TrainingMode::Skip, 5), SimilarityMetric::CohenKappa)
            .unwrap();
        assert_eq!(out.trace.total_semi_supervised_updates(), 0);
        assert_eq!(out.trace.total_imputations(), 0);
        assert_eq!(m.imputed_count(), 0);
        for e in &out.trace.epochs {
            assert_eq!(e.imputations, 0);
            assert_eq!(e.sim_version, 1);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let mut m1 = sparse_matrix(4);
        let mut m2 = sparse_matrix(4);
        let p = policy(TrainingMode::SimWeightedConfidence, 11);
        let out1 = train(&mut m1, &p, SimilarityMetric::CohenKappa).unwrap();
        let out2 = train(&mut m2, &p, SimilarityMetric::CohenKappa).unwrap();
        assert_eq!(out1.trace, out2.trace);
        assert_eq!(out1.models, out2.models);
        assert_eq!(m1, m2);

        let mut m3 = sparse_matrix(4);
        let out3 = train(&mut m3, &policy(TrainingMode::SimWeightedConfidence, 12), SimilarityMetric::CohenKappa)
            .unwrap();
        assert_ne!(out1.models, out3.models);
    }

    #[test]
    fn unreachable_threshold_reduces_to_sim_weighted() {
        let mut m1 = sparse_matrix(6);
        let mut m2 = sparse_matrix(6);
        let base = policy(TrainingMode::SimWeighted, 7);
        let gated = TrainingPolicy {
            mode: TrainingMode::SimWeightedConfidence,
            confidence_threshold: 1.0 + 1e-9,
            ..base.clone()
        };
        let out_sim = train(&mut m1, &base, SimilarityMetric::CohenKappa).unwrap();
        let out_gated = train(&mut m2, &gated, SimilarityMetric::CohenKappa).unwrap();
        assert_eq!(out_sim.trace, out_gated.trace);
        assert_eq!(out_sim.models, out_gated.models);
        assert_eq!(m2.imputed_count(), 0);
    }

    #[test]
    fn fully_observed_dataset_collapses_all_modes() {
        let spec = two_group_spec(80, 3, 4, 2, vec![0.0; 4], 13);
        let (base, _) = generate(&spec).unwrap();
        let mut traces = Vec::new();
        let mut params = Vec::new();
        for mode in [TrainingMode::Skip, TrainingMode::SimWeighted, TrainingMode::SimWeightedConfidence] {
            let mut m = base.clone();
            let out = train(&mut m, &policy(mode, 21), SimilarityMetric::CohenKappa).unwrap();
            traces.push(out.trace);
            params.push(out.models);
        }
        assert_eq!(traces[0], traces[1]);
        assert_eq!(traces[1], traces[2]);
        assert_eq!(params[0], params[1]);
        assert_eq!(params[1], params[2]);
    }

    #[test]
    fn confidence_mode_imputes_and_bumps_similarity_version() {
        let mut m = sparse_matrix(8);
        let p = TrainingPolicy {
            mode: TrainingMode::SimWeightedConfidence,
            confidence_threshold: 0.3,
            max_epochs: 6,
            seed: 3,
            ..Default::default()
        };
        let out = train(&mut m, &p, SimilarityMetric::CohenKappa).unwrap();
        let total = out.trace.total_imputations();
        assert!(total > 0, "expected imputations with a low threshold");
        assert_eq!(m.imputed_count(), total);
        assert_eq!(m.imputation_log().len(), total);
        // Version bumps once per scheduled (per-epoch) recomputation.
        let epochs_with_imputations =
            out.trace.epochs.iter().filter(|e| e.imputations > 0).count() as u64;
        assert_eq!(out.similarity.version(), 1 + epochs_with_imputations);
        // Cumulative imputations are non-decreasing.
        for w in out.trace.epochs.windows(2) {
            assert!(w[1].cum_imputations >= w[0].cum_imputations);
        }
    }

    #[test]
    fn per_imputation_schedule_recomputes_immediately() {
        let mut m = sparse_matrix(9);
        let p = TrainingPolicy {
            mode: TrainingMode::SimWeightedConfidence,
            confidence_threshold: 0.3,
            recompute_schedule: RecomputeSchedule::PerImputation,
            max_epochs: 3,
            seed: 5,
            ..Default::default()
        };
        let out = train(&mut m, &p, SimilarityMetric::CohenKappa).unwrap();
        let total = out.trace.total_imputations() as u64;
        assert!(total > 0);
        assert_eq!(out.similarity.version(), 1 + total);
    }

    #[test]
    fn observed_counts_stay_constant_during_training() {
        let mut m = sparse_matrix(10);
        let observed_before = m.observed_count();
        let p = TrainingPolicy {
            mode: TrainingMode::SimWeightedConfidence,
            confidence_threshold: 0.3,
            max_epochs: 5,
            seed: 2,
            ..Default::default()
        };
        train(&mut m, &p, SimilarityMetric::CohenKappa).unwrap();
        assert_eq!(m.observed_count(), observed_before);
    }

    #[test]
    fn imputed_labels_beat_uniform_random_against_planted_truth() {
        // Imputed pseudo-labels should recover the generator's held-out
        // annotator labels strictly more often than a uniform guess (1/N).
        let spec = two_group_spec(800, 4, 6, 3, vec![0.5, 0.7, 0.6, 0.55, 0.7, 0.65], 41);
        let (mut matrix, truth) = generate(&spec).unwrap();
        let p = TrainingPolicy {
            mode: TrainingMode::SimWeightedConfidence,
            confidence_threshold: 0.5,
            max_epochs: 8,
            seed: 6,
            ..Default::default()
        };
        train(&mut matrix, &p, SimilarityMetric::CohenKappa).unwrap();
        let log = matrix.imputation_log();
        assert!(log.len() > 50, "only {} imputations", log.len());
        let hits = log
            .iter()
            .filter(|r| truth.pre_removal_labels[r.sample][r.annotator] == r.label)
            .count();
        let hit_rate = hits as f64 / log.len() as f64;
        assert!(hit_rate > 0.25, "imputation hit rate {hit_rate} not above uniform 1/N");
    }

    #[test]
    fn train_rejects_single_annotator() {
        let features = vec![vec![0.0]; 4];
        let labels = vec![vec![Some(0)], vec![Some(1)], vec![None], vec![Some(0)]];
        let mut m = AnnotationMatrix::new(2, features, labels).unwrap();
        assert!(train(&mut m, &policy(TrainingMode::Skip, 0), SimilarityMetric::CohenKappa).is_err());
    }

    #[test]
    fn trace_csv_has_expected_columns() {
        let mut m = sparse_matrix(12);
        let out = train(&mut m, &policy(TrainingMode::SimWeighted, 4), SimilarityMetric::CohenKappa)
            .unwrap();
        let mut buf = Vec::new();
        out.trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "epoch,ce_loss,kl_loss,imputations,cum_imputations,sm_version"
        );
        assert_eq!(lines.count(), out.trace.epochs.len());
    }
}
