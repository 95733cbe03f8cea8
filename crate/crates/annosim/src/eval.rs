//! Held-out scoring and report aggregation.
//!
//! Accuracy is per annotator over observed test cells only. The consistency
//! gap metric compares pairwise inter-annotator agreement of the reference
//! labels against agreement of the model predictions on the same samples;
//! the report labels it "DIC (local definition)" since the exact formula is
//! fixed here as the mean absolute kappa gap over qualifying annotator
//! pairs. Lower is better.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agreement::cohen_kappa;
use crate::error::{Error, Result};
use crate::model::AnnotatorModel;
use crate::refine::TrainingMode;
use crate::store::{AnnotationMatrix, Cell};

/// Scores of one training run on its held-out split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub policy_mode: TrainingMode,
    pub seed: u64,
    /// Dataset family descriptor; reports are only comparable within one.
    pub dataset: String,
    pub epochs_run: usize,
    /// `None` marks an annotator with no observed test labels.
    pub per_annotator_accuracy: Vec<Option<f64>>,
    pub mean_accuracy: f64,
    /// `None` when no reference labels were available.
    pub dic: Option<f64>,
}

/// Per-annotator accuracy of argmax predictions over observed test cells.
/// Annotators without any observed test label report `None` and are
/// excluded from the mean.
pub fn accuracy(models: &[AnnotatorModel], test: &AnnotationMatrix) -> Result<Vec<Option<f64>>> {
    if models.len() != test.num_annotators() {
        return Err(Error::InvalidArgument(format!(
            "{} models for {} annotators",
            models.len(),
            test.num_annotators()
        )));
    }
    if test.observed_count() == 0 {
        return Err(Error::InvalidArgument("test split has no observed labels".into()));
    }
    let k = test.num_annotators();
    let mut correct = vec![0usize; k];
    let mut total = vec![0usize; k];
    for s in 0..test.num_samples() {
        let mut predicted: Option<Vec<usize>> = None;
        for a in 0..k {
            if let Cell::Observed(label) = test.cell(s, a) {
                let preds = match &predicted {
                    Some(p) => p,
                    None => {
                        let p: Vec<usize> = models
                            .iter()
                            .map(|m| m.predict(test.features(s)).map(|d| d.argmax()))
                            .collect::<Result<_>>()?;
                        predicted = Some(p);
                        predicted.as_ref().unwrap()
                    }
                };
                total[a] += 1;
                if preds[a] == label {
                    correct[a] += 1;
                }
            }
        }
    }
    Ok((0..k)
        .map(|a| if total[a] > 0 { Some(correct[a] as f64 / total[a] as f64) } else { None })
        .collect())
}

/// Mean over annotators that have at least one test label.
pub fn mean_accuracy(per_annotator: &[Option<f64>]) -> f64 {
    let present: Vec<f64> = per_annotator.iter().flatten().copied().collect();
    present.iter().sum::<f64>() / present.len() as f64
}

/// Difference of inter-annotator consistency: for every annotator pair with
/// at least `min_overlap` jointly referenced test samples, the absolute gap
/// between the reference-label kappa and the predicted-label kappa, averaged
/// over pairs.
///
/// `reference[s][a]` is the pre-removal label of annotator `a` on test
/// sample `s`.
pub fn dic(
    models: &[AnnotatorModel],
    test: &AnnotationMatrix,
    reference: &[Vec<usize>],
    min_overlap: usize,
) -> Result<f64> {
    let k = test.num_annotators();
    if models.len() != k {
        return Err(Error::InvalidArgument(format!("{} models for {k} annotators", models.len())));
    }
    if reference.len() != test.num_samples() {
        return Err(Error::InvalidArgument(format!(
            "{} reference rows for {} test samples",
            reference.len(),
            test.num_samples()
        )));
    }
    let predictions: Vec<Vec<usize>> = (0..test.num_samples())
        .map(|s| {
            models
                .iter()
                .map(|m| m.predict(test.features(s)).map(|d| d.argmax()))
                .collect::<Result<Vec<usize>>>()
        })
        .collect::<Result<_>>()?;
    let mut gaps = Vec::new();
    for i in 0..k {
        for j in (i + 1)..k {
            let ref_i: Vec<usize> = reference.iter().map(|row| row[i]).collect();
            let ref_j: Vec<usize> = reference.iter().map(|row| row[j]).collect();
            if ref_i.len() < min_overlap {
                continue;
            }
            let pred_i: Vec<usize> = predictions.iter().map(|row| row[i]).collect();
            let pred_j: Vec<usize> = predictions.iter().map(|row| row[j]).collect();
            let consistency_gt = cohen_kappa(&ref_i, &ref_j)?;
            let consistency_pred = cohen_kappa(&pred_i, &pred_j)?;
            gaps.push((consistency_gt - consistency_pred).abs());
        }
    }
    if gaps.is_empty() {
        return Err(Error::InvalidArgument(
            "no annotator pair has enough overlap for the consistency gap".into(),
        ));
    }
    Ok(gaps.iter().sum::<f64>() / gaps.len() as f64)
}

/// Train/test row split of a dataset.
#[derive(Debug, Clone)]
pub struct SplitResult {
    pub train: AnnotationMatrix,
    pub test: AnnotationMatrix,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Stratified split by sample. Samples are bucketed by their majority
/// observed label (unlabeled samples form their own bucket), each bucket is
/// shuffled under the seed, and `test_fraction` of it goes to the test side.
/// Fixed seed in, fixed split out, so runs over the same dataset stay
/// paired.
pub fn stratified_split(
    matrix: &AnnotationMatrix,
    test_fraction: f64,
    seed: u64,
) -> Result<SplitResult> {
    if !(0.0..1.0).contains(&test_fraction) || test_fraction <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "test fraction {test_fraction} outside (0, 1)"
        )));
    }
    let n = matrix.num_classes();
    let mut strata: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for s in 0..matrix.num_samples() {
        let mut counts = vec![0usize; n];
        for a in 0..matrix.num_annotators() {
            if let Cell::Observed(l) = matrix.cell(s, a) {
                counts[l] += 1;
            }
        }
        let max = counts.iter().max().copied().unwrap_or(0);
        let stratum = if max == 0 {
            n // bucket for samples without any observed label
        } else {
            counts.iter().position(|&c| c == max).unwrap()
        };
        strata.entry(stratum).or_default().push(s);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_indices = Vec::new();
    let mut test_indices = Vec::new();
    for (_, mut samples) in strata {
        samples.shuffle(&mut rng);
        let test_count = ((samples.len() as f64) * test_fraction).round() as usize;
        test_indices.extend(samples.iter().take(test_count));
        train_indices.extend(samples.iter().skip(test_count));
    }
    train_indices.sort_unstable();
    test_indices.sort_unstable();
    if train_indices.is_empty() || test_indices.is_empty() {
        return Err(Error::InvalidArgument("split produced an empty side".into()));
    }
    Ok(SplitResult {
        train: matrix.subset(&train_indices)?,
        test: matrix.subset(&test_indices)?,
        train_indices,
        test_indices,
    })
}

/// Mean and (sample) standard deviation over seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: Option<f64>,
}

fn aggregate(values: &[f64]) -> Option<Aggregate> {
    if values.is_empty() {
        return None;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let std = if values.len() >= 2 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
            / (values.len() - 1) as f64;
        Some(var.sqrt())
    } else {
        None
    };
    Some(Aggregate { mean, std })
}

fn format_aggregate(agg: &Aggregate) -> String {
    match agg.std {
        Some(std) => format!("{:.4}\u{b1}{:.4}", agg.mean, std),
        None => format!("{:.4}", agg.mean),
    }
}

/// One aggregated row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub policy_mode: TrainingMode,
    pub seeds: Vec<u64>,
    pub per_annotator: Vec<Option<Aggregate>>,
    pub mean_accuracy: Aggregate,
    pub dic: Option<Aggregate>,
}

/// Policy-by-policy aggregation of run reports over seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonTable {
    pub dataset: String,
    pub num_annotators: usize,
    pub rows: Vec<ComparisonRow>,
}

/// Aggregates reports into the comparison table. All reports must come from
/// the same dataset descriptor.
pub fn compare(reports: &[RunReport]) -> Result<ComparisonTable> {
    if reports.is_empty() {
        return Err(Error::InvalidArgument("no reports to compare".into()));
    }
    let dataset = reports[0].dataset.clone();
    let k = reports[0].per_annotator_accuracy.len();
    for r in reports {
        if r.dataset != dataset {
            return Err(Error::InvalidArgument(format!(
                "mixed datasets in comparison: {dataset:?} vs {:?}",
                r.dataset
            )));
        }
        if r.per_annotator_accuracy.len() != k {
            return Err(Error::InvalidArgument("reports disagree on annotator count".into()));
        }
    }
    let mode_order = [
        TrainingMode::Skip,
        TrainingMode::SimWeighted,
        TrainingMode::SimWeightedConfidence,
    ];
    let mut rows = Vec::new();
    for mode in mode_order {
        let of_mode: Vec<&RunReport> =
            reports.iter().filter(|r| r.policy_mode == mode).collect();
        if of_mode.is_empty() {
            continue;
        }
        let per_annotator = (0..k)
            .map(|a| {
                let values: Vec<f64> = of_mode
                    .iter()
                    .filter_map(|r| r.per_annotator_accuracy[a])
                    .collect();
                aggregate(&values)
            })
            .collect();
        let means: Vec<f64> = of_mode.iter().map(|r| r.mean_accuracy).collect();
        let dics: Vec<f64> = of_mode.iter().filter_map(|r| r.dic).collect();
        rows.push(ComparisonRow {
            policy_mode: mode,
            seeds: of_mode.iter().map(|r| r.seed).collect(),
            per_annotator,
            mean_accuracy: aggregate(&means).expect("non-empty mode group"),
            dic: aggregate(&dics),
        });
    }
    Ok(ComparisonTable { dataset, num_annotators: k, rows })
}

impl ComparisonTable {
    /// CSV in the `method, A_1..A_K, Avg` layout.
    pub fn to_accuracy_csv(&self) -> String {
        let mut out = String::from("method");
        for a in 1..=self.num_annotators {
            out.push_str(&format!(",A_{a}"));
        }
        out.push_str(",Avg\n");
        for row in &self.rows {
            out.push_str(&row.policy_mode.to_string());
            for cell in &row.per_annotator {
                match cell {
                    Some(agg) => out.push_str(&format!(",{}", format_aggregate(agg))),
                    None => out.push(','),
                }
            }
            out.push_str(&format!(",{}\n", format_aggregate(&row.mean_accuracy)));
        }
        out
    }

    /// CSV in the `dataset, policy, dic` layout.
    pub fn to_dic_csv(&self) -> String {
        let mut out = String::from("dataset,policy,dic\n");
        for row in &self.rows {
            let dic = row.dic.as_ref().map(format_aggregate).unwrap_or_default();
            out.push_str(&format!("{},{},{dic}\n", self.dataset, row.policy_mode));
        }
        out
    }

    pub fn to_json_string(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AnnotatorModel;
    use crate::store::AnnotationMatrix;
    use approx::assert_abs_diff_eq;

    fn balanced_test_matrix() -> AnnotationMatrix {
        // 16 samples, 2 annotators, 4 classes, perfectly balanced labels.
        let features: Vec<Vec<f64>> = (0..16).map(|s| vec![s as f64, 1.0]).collect();
        let labels: Vec<Vec<Option<usize>>> =
            (0..16).map(|s| vec![Some(s % 4), Some(s % 4)]).collect();
        AnnotationMatrix::new(4, features, labels).unwrap()
    }

    #[test]
    fn uniform_model_scores_class_zero_share() {
        // Zero weights predict uniform; argmax tie-breaks to class 0, so
        // accuracy equals the share of class-0 labels: exactly 0.25 here.
        let m = balanced_test_matrix();
        let models: Vec<AnnotatorModel> =
            (0..2).map(|a| AnnotatorModel::new(a, 4, 2, 0.1)).collect();
        let acc = accuracy(&models, &m).unwrap();
        for a in acc {
            assert_abs_diff_eq!(a.unwrap(), 0.25);
        }
    }

    #[test]
    fn memorized_single_sample_test_scores_one() {
        let features = vec![vec![0.3]];
        let labels = vec![vec![Some(2), Some(2)]];
        let m = AnnotationMatrix::new(3, features, labels).unwrap();
        let models = vec![constant_model(0, 3, 1, 2), constant_model(1, 3, 1, 2)];
        let acc = accuracy(&models, &m).unwrap();
        assert_eq!(acc, vec![Some(1.0), Some(1.0)]);
        assert_abs_diff_eq!(mean_accuracy(&acc), 1.0);
    }

    #[test]
    fn annotator_without_test_labels_is_excluded_from_mean() {
        let features = vec![vec![0.0], vec![1.0]];
        let labels = vec![vec![Some(0), None], vec![Some(1), None]];
        let m = AnnotationMatrix::new(2, features, labels).unwrap();
        let models: Vec<AnnotatorModel> =
            (0..2).map(|a| AnnotatorModel::new(a, 2, 1, 0.1)).collect();
        let acc = accuracy(&models, &m).unwrap();
        assert!(acc[0].is_some());
        assert!(acc[1].is_none());
        assert_abs_diff_eq!(mean_accuracy(&acc), acc[0].unwrap());
    }

    #[test]
    fn empty_test_split_errors() {
        let features = vec![vec![0.0]];
        let labels = vec![vec![None, None]];
        let m = AnnotationMatrix::new(2, features, labels).unwrap();
        let models: Vec<AnnotatorModel> =
            (0..2).map(|a| AnnotatorModel::new(a, 2, 1, 0.1)).collect();
        assert!(accuracy(&models, &m).is_err());
    }

    #[test]
    fn accuracy_is_invariant_to_sample_order() {
        let m = balanced_test_matrix();
        let models: Vec<AnnotatorModel> =
            (0..2).map(|a| AnnotatorModel::new(a, 4, 2, 0.1)).collect();
        let forward = accuracy(&models, &m).unwrap();
        let reversed_indices: Vec<usize> = (0..m.num_samples()).rev().collect();
        let reversed = m.subset(&reversed_indices).unwrap();
        assert_eq!(forward, accuracy(&models, &reversed).unwrap());
    }

    /// A model that always predicts `class` via a huge bias.
    fn constant_model(a: usize, n: usize, d: usize, class: usize) -> AnnotatorModel {
        let mut buf = Vec::new();
        AnnotatorModel::new(a, n, d, 0.1).save_checkpoint(&mut buf).unwrap();
        let mut ck: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        ck["bias"][class] = serde_json::json!(50.0);
        AnnotatorModel::load_checkpoint(ck.to_string().as_bytes(), 0.1).unwrap()
    }

    #[test]
    fn dic_invariant_under_annotator_permutation() {
        let features: Vec<Vec<f64>> = (0..6).map(|s| vec![s as f64]).collect();
        let labels: Vec<Vec<Option<usize>>> = (0..6)
            .map(|s| vec![Some(s % 3), Some((s + 1) % 3), Some(s % 2)])
            .collect();
        let m = AnnotationMatrix::new(3, features, labels).unwrap();
        let reference: Vec<Vec<usize>> =
            (0..6).map(|s| vec![s % 3, (s + 1) % 3, s % 2]).collect();
        let models: Vec<AnnotatorModel> = vec![
            constant_model(0, 3, 1, 1),
            constant_model(1, 3, 1, 1),
            constant_model(2, 3, 1, 1),
        ];
        let value = dic(&models, &m, &reference, 1).unwrap();
        assert!(value >= 0.0);
        // Swapping annotator order (consistently) leaves DIC unchanged.
        let perm = [2usize, 0, 1];
        let permuted_reference: Vec<Vec<usize>> =
            reference.iter().map(|row| perm.iter().map(|&p| row[p]).collect()).collect();
        let permuted_models: Vec<AnnotatorModel> =
            perm.iter().map(|&p| models[p].clone()).collect();
        let permuted_labels: Vec<Vec<Option<usize>>> = (0..6)
            .map(|s| {
                let row = [Some(s % 3), Some((s + 1) % 3), Some(s % 2)];
                perm.iter().map(|&p| row[p]).collect()
            })
            .collect();
        let pm = AnnotationMatrix::new(
            3,
            (0..6).map(|s| vec![s as f64]).collect(),
            permuted_labels,
        )
        .unwrap();
        let permuted_value = dic(&permuted_models, &pm, &permuted_reference, 1).unwrap();
        assert_abs_diff_eq!(value, permuted_value, epsilon = 1e-12);
    }

    #[test]
    fn dic_is_exactly_zero_for_perfect_reproduction() {
        // Reference where all annotators agree with the constant class the
        // models predict.
        let features: Vec<Vec<f64>> = (0..4).map(|s| vec![s as f64]).collect();
        let labels: Vec<Vec<Option<usize>>> =
            (0..4).map(|_| vec![Some(1), Some(1)]).collect();
        let m = AnnotationMatrix::new(3, features, labels).unwrap();
        let reference: Vec<Vec<usize>> = (0..4).map(|_| vec![1, 1]).collect();
        let models = vec![constant_model(0, 3, 1, 1), constant_model(1, 3, 1, 1)];
        let value = dic(&models, &m, &reference, 1).unwrap();
        assert_abs_diff_eq!(value, 0.0);
    }

    #[test]
    fn stratified_split_is_deterministic_and_disjoint() {
        let m = balanced_test_matrix();
        let s1 = stratified_split(&m, 0.25, 9).unwrap();
        let s2 = stratified_split(&m, 0.25, 9).unwrap();
        assert_eq!(s1.test_indices, s2.test_indices);
        assert_eq!(s1.train_indices, s2.train_indices);
        let mut all: Vec<usize> =
            s1.train_indices.iter().chain(&s1.test_indices).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..16).collect::<Vec<_>>());
        // Balanced 4-class data at 25% puts one of each class in test.
        assert_eq!(s1.test_indices.len(), 4);
    }

    fn report(mode: TrainingMode, seed: u64, mean: f64, dic: Option<f64>) -> RunReport {
        RunReport {
            policy_mode: mode,
            seed,
            dataset: "gen:test".into(),
            epochs_run: 5,
            per_annotator_accuracy: vec![Some(mean), Some(mean)],
            mean_accuracy: mean,
            dic,
        }
    }

    #[test]
    fn compare_single_report() {
        let table = compare(&[report(TrainingMode::Skip, 1, 0.5, None)]).unwrap();
        assert_eq!(table.rows.len(), 1);
        assert_eq!(table.rows[0].mean_accuracy.mean, 0.5);
        assert!(table.rows[0].mean_accuracy.std.is_none());
        let csv = table.to_accuracy_csv();
        assert!(csv.starts_with("method,A_1,A_2,Avg\n"));
        assert!(csv.contains("skip,0.5000,0.5000,0.5000"));
    }

    #[test]
    fn compare_aggregates_modes_and_seeds() {
        let reports: Vec<RunReport> = (0..10)
            .flat_map(|seed| {
                vec![
                    report(TrainingMode::Skip, seed, 0.5 + 0.01 * seed as f64, Some(0.3)),
                    report(TrainingMode::SimWeighted, seed, 0.6, Some(0.2)),
                    report(TrainingMode::SimWeightedConfidence, seed, 0.7, None),
                ]
            })
            .collect();
        let table = compare(&reports).unwrap();
        assert_eq!(table.rows.len(), 3);
        assert_eq!(table.rows[0].policy_mode, TrainingMode::Skip);
        assert_eq!(table.rows[0].seeds.len(), 10);
        assert!(table.rows[0].mean_accuracy.std.is_some());
        assert!(table.rows[2].dic.is_none());
        // Rendering is pure: identical inputs, identical bytes.
        assert_eq!(table.to_accuracy_csv(), compare(&reports).unwrap().to_accuracy_csv());
        assert_eq!(table.to_dic_csv(), compare(&reports).unwrap().to_dic_csv());
    }

    #[test]
    fn compare_rejects_mixed_datasets() {
        let mut a = report(TrainingMode::Skip, 1, 0.5, None);
        let b = report(TrainingMode::Skip, 2, 0.5, None);
        a.dataset = "gen:other".into();
        assert!(compare(&[a, b]).is_err());
    }
}
