//! Sparse multi-annotator label storage.
//!
//! [`AnnotationMatrix`] holds one feature vector per sample and a
//! samples x annotators grid of label cells. A cell is observed, missing, or
//! imputed; an observed label is never overwritten and a missing cell can be
//! filled at most once. Imputations are recorded in an append-only log so a
//! run can be audited after the fact.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// State of one (sample, annotator) cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Cell {
    /// Label supplied by the annotator.
    Observed(usize),
    /// No label available.
    Missing,
    /// Pseudo-label written by the refinement loop.
    Imputed {
        label: usize,
        confidence: f64,
        epoch: usize,
    },
}

impl Cell {
    pub fn is_observed(&self) -> bool {
        matches!(self, Cell::Observed(_))
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }

    pub fn is_imputed(&self) -> bool {
        matches!(self, Cell::Imputed { .. })
    }

    /// Class index carried by the cell, if any.
    pub fn label(&self) -> Option<usize> {
        match self {
            Cell::Observed(l) => Some(*l),
            Cell::Imputed { label, .. } => Some(*label),
            Cell::Missing => None,
        }
    }
}

/// One entry of the imputation log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationRecord {
    pub epoch: usize,
    pub sample: usize,
    pub annotator: usize,
    pub label: usize,
    pub confidence: f64,
}

/// Per-sample view of which annotators carry a usable label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelView {
    pub sample_id: usize,
    pub present_annotators: Vec<usize>,
    pub absent_annotators: Vec<usize>,
}

/// File format for dataset I/O.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DatasetFormat {
    /// `sample_id,f_0..f_{d-1},a_0..a_{K-1}` with empty annotator fields for
    /// missing labels. `num_classes` is inferred as `max label + 1` when not
    /// declared.
    Csv { num_classes: Option<usize> },
    Json,
}

impl DatasetFormat {
    /// Picks a format from the file extension (`.json` vs anything else).
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => DatasetFormat::Json,
            _ => DatasetFormat::Csv { num_classes: None },
        }
    }
}

#[derive(Serialize, Deserialize)]
struct JsonDataset {
    num_classes: usize,
    feature_dim: usize,
    samples: Vec<JsonSample>,
}

#[derive(Serialize, Deserialize)]
struct JsonSample {
    id: usize,
    features: Vec<f64>,
    labels: Vec<Option<usize>>,
}

/// Sparse samples x annotators label matrix with per-sample features.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationMatrix {
    num_samples: usize,
    num_annotators: usize,
    num_classes: usize,
    feature_dim: usize,
    features: Vec<Vec<f64>>,
    cells: Vec<Cell>,
    imputation_log: Vec<ImputationRecord>,
}

impl AnnotationMatrix {
    /// Builds a matrix from per-sample features and optional labels.
    /// `labels[s][k]` is `None` for a missing cell.
    pub fn new(
        num_classes: usize,
        features: Vec<Vec<f64>>,
        labels: Vec<Vec<Option<usize>>>,
    ) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Validation(format!(
                "num_classes must be at least 2, got {num_classes}"
            )));
        }
        if features.len() != labels.len() {
            return Err(Error::Validation(format!(
                "feature rows ({}) and label rows ({}) disagree",
                features.len(),
                labels.len()
            )));
        }
        if features.is_empty() {
            return Err(Error::Validation("dataset has no samples".into()));
        }
        let feature_dim = features[0].len();
        let num_annotators = labels[0].len();
        if num_annotators == 0 {
            return Err(Error::Validation("dataset has no annotators".into()));
        }
        let mut cells = Vec::with_capacity(features.len() * num_annotators);
        for (s, (feat, row)) in features.iter().zip(&labels).enumerate() {
            if feat.len() != feature_dim {
                return Err(Error::Validation(format!(
                    "sample {s}: feature dimension {} does not match {feature_dim}",
                    feat.len()
                )));
            }
            if !feat.iter().all(|v| v.is_finite()) {
                return Err(Error::Validation(format!("sample {s}: non-finite feature")));
            }
            if row.len() != num_annotators {
                return Err(Error::Validation(format!(
                    "sample {s}: {} annotator columns, expected {num_annotators}",
                    row.len()
                )));
            }
            for (k, lab) in row.iter().enumerate() {
                match lab {
                    Some(l) if *l >= num_classes => {
                        return Err(Error::Validation(format!(
                            "sample {s}, annotator {k}: label {l} out of range for {num_classes} classes"
                        )));
                    }
                    Some(l) => cells.push(Cell::Observed(*l)),
                    None => cells.push(Cell::Missing),
                }
            }
        }
        Ok(Self {
            num_samples: features.len(),
            num_annotators,
            num_classes,
            feature_dim,
            features,
            cells,
            imputation_log: Vec::new(),
        })
    }

    pub fn num_samples(&self) -> usize {
        self.num_samples
    }

    pub fn num_annotators(&self) -> usize {
        self.num_annotators
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn features(&self, sample: usize) -> &[f64] {
        &self.features[sample]
    }

    pub fn cell(&self, sample: usize, annotator: usize) -> Cell {
        self.cells[sample * self.num_annotators + annotator]
    }

    pub fn imputation_log(&self) -> &[ImputationRecord] {
        &self.imputation_log
    }

    pub fn observed_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_observed()).count()
    }

    pub fn imputed_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_imputed()).count()
    }

    pub fn missing_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_missing()).count()
    }

    /// Per-annotator fraction of missing cells.
    pub fn missing_rates(&self) -> Vec<f64> {
        let mut missing = vec![0usize; self.num_annotators];
        for s in 0..self.num_samples {
            for (k, m) in missing.iter_mut().enumerate() {
                if self.cell(s, k).is_missing() {
                    *m += 1;
                }
            }
        }
        missing
            .into_iter()
            .map(|m| m as f64 / self.num_samples as f64)
            .collect()
    }

    /// Splits annotators into those carrying a usable label for `sample` and
    /// the rest. Imputed cells count as present only when `include_imputed`.
    pub fn label_view(&self, sample: usize, include_imputed: bool) -> LabelView {
        let mut present = Vec::new();
        let mut absent = Vec::new();
        for k in 0..self.num_annotators {
            let usable = match self.cell(sample, k) {
                Cell::Observed(_) => true,
                Cell::Imputed { .. } => include_imputed,
                Cell::Missing => false,
            };
            if usable {
                present.push(k);
            } else {
                absent.push(k);
            }
        }
        LabelView {
            sample_id: sample,
            present_annotators: present,
            absent_annotators: absent,
        }
    }

    /// Writes a pseudo-label into a missing cell. Observed cells are never
    /// overwritten and a cell can be imputed only once.
    pub fn impute(
        &mut self,
        sample: usize,
        annotator: usize,
        class_index: usize,
        confidence: f64,
        epoch: usize,
    ) -> Result<()> {
        if sample >= self.num_samples || annotator >= self.num_annotators {
            return Err(Error::InvalidArgument(format!(
                "cell ({sample}, {annotator}) out of bounds"
            )));
        }
        if class_index >= self.num_classes {
            return Err(Error::InvalidArgument(format!(
                "class index {class_index} out of range for {} classes",
                self.num_classes
            )));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::InvalidArgument(format!(
                "confidence {confidence} outside [0, 1]"
            )));
        }
        let idx = sample * self.num_annotators + annotator;
        match self.cells[idx] {
            Cell::Observed(_) => {
                return Err(Error::InvalidArgument(format!(
                    "cell ({sample}, {annotator}) is observed and cannot be imputed"
                )));
            }
            Cell::Imputed { .. } => {
                return Err(Error::InvalidArgument(format!(
                    "cell ({sample}, {annotator}) was already imputed"
                )));
            }
            Cell::Missing => {}
        }
        self.cells[idx] = Cell::Imputed {
            label: class_index,
            confidence,
            epoch,
        };
        self.imputation_log.push(ImputationRecord {
            epoch,
            sample,
            annotator,
            label: class_index,
            confidence,
        });
        Ok(())
    }

    /// Turns exactly `floor(ratio * #observed)` observed cells into missing
    /// ones, chosen uniformly by the seeded RNG. Missing and imputed cells
    /// are never touched. Returns the number of cells removed.
    pub fn remove_annotations(&mut self, ratio: f64, seed: u64) -> Result<usize> {
        if !(0.0..=1.0).contains(&ratio) {
            return Err(Error::InvalidArgument(format!(
                "removal ratio {ratio} outside [0, 1]"
            )));
        }
        let mut observed: Vec<usize> = (0..self.cells.len())
            .filter(|&i| self.cells[i].is_observed())
            .collect();
        let target = (ratio * observed.len() as f64).floor() as usize;
        if target == 0 {
            return Ok(0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        observed.shuffle(&mut rng);
        for &idx in observed.iter().take(target) {
            self.cells[idx] = Cell::Missing;
        }
        Ok(target)
    }

    /// Row-restricted copy containing only `indices`, in the given order.
    /// The copy starts with an empty imputation log.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidArgument("empty sample subset".into()));
        }
        let mut features = Vec::with_capacity(indices.len());
        let mut cells = Vec::with_capacity(indices.len() * self.num_annotators);
        for &s in indices {
            if s >= self.num_samples {
                return Err(Error::InvalidArgument(format!("sample index {s} out of bounds")));
            }
            features.push(self.features[s].clone());
            for k in 0..self.num_annotators {
                cells.push(self.cell(s, k));
            }
        }
        Ok(Self {
            num_samples: indices.len(),
            num_annotators: self.num_annotators,
            num_classes: self.num_classes,
            feature_dim: self.feature_dim,
            features,
            cells,
            imputation_log: Vec::new(),
        })
    }

    /// Loads a dataset file. See [`DatasetFormat`] for the on-disk layouts.
    pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        match format {
            DatasetFormat::Csv { num_classes } => Self::parse_csv(&text, num_classes),
            DatasetFormat::Json => Self::parse_json(&text),
        }
    }

    /// Saves the dataset in canonical form. Only observed labels are written;
    /// missing and imputed cells serialize as empty/null so that files carry
    /// genuine annotations only (the imputation log is the record of
    /// pseudo-labels).
    pub fn save_dataset(&self, path: &Path, format: DatasetFormat) -> Result<()> {
        let text = match format {
            DatasetFormat::Csv { .. } => self.to_csv_string(),
            DatasetFormat::Json => self.to_json_string()?,
        };
        fs::write(path, text)?;
        Ok(())
    }

    pub fn parse_csv(text: &str, declared_classes: Option<usize>) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Parse { line: 1, msg: "empty file".into() })?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.first() != Some(&"sample_id") {
            return Err(Error::Parse {
                line: 1,
                msg: format!("header must start with sample_id, got {:?}", cols.first()),
            });
        }
        let feature_dim = cols.iter().skip(1).take_while(|c| c.starts_with("f_")).count();
        let num_annotators = cols.len() - 1 - feature_dim;
        for (i, col) in cols.iter().enumerate().skip(1) {
            let expected = if i <= feature_dim {
                format!("f_{}", i - 1)
            } else {
                format!("a_{}", i - 1 - feature_dim)
            };
            if *col != expected {
                return Err(Error::Parse {
                    line: 1,
                    msg: format!("column {i} named {col:?}, expected {expected:?}"),
                });
            }
        }
        if num_annotators == 0 {
            return Err(Error::Parse { line: 1, msg: "no annotator columns".into() });
        }

        let mut features = Vec::new();
        let mut labels: Vec<Vec<Option<usize>>> = Vec::new();
        let mut max_label = 0usize;
        for (idx, line) in lines {
            let line_no = idx + 1;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != cols.len() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("{} fields, expected {}", fields.len(), cols.len()),
                });
            }
            fields[0].parse::<u64>().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("sample_id {:?} is not an integer", fields[0]),
            })?;
            let mut feat = Vec::with_capacity(feature_dim);
            for f in &fields[1..=feature_dim] {
                let v: f64 = f.parse().map_err(|_| Error::Parse {
                    line: line_no,
                    msg: format!("feature {f:?} is not a number"),
                })?;
                feat.push(v);
            }
            let mut row = Vec::with_capacity(num_annotators);
            for f in &fields[1 + feature_dim..] {
                if f.is_empty() {
                    row.push(None);
                } else {
                    let l: usize = f.parse().map_err(|_| Error::Parse {
                        line: line_no,
                        msg: format!("label {f:?} is not a class index"),
                    })?;
                    max_label = max_label.max(l);
                    row.push(Some(l));
                }
            }
            features.push(feat);
            labels.push(row);
        }
        let num_classes = declared_classes.unwrap_or((max_label + 1).max(2));
        Self::new(num_classes, features, labels)
    }

    pub fn parse_json(text: &str) -> Result<Self> {
        let data: JsonDataset = serde_json::from_str(text)?;
        let mut features = Vec::with_capacity(data.samples.len());
        let mut labels = Vec::with_capacity(data.samples.len());
        for sample in &data.samples {
            if sample.features.len() != data.feature_dim {
                return Err(Error::Validation(format!(
                    "sample {}: feature dimension {} does not match declared {}",
                    sample.id,
                    sample.features.len(),
                    data.feature_dim
                )));
            }
            features.push(sample.features.clone());
            labels.push(sample.labels.clone());
        }
        Self::new(data.num_classes, features, labels)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        out.push_str("sample_id");
        for i in 0..self.feature_dim {
            let _ = write!(out, ",f_{i}");
        }
        for k in 0..self.num_annotators {
            let _ = write!(out, ",a_{k}");
        }
        out.push('\n');
        for s in 0..self.num_samples {
            let _ = write!(out, "{s}");
            for v in &self.features[s] {
                let _ = write!(out, ",{v}");
            }
            for k in 0..self.num_annotators {
                match self.cell(s, k) {
                    Cell::Observed(l) => {
                        let _ = write!(out, ",{l}");
                    }
                    _ => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json_string(&self) -> Result<String> {
        let samples = (0..self.num_samples)
            .map(|s| JsonSample {
                id: s,
                features: self.features[s].clone(),
                labels: (0..self.num_annotators)
                    .map(|k| match self.cell(s, k) {
                        Cell::Observed(l) => Some(l),
                        _ => None,
                    })
                    .collect(),
            })
            .collect();
        let doc = JsonDataset {
            num_classes: self.num_classes,
            feature_dim: self.feature_dim,
            samples,
        };
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        Ok(text)
    }

    /// Writes the imputation log as JSON lines, one record per imputation.
    pub fn write_imputation_log<W: Write>(&self, mut w: W) -> Result<()> {
        for record in &self.imputation_log {
            serde_json::to_writer(&mut w, record)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_matrix() -> AnnotationMatrix {
        // 3 samples, 3 annotators, one missing cell for a_2.
        let features = vec![vec![0.5, 1.0], vec![1.5, -1.0], vec![0.0, 0.25]];
        let labels = vec![
            vec![Some(0), Some(1), Some(0)],
            vec![Some(1), Some(1), None],
            vec![Some(2), Some(0), Some(2)],
        ];
        AnnotationMatrix::new(3, features, labels).unwrap()
    }

    #[test]
    fn csv_load_counts_missing() {
        let csv = "sample_id,f_0,f_1,a_0,a_1,a_2\n0,0.5,1,0,1,0\n1,1.5,-1,1,1,\n2,0,0.25,2,0,2\n";
        let m = AnnotationMatrix::parse_csv(csv, Some(3)).unwrap();
        assert_eq!(m.num_samples(), 3);
        assert_eq!(m.num_annotators(), 3);
        assert_eq!(m.missing_count(), 1);
        assert_eq!(m.missing_rates(), vec![0.0, 0.0, 1.0 / 3.0]);
    }

    #[test]
    fn csv_label_out_of_range_rejected() {
        let csv = "sample_id,f_0,a_0\n0,1.0,5\n";
        let err = AnnotationMatrix::parse_csv(csv, Some(3)).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "got {err}");
    }

    #[test]
    fn csv_malformed_row_reports_line() {
        let csv = "sample_id,f_0,a_0\n0,1.0,2\n1,oops,1\n";
        match AnnotationMatrix::parse_csv(csv, None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn csv_inconsistent_width_reports_line() {
        let csv = "sample_id,f_0,f_1,a_0\n0,1.0,2.0,1\n1,1.0,0\n";
        match AnnotationMatrix::parse_csv(csv, None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn csv_round_trip_is_canonical() {
        let m = small_matrix();
        let first = m.to_csv_string();
        let reloaded = AnnotationMatrix::parse_csv(&first, Some(3)).unwrap();
        assert_eq!(reloaded.to_csv_string(), first);
        assert_eq!(reloaded, m);
    }

    #[test]
    fn json_round_trip_is_canonical() {
        let m = small_matrix();
        let first = m.to_json_string().unwrap();
        let reloaded = AnnotationMatrix::parse_json(&first).unwrap();
        assert_eq!(reloaded.to_json_string().unwrap(), first);
        assert_eq!(reloaded, m);
    }

    #[test]
    fn impute_fills_missing_once() {
        let mut m = small_matrix();
        m.impute(1, 2, 0, 0.75, 3).unwrap();
        assert_eq!(
            m.cell(1, 2),
            Cell::Imputed { label: 0, confidence: 0.75, epoch: 3 }
        );
        assert_eq!(m.imputation_log().len(), 1);
        // Second imputation of the same cell is rejected.
        let err = m.impute(1, 2, 1, 0.9, 4).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
        // Observed cells can never be imputed.
        let err = m.impute(0, 0, 1, 0.99, 3).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
        assert_eq!(m.imputation_log().len(), 1);
    }

    #[test]
    fn impute_keeps_observed_count_and_shrinks_missing() {
        let mut m = small_matrix();
        let observed = m.observed_count();
        let missing = m.missing_count();
        m.impute(1, 2, 2, 0.8, 0).unwrap();
        assert_eq!(m.observed_count(), observed);
        assert_eq!(m.missing_count(), missing - 1);
        assert_eq!(m.imputed_count(), 1);
    }

    #[test]
    fn remove_annotations_exact_count_and_deterministic() {
        // 1000 observed cells; a 40% removal turns exactly 400 missing.
        let features = vec![vec![0.0]; 500];
        let labels: Vec<Vec<Option<usize>>> =
            (0..500).map(|s| vec![Some(s % 4), Some((s + 1) % 4)]).collect();
        let base = AnnotationMatrix::new(4, features, labels).unwrap();
        assert_eq!(base.observed_count(), 1000);

        let mut a = base.clone();
        assert_eq!(a.remove_annotations(0.0, 7).unwrap(), 0);
        assert_eq!(a, base);

        let removed = a.remove_annotations(0.4, 7).unwrap();
        assert_eq!(removed, 400);
        assert_eq!(a.missing_count(), 400);
        assert_eq!(a.observed_count(), 600);

        let mut b = base.clone();
        b.remove_annotations(0.4, 7).unwrap();
        assert_eq!(a, b);

        let mut c = base.clone();
        c.remove_annotations(0.4, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn remove_annotations_spares_imputed_cells() {
        let mut m = small_matrix();
        m.impute(1, 2, 0, 0.9, 0).unwrap();
        m.remove_annotations(1.0, 3).unwrap();
        assert!(m.cell(1, 2).is_imputed());
        assert_eq!(m.observed_count(), 0);
    }

    #[test]
    fn label_view_partitions_annotators() {
        let mut m = small_matrix();
        let view = m.label_view(1, false);
        assert_eq!(view.present_annotators, vec![0, 1]);
        assert_eq!(view.absent_annotators, vec![2]);
        m.impute(1, 2, 1, 0.7, 0).unwrap();
        let view = m.label_view(1, false);
        assert_eq!(view.absent_annotators, vec![2]);
        let view = m.label_view(1, true);
        assert_eq!(view.present_annotators, vec![0, 1, 2]);
        assert!(view.absent_annotators.is_empty());
    }

    #[test]
    fn subset_keeps_rows_in_order() {
        let m = small_matrix();
        let sub = m.subset(&[2, 0]).unwrap();
        assert_eq!(sub.num_samples(), 2);
        assert_eq!(sub.features(0), m.features(2));
        assert_eq!(sub.cell(1, 1), m.cell(0, 1));
    }

    #[test]
    fn imputation_log_is_json_lines() {
        let mut m = small_matrix();
        m.impute(1, 2, 0, 0.75, 2).unwrap();
        let mut buf = Vec::new();
        m.write_imputation_log(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let record: ImputationRecord = serde_json::from_str(text.trim()).unwrap();
        assert_eq!(record, m.imputation_log()[0]);
    }
}
