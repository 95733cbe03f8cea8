//! Config-driven experiment running.
//!
//! One declarative config file describes the dataset source, the training
//! policy, the similarity metric, the seed list, and the output directory;
//! every run artifact (reports, traces, imputation logs, similarity
//! exports, comparison tables) lands under the output directory together
//! with a manifest recording the config and its hash. Identical configs
//! produce byte-identical reports.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agreement::SimilarityMetric;
use crate::error::{Error, Result};
use crate::eval::{accuracy, compare, dic, mean_accuracy, stratified_split, ComparisonTable, RunReport};
use crate::refine::{train, RecomputeSchedule, TrainingMode, TrainingPolicy};
use crate::seed::{derive_seed, derive_seed_with};
use crate::softlabel::ConfidenceVariant;
use crate::store::{AnnotationMatrix, DatasetFormat};
use crate::synth::{generate, GeneratorSpec, GroundTruth};

/// Held-out fraction of samples, fixed per dataset seed and shared by every
/// policy so comparisons stay paired.
pub const TEST_FRACTION: f64 = 0.2;

/// Where the dataset comes from: exactly one of the two.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    /// Generate from a generator-spec JSON file; the effective generation
    /// seed mixes the spec seed with the run seed.
    Generate(PathBuf),
    /// Load a dataset file (CSV or JSON by extension). A `<path>.truth.json`
    /// sidecar, when present, supplies reference labels for the consistency
    /// gap metric.
    Load(PathBuf),
}

/// Policy block of the config: every training knob, with `mode` listing the
/// modes to run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicySection {
    pub mode: Vec<TrainingMode>,
    pub confidence_threshold: f64,
    pub lambda_kl: f64,
    pub recompute_schedule: RecomputeSchedule,
    pub imputed_as_hard_labels: bool,
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub confidence_variant: ConfidenceVariant,
    pub reverse_kl: bool,
    pub min_overlap: usize,
    pub include_imputed_in_similarity: bool,
}

impl Default for PolicySection {
    fn default() -> Self {
        let p = TrainingPolicy::default();
        Self {
            mode: vec![p.mode],
            confidence_threshold: p.confidence_threshold,
            lambda_kl: p.lambda_kl,
            recompute_schedule: p.recompute_schedule,
            imputed_as_hard_labels: p.imputed_as_hard_labels,
            max_epochs: p.max_epochs,
            learning_rate: p.learning_rate,
            confidence_variant: p.confidence_variant,
            reverse_kl: p.reverse_kl,
            min_overlap: p.min_overlap,
            include_imputed_in_similarity: p.include_imputed_in_similarity,
        }
    }
}

impl PolicySection {
    pub fn to_policy(&self, mode: TrainingMode, seed: u64) -> TrainingPolicy {
        TrainingPolicy {
            mode,
            confidence_threshold: self.confidence_threshold,
            lambda_kl: self.lambda_kl,
            recompute_schedule: self.recompute_schedule,
            imputed_as_hard_labels: self.imputed_as_hard_labels,
            max_epochs: self.max_epochs,
            seed,
            learning_rate: self.learning_rate,
            confidence_variant: self.confidence_variant,
            reverse_kl: self.reverse_kl,
            min_overlap: self.min_overlap,
            include_imputed_in_similarity: self.include_imputed_in_similarity,
        }
    }
}

/// Declarative description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    #[serde(default)]
    pub policy: PolicySection,
    #[serde(default)]
    pub similarity_metric: SimilarityMetric,
    /// Optional post-load degradation: this fraction of observed cells is
    /// removed (seeded per run) before splitting.
    #[serde(default)]
    pub removal_ratio: Option<f64>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if self.policy.mode.is_empty() {
            return Err(Error::Config("policy.mode must list at least one mode".into()));
        }
        if self.policy.confidence_threshold > 1.0 {
            return Err(Error::Config(format!(
                "confidence_threshold {} outside [0, 1]",
                self.policy.confidence_threshold
            )));
        }
        if let Some(r) = self.removal_ratio {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Config(format!("removal_ratio {r} outside [0, 1]")));
            }
        }
        for &mode in &self.policy.mode {
            self.policy.to_policy(mode, 0).validate()?;
        }
        Ok(())
    }
}

/// Reads a config file (TOML by `.toml` extension, JSON otherwise),
/// resolves dataset paths relative to the config's directory, and
/// validates.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut config: ExperimentConfig =
        if path.extension().and_then(|e| e.to_str()) == Some("toml") {
            toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
        } else {
            serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
        };
    if let Some(dir) = path.parent() {
        let resolve = |p: &PathBuf| if p.is_relative() { dir.join(p) } else { p.clone() };
        config.dataset = match &config.dataset {
            DatasetSource::Generate(p) => DatasetSource::Generate(resolve(p)),
            DatasetSource::Load(p) => DatasetSource::Load(resolve(p)),
        };
    }
    config.validate()?;
    Ok(config)
}

/// SHA-256 over the canonical JSON serialization: the hash changes exactly
/// when some config field changes.
pub fn config_hash(config: &ExperimentConfig) -> Result<String> {
    let canonical = serde_json::to_string(config)?;
    let digest = Sha256::digest(canonical.as_bytes());
    Ok(hex_string(&digest))
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize)]
struct Manifest<'a> {
    config_hash: String,
    config: &'a ExperimentConfig,
    runs: Vec<RunEntry>,
}

#[derive(Serialize)]
struct RunEntry {
    mode: TrainingMode,
    seed: u64,
    report: String,
    trace: String,
    imputation_log: String,
    similarity: String,
    status: String,
}

/// Everything run_experiment produced, for callers that want to inspect it.
pub struct ExperimentSummary {
    pub reports: Vec<RunReport>,
    pub table: ComparisonTable,
    pub output_dir: PathBuf,
}

struct PreparedDataset {
    matrix: AnnotationMatrix,
    /// Pre-removal reference labels (complete S x K), when available.
    reference: Option<Vec<Vec<usize>>>,
    descriptor: String,
}

fn prepare_dataset(config: &ExperimentConfig, run_seed: u64) -> Result<PreparedDataset> {
    match &config.dataset {
        DatasetSource::Generate(spec_path) => {
            let text = fs::read_to_string(spec_path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", spec_path.display())))?;
            let mut spec: GeneratorSpec =
                serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
            let descriptor = format!("gen:{}", &hex_string(&Sha256::digest(text.as_bytes()))[..12]);
            spec.seed = derive_seed_with(run_seed, "data", spec.seed);
            let (matrix, truth) = generate(&spec)?;
            Ok(PreparedDataset {
                matrix,
                reference: Some(truth.pre_removal_labels),
                descriptor,
            })
        }
        DatasetSource::Load(data_path) => {
            let matrix =
                AnnotationMatrix::load_dataset(data_path, DatasetFormat::from_path(data_path))?;
            let name = data_path
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or("dataset");
            let truth_path = data_path.with_file_name(format!("{name}.truth.json"));
            let reference = if truth_path.exists() {
                let truth: GroundTruth = serde_json::from_str(&fs::read_to_string(&truth_path)?)?;
                Some(truth.pre_removal_labels)
            } else {
                None
            };
            Ok(PreparedDataset { matrix, reference, descriptor: format!("load:{name}") })
        }
    }
}

/// Runs every (seed, mode) combination and writes all artifacts under
/// `output_dir`. On a training failure the partial artifacts are kept, a
/// `FAILED` marker is written, and the error propagates.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    config.validate()?;
    let out = &config.output_dir;
    for sub in ["reports", "traces", "imputations", "similarity"] {
        fs::create_dir_all(out.join(sub))?;
    }
    let hash = config_hash(config)?;
    let mut runs = Vec::new();
    let mut reports = Vec::new();

    for &seed in &config.seeds {
        let prepared = prepare_dataset(config, seed)?;
        let mut matrix = prepared.matrix;
        if let Some(ratio) = config.removal_ratio {
            matrix.remove_annotations(ratio, derive_seed(seed, "removal"))?;
        }
        let split = stratified_split(&matrix, TEST_FRACTION, derive_seed(seed, "split"))?;
        let test_reference: Option<Vec<Vec<usize>>> = prepared.reference.as_ref().map(|rows| {
            split.test_indices.iter().map(|&s| rows[s].clone()).collect()
        });

        for &mode in &config.policy.mode {
            let policy = config.policy.to_policy(mode, seed);
            let mut train_matrix = split.train.clone();
            let output = match train(&mut train_matrix, &policy, config.similarity_metric) {
                Ok(o) => o,
                Err(e) => {
                    let msg = format!("run mode={mode} seed={seed}: {e}\n");
                    fs::write(out.join("FAILED"), &msg)?;
                    write_manifest(out, &hash, config, &runs)?;
                    return Err(Error::Numeric(msg));
                }
            };
            let per_annotator = accuracy(&output.models, &split.test)?;
            let dic_value = match &test_reference {
                Some(reference) => {
                    Some(dic(&output.models, &split.test, reference, policy.min_overlap)?)
                }
                None => None,
            };
            let report = RunReport {
                policy_mode: mode,
                seed,
                dataset: prepared.descriptor.clone(),
                epochs_run: output.trace.epochs.len(),
                mean_accuracy: mean_accuracy(&per_annotator),
                per_annotator_accuracy: per_annotator,
                dic: dic_value,
            };

            let stem = format!("{mode}_seed{seed}");
            let report_path = format!("reports/report_{stem}.json");
            let trace_path = format!("traces/trace_{stem}.csv");
            let log_path = format!("imputations/imputed_{stem}.jsonl");
            let sim_path = format!("similarity/sim_{stem}.csv");
            let mut report_json = serde_json::to_string_pretty(&report)?;
            report_json.push('\n');
            fs::write(out.join(&report_path), report_json)?;
            let mut trace_buf = Vec::new();
            output.trace.write_csv(&mut trace_buf)?;
            fs::write(out.join(&trace_path), trace_buf)?;
            let mut log_buf = Vec::new();
            train_matrix.write_imputation_log(&mut log_buf)?;
            fs::write(out.join(&log_path), log_buf)?;
            fs::write(out.join(&sim_path), output.similarity.to_csv_string())?;
            fs::write(
                out.join(format!("similarity/sim_{stem}.meta.json")),
                output.similarity.sidecar_json(),
            )?;

            runs.push(RunEntry {
                mode,
                seed,
                report: report_path,
                trace: trace_path,
                imputation_log: log_path,
                similarity: sim_path,
                status: "ok".into(),
            });
            reports.push(report);
        }
    }

    let table = compare(&reports)?;
    fs::write(out.join("comparison_accuracy.csv"), table.to_accuracy_csv())?;
    fs::write(out.join("comparison_dic.csv"), table.to_dic_csv())?;
    fs::write(out.join("comparison.json"), table.to_json_string()?)?;
    write_manifest(out, &hash, config, &runs)?;
    Ok(ExperimentSummary { reports, table, output_dir: out.clone() })
}

fn write_manifest(
    out: &Path,
    hash: &str,
    config: &ExperimentConfig,
    runs: &[RunEntry],
) -> Result<()> {
    let manifest = Manifest {
        config_hash: hash.to_string(),
        config,
        runs: runs.iter().map(|r| RunEntry {
            mode: r.mode,
            seed: r.seed,
            report: r.report.clone(),
            trace: r.trace.clone(),
            imputation_log: r.imputation_log.clone(),
            similarity: r.similarity.clone(),
            status: r.status.clone(),
        }).collect(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(out.join("manifest.json"), text)?;
    Ok(())
}

/// Sweepable knob of the ablation command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationAxis {
    SimilarityMetric,
    Threshold,
    ConfidenceVariant,
}

impl FromStr for AblationAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "similarity_metric" => Ok(AblationAxis::SimilarityMetric),
            "threshold" => Ok(AblationAxis::Threshold),
            "confidence_variant" => Ok(AblationAxis::ConfidenceVariant),
            other => Err(Error::Config(format!(
                "unknown ablation axis {other:?} (expected similarity_metric, threshold, or confidence_variant)"
            ))),
        }
    }
}

impl fmt::Display for AblationAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            AblationAxis::SimilarityMetric => "similarity_metric",
            AblationAxis::Threshold => "threshold",
            AblationAxis::ConfidenceVariant => "confidence_variant",
        };
        f.write_str(name)
    }
}

/// One row of the ablation sweep table.
#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub value: String,
    pub mean_accuracy: f64,
    pub std_accuracy: Option<f64>,
}

/// Runs the full confidence-gated pipeline once per axis value per seed and
/// tabulates mean accuracy per value. Artifacts for each value land under
/// `<output_dir>/value_<value>/`.
pub fn run_ablation(
    config: &ExperimentConfig,
    axis: AblationAxis,
    values: &[String],
) -> Result<Vec<AblationRow>> {
    if values.is_empty() {
        return Err(Error::Config("ablation needs at least one value".into()));
    }
    let mut rows = Vec::new();
    for value in values {
        let mut sweep = config.clone();
        sweep.policy.mode = vec![TrainingMode::SimWeightedConfidence];
        match axis {
            AblationAxis::SimilarityMetric => {
                sweep.similarity_metric = value.parse()?;
            }
            AblationAxis::Threshold => {
                let t: f64 = value.parse().map_err(|_| {
                    Error::Config(format!("threshold {value:?} is not a number"))
                })?;
                if !(0.0..=1.0).contains(&t) {
                    return Err(Error::Config(format!("threshold {t} outside [0, 1]")));
                }
                sweep.policy.confidence_threshold = t;
            }
            AblationAxis::ConfidenceVariant => {
                sweep.policy.confidence_variant = match value.as_str() {
                    "max_only" => ConfidenceVariant::MaxOnly,
                    "entropy_only" => ConfidenceVariant::EntropyOnly,
                    "combined" => ConfidenceVariant::Combined,
                    other => {
                        return Err(Error::Config(format!(
                            "unknown confidence variant {other:?}"
                        )))
                    }
                };
            }
        }
        sweep.output_dir = config.output_dir.join(format!("value_{value}"));
        let summary = run_experiment(&sweep)?;
        let means: Vec<f64> = summary.reports.iter().map(|r| r.mean_accuracy).collect();
        let mean = means.iter().sum::<f64>() / means.len() as f64;
        let std = if means.len() >= 2 {
            let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>()
                / (means.len() - 1) as f64;
            Some(var.sqrt())
        } else {
            None
        };
        rows.push(AblationRow { value: value.clone(), mean_accuracy: mean, std_accuracy: std });
    }
    let mut csv = String::from("value,mean_accuracy,std\n");
    for row in &rows {
        let std = row.std_accuracy.map(|s| format!("{s:.4}")).unwrap_or_default();
        csv.push_str(&format!("{},{:.4},{std}\n", row.value, row.mean_accuracy));
    }
    fs::create_dir_all(&config.output_dir)?;
    fs::write(config.output_dir.join(format!("ablation_{axis}.csv")), csv)?;
    Ok(rows)
}

/// Read-only dataset diagnostics for the validate command.
#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub num_samples: usize,
    pub num_annotators: usize,
    pub num_classes: usize,
    pub feature_dim: usize,
    pub missing_rates: Vec<f64>,
    /// Pairwise observed-overlap counts, K x K.
    pub overlap_counts: Vec<Vec<usize>>,
    /// Observed label counts per class.
    pub label_histogram: Vec<usize>,
}

pub fn validate_dataset(path: &Path) -> Result<Diagnostics> {
    let matrix = AnnotationMatrix::load_dataset(path, DatasetFormat::from_path(path))?;
    let k = matrix.num_annotators();
    let mut overlap = vec![vec![0usize; k]; k];
    let mut histogram = vec![0usize; matrix.num_classes()];
    for s in 0..matrix.num_samples() {
        let labeled: Vec<usize> =
            (0..k).filter(|&a| matrix.cell(s, a).is_observed()).collect();
        for &a in &labeled {
            if let Some(l) = matrix.cell(s, a).label() {
                histogram[l] += 1;
            }
            for &b in &labeled {
                overlap[a][b] += 1;
            }
        }
    }
    Ok(Diagnostics {
        num_samples: matrix.num_samples(),
        num_annotators: k,
        num_classes: matrix.num_classes(),
        feature_dim: matrix.feature_dim(),
        missing_rates: matrix.missing_rates(),
        overlap_counts: overlap,
        label_histogram: histogram,
    })
}

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "samples: {}  annotators: {}  classes: {}  feature dim: {}",
            self.num_samples, self.num_annotators, self.num_classes, self.feature_dim
        )?;
        writeln!(f, "missing rate per annotator:")?;
        for (a, r) in self.missing_rates.iter().enumerate() {
            writeln!(f, "  a_{a}: {:.1}%", 100.0 * r)?;
        }
        writeln!(f, "label histogram (observed):")?;
        for (c, n) in self.label_histogram.iter().enumerate() {
            writeln!(f, "  class {c}: {n}")?;
        }
        writeln!(f, "pairwise overlap counts:")?;
        for row in &self.overlap_counts {
            let cells: Vec<String> = row.iter().map(|c| format!("{c:5}")).collect();
            writeln!(f, "  {}", cells.join(" "))?;
        }
        Ok(())
    }
}

/// Generates a dataset from a spec file and writes it (plus the ground-truth
/// sidecar) to `out_path`.
pub fn generate_to_file(spec_path: &Path, out_path: &Path) -> Result<()> {
    let text = fs::read_to_string(spec_path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", spec_path.display())))?;
    let spec: GeneratorSpec =
        serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
    let (matrix, truth) = generate(&spec)?;
    matrix.save_dataset(out_path, DatasetFormat::from_path(out_path))?;
    let name = out_path.file_name().and_then(|n| n.to_str()).unwrap_or("dataset");
    let mut truth_json = serde_json::to_string(&truth)?;
    truth_json.push('\n');
    fs::write(out_path.with_file_name(format!("{name}.truth.json")), truth_json)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::two_group_spec;
    use tempfile::TempDir;

    fn write_spec(dir: &Path) -> PathBuf {
        let spec = two_group_spec(60, 3, 4, 2, vec![0.3, 0.4, 0.35, 0.3], 5);
        let path = dir.join("genspec.json");
        fs::write(&path, serde_json::to_string(&spec).unwrap()).unwrap();
        path
    }

    fn base_config(dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            dataset: DatasetSource::Generate(write_spec(dir)),
            policy: PolicySection {
                mode: vec![TrainingMode::Skip],
                max_epochs: 2,
                ..Default::default()
            },
            similarity_metric: SimilarityMetric::CohenKappa,
            removal_ratio: None,
            seeds: vec![1],
            output_dir: dir.join("out"),
        }
    }

    #[test]
    fn config_hash_changes_iff_fields_change() {
        let dir = TempDir::new().unwrap();
        let config = base_config(dir.path());
        let h1 = config_hash(&config).unwrap();
        assert_eq!(h1, config_hash(&config.clone()).unwrap());
        let mut changed = config.clone();
        changed.seeds = vec![2];
        assert_ne!(h1, config_hash(&changed).unwrap());
        let mut changed = config;
        changed.policy.confidence_threshold = 0.7;
        assert_ne!(h1, config_hash(&changed).unwrap());
    }

    #[test]
    fn json_and_toml_configs_parse_identically() {
        let dir = TempDir::new().unwrap();
        let spec_path = write_spec(dir.path());
        let json = format!(
            r#"{{
  "dataset": {{"generate": {:?}}},
  "policy": {{"mode": ["skip", "sim_weighted"], "max_epochs": 3}},
  "similarity_metric": "cohen_kappa",
  "seeds": [1, 2],
  "output_dir": "out"
}}"#,
            spec_path.file_name().unwrap().to_str().unwrap()
        );
        let json_path = dir.path().join("config.json");
        fs::write(&json_path, json).unwrap();
        let from_json = load_config(&json_path).unwrap();

        let toml_text = format!(
            "seeds = [1, 2]\noutput_dir = \"out\"\nsimilarity_metric = \"cohen_kappa\"\n\n[dataset]\ngenerate = {:?}\n\n[policy]\nmode = [\"skip\", \"sim_weighted\"]\nmax_epochs = 3\n",
            spec_path.file_name().unwrap().to_str().unwrap()
        );
        let toml_path = dir.path().join("config.toml");
        fs::write(&toml_path, toml_text).unwrap();
        let from_toml = load_config(&toml_path).unwrap();
        assert_eq!(from_json, from_toml);
        assert_eq!(from_json.policy.mode.len(), 2);
        // Defaults fill unspecified policy fields.
        assert_eq!(from_json.policy.confidence_threshold, 0.6);
    }

    #[test]
    fn config_with_both_sources_is_rejected() {
        let dir = TempDir::new().unwrap();
        let text = r#"{
  "dataset": {"generate": "a.json", "load": "b.csv"},
  "seeds": [1],
  "output_dir": "out"
}"#;
        let path = dir.path().join("config.json");
        fs::write(&path, text).unwrap();
        assert!(matches!(load_config(&path), Err(Error::Config(_))));
    }

    #[test]
    fn skip_only_run_produces_one_report_without_imputations() {
        let dir = TempDir::new().unwrap();
        let config = base_config(dir.path());
        let summary = run_experiment(&config).unwrap();
        assert_eq!(summary.reports.len(), 1);
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(config.output_dir.join("manifest.json")).unwrap())
                .unwrap();
        assert_eq!(manifest["runs"].as_array().unwrap().len(), 1);
        let log = fs::read_to_string(
            config.output_dir.join("imputations/imputed_skip_seed1.jsonl"),
        )
        .unwrap();
        assert!(log.is_empty());
    }

    #[test]
    fn three_modes_times_seeds_cardinality() {
        let dir = TempDir::new().unwrap();
        let mut config = base_config(dir.path());
        config.policy.mode = vec![
            TrainingMode::Skip,
            TrainingMode::SimWeighted,
            TrainingMode::SimWeightedConfidence,
        ];
        config.seeds = vec![1, 2];
        let summary = run_experiment(&config).unwrap();
        assert_eq!(summary.reports.len(), 6);
        assert_eq!(summary.table.rows.len(), 3);
        assert!(config.output_dir.join("comparison_accuracy.csv").exists());
        assert!(config.output_dir.join("comparison_dic.csv").exists());
    }

    #[test]
    fn repeated_runs_are_byte_identical() {
        let dir = TempDir::new().unwrap();
        let mut config = base_config(dir.path());
        config.policy.mode = vec![TrainingMode::SimWeightedConfidence];
        config.output_dir = dir.path().join("out1");
        run_experiment(&config).unwrap();
        let first = fs::read(config.output_dir.join("reports/report_sim_weighted_confidence_seed1.json")).unwrap();
        let first_cmp = fs::read(config.output_dir.join("comparison_accuracy.csv")).unwrap();
        config.output_dir = dir.path().join("out2");
        run_experiment(&config).unwrap();
        let second = fs::read(config.output_dir.join("reports/report_sim_weighted_confidence_seed1.json")).unwrap();
        let second_cmp = fs::read(config.output_dir.join("comparison_accuracy.csv")).unwrap();
        assert_eq!(first, second);
        assert_eq!(first_cmp, second_cmp);
    }

    #[test]
    fn removal_ratio_degrades_loaded_dataset() {
        let dir = TempDir::new().unwrap();
        let spec = two_group_spec(60, 3, 4, 2, vec![0.0; 4], 5);
        let data_path = dir.path().join("data.csv");
        let (matrix, _) = generate(&spec).unwrap();
        matrix.save_dataset(&data_path, DatasetFormat::Csv { num_classes: None }).unwrap();
        let config = ExperimentConfig {
            dataset: DatasetSource::Load(data_path),
            policy: PolicySection {
                mode: vec![TrainingMode::Skip],
                max_epochs: 2,
                ..Default::default()
            },
            similarity_metric: SimilarityMetric::CohenKappa,
            removal_ratio: Some(0.4),
            seeds: vec![3],
            output_dir: dir.path().join("out"),
        };
        let summary = run_experiment(&config).unwrap();
        assert_eq!(summary.reports.len(), 1);
        // No truth sidecar: the consistency gap is absent.
        assert!(summary.reports[0].dic.is_none());
    }

    #[test]
    fn generate_command_writes_dataset_and_truth() {
        let dir = TempDir::new().unwrap();
        let spec_path = write_spec(dir.path());
        let out_path = dir.path().join("synth.csv");
        generate_to_file(&spec_path, &out_path).unwrap();
        assert!(out_path.exists());
        assert!(dir.path().join("synth.csv.truth.json").exists());
        let diags = validate_dataset(&out_path).unwrap();
        assert_eq!(diags.num_annotators, 4);
        assert_eq!(diags.num_samples, 60);
        // Round-trip: loading and re-saving reproduces the canonical bytes.
        let first = fs::read(&out_path).unwrap();
        let matrix =
            AnnotationMatrix::load_dataset(&out_path, DatasetFormat::Csv { num_classes: None })
                .unwrap();
        assert_eq!(matrix.to_csv_string().into_bytes(), first);
    }

    #[test]
    fn ablation_threshold_sweep_shapes_table() {
        let dir = TempDir::new().unwrap();
        let mut config = base_config(dir.path());
        config.seeds = vec![1];
        let rows = run_ablation(
            &config,
            AblationAxis::Threshold,
            &["0.5".into(), "0.8".into()],
        )
        .unwrap();
        assert_eq!(rows.len(), 2);
        assert!(config.output_dir.join("ablation_threshold.csv").exists());
        assert!(config.output_dir.join("value_0.5/manifest.json").exists());
    }

    #[test]
    fn ablation_rejects_bad_values() {
        let dir = TempDir::new().unwrap();
        let config = base_config(dir.path());
        assert!(run_ablation(&config, AblationAxis::Threshold, &["1.5".into()]).is_err());
        assert!(
            run_ablation(&config, AblationAxis::ConfidenceVariant, &["bogus".into()]).is_err()
        );
    }
}
