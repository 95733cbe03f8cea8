//! Multi-annotator learning with similarity-weighted soft labels.
//!
//! Crowdsourced datasets rarely have every annotator label every sample, and
//! the usual fallback is to skip the parameter update of an annotator's
//! model whenever that annotator's label is missing. This crate instead
//! trains one classifier per annotator and, on cells without a label,
//! supervises the model with a soft label: a convex combination of the other
//! annotators' predicted distributions, weighted by pairwise inter-annotator
//! agreement (Cohen's kappa by default). A confidence score gates an
//! iterative refinement loop that writes high-confidence pseudo-labels back
//! into the dataset and re-estimates the agreement matrix from the enriched
//! label set.
//!
//! The crate ships:
//!
//! * [`store`] — the sparse samples x annotators label matrix with explicit
//!   missing/imputed cell states and CSV/JSON dataset I/O;
//! * [`agreement`] — Cohen's kappa, two-coder Krippendorff's alpha, Pearson
//!   correlation, and the versioned similarity matrix built from pairwise
//!   overlaps;
//! * [`model`] — a per-annotator multinomial logistic regression with
//!   cross-entropy and KL-divergence losses whose analytic gradients are
//!   finite-difference checkable;
//! * [`softlabel`] — soft-label aggregation and the max-probability times
//!   normalized-entropy-complement confidence score;
//! * [`refine`] — the training loop: per-cell supervised/semi-supervised
//!   action selection, confidence-gated imputation, and scheduled similarity
//!   recomputation, plus the skip baseline;
//! * [`synth`] — a synthetic dataset generator with planted annotator
//!   groups, confusion structure, and controllable missing rates;
//! * [`eval`] — held-out per-annotator accuracy, the inter-annotator
//!   consistency gap metric, and multi-run report aggregation;
//! * [`experiment`] — config-driven experiment running behind the `annosim`
//!   command-line binary.

pub mod agreement;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod model;
pub mod refine;
pub mod seed;
pub mod softlabel;
pub mod store;
pub mod synth;

pub use agreement::{
    cohen_kappa, krippendorff_alpha, pearson_similarity, soft_label_weights, SimilarityConfig,
    SimilarityMatrix, SimilarityMetric,
};
pub use error::{Error, Result};
pub use eval::{accuracy, compare, dic, stratified_split, ComparisonTable, RunReport};
pub use model::{ce_loss, kl_loss, AnnotatorModel, ClassDistribution, ParamGradient};
pub use refine::{
    select_cell_action, train, CellAction, RecomputeSchedule, TrainOutput, TrainingMode,
    TrainingPolicy, TrainingTrace,
};
pub use softlabel::{
    build_soft_label, confidence, confidence_variant, generate_soft_label, ConfidenceVariant,
    SoftLabelResult,
};
pub use store::{AnnotationMatrix, Cell, DatasetFormat, ImputationRecord, LabelView};
pub use synth::{generate, realized_missing_rates, AnnotatorGroup, GeneratorSpec, GroundTruth};
