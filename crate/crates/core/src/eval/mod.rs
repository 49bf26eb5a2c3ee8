//! Scoring, cross-validation and the experiment driver.

mod cv;
mod experiment;
pub mod metrics;

pub use cv::{cross_validate, evaluate, fit, kfold_split, prepare_for, EvaluationReport, FoldResult, ModelSpec};
pub use experiment::{
    benchmark_fusion, benchmark_models, codebook_for, features_for, fit_model, infer_session,
    prepare_segments, run_experiment, ExperimentConfig, ExperimentReport, FusionRow, ModelKind, ModelRow,
    PreparedSession, Protocol, Scheme, SegmentPrediction, FUSION_BENCHMARK_UNITS, MODEL_BENCHMARK_ROWS,
};
pub use metrics::{f1_score, mean_std, reliability, ConfusionMatrix};
