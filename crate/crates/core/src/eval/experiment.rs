//! Experiment driver: data preparation schemes, cross-validated and
//! transfer runs, and the fusion and hidden layer benchmarks.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::cv::{cross_validate, evaluate, fit, prepare_for, EvaluationReport, FoldResult, ModelSpec};
use super::metrics::reliability;
use crate::error::{Error, Result};
use crate::features::{build_segment_features, raw_statistical_features, FeatureKind, FeatureMatrix};
use crate::fusion::{align_session, FusionConfig, FusionStrategy};
use crate::model::{LabelCodebook, Millis, RecordingSession};
use crate::nn::{HiddenKind, NetworkModel, Prediction, TrainConfig};
use crate::preprocess::{preprocess_pipeline_traced, PipelineMode, PipelineTrace, PreprocessConfig};
use crate::segmentation::{match_labels_to_peaks, segment_by_labels, segment_by_peaks, Segment, SegmentationConfig};

/// {pre-processed, raw} x {timestamp, heuristic} data preparation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "p-t")]
    PT,
    #[serde(rename = "p-h")]
    PH,
    #[serde(rename = "r-t")]
    RT,
    #[serde(rename = "r-h")]
    RH,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::PT, Scheme::PH, Scheme::RT, Scheme::RH];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::PT => "p-t",
            Scheme::PH => "p-h",
            Scheme::RT => "r-t",
            Scheme::RH => "r-h",
        }
    }

    pub fn preprocessed(self) -> bool {
        matches!(self, Scheme::PT | Scheme::PH)
    }

    pub fn heuristic(self) -> bool {
        matches!(self, Scheme::PH | Scheme::RH)
    }

    fn pipeline_mode(self) -> PipelineMode {
        if self.preprocessed() {
            PipelineMode::Full
        } else {
            PipelineMode::CalibrationOnly
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase();
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == key)
            .ok_or_else(|| Error::invalid(format!("unknown scheme {s:?} (p-t, p-h, r-t, r-h)")))
    }
}

/// The three classifiers of the experiments, each tied to one feature kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    FnnSigmoid,
    FnnTanh,
    RnnLstm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::FnnSigmoid, ModelKind::FnnTanh, ModelKind::RnnLstm];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::FnnSigmoid => "fnn-sigmoid",
            ModelKind::FnnTanh => "fnn-tanh",
            ModelKind::RnnLstm => "rnn-lstm",
        }
    }

    pub fn hidden(self) -> HiddenKind {
        match self {
            ModelKind::FnnSigmoid => HiddenKind::Sigmoid,
            ModelKind::FnnTanh => HiddenKind::Tanh,
            ModelKind::RnnLstm => HiddenKind::Lstm,
        }
    }

    pub fn features(self) -> FeatureKind {
        match self {
            ModelKind::FnnSigmoid => FeatureKind::Statistical,
            ModelKind::FnnTanh | ModelKind::RnnLstm => FeatureKind::Segment,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown model {s:?} (fnn-sigmoid, fnn-tanh, rnn-lstm)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Stage parameters; the scheme decides whether the full chain runs.
    pub preprocess: PreprocessConfig,
    pub fusion: FusionConfig,
    pub segmentation: SegmentationConfig,
    pub train: TrainConfig,
    pub hidden_units: usize,
    pub folds: usize,
    pub transfer_epochs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            preprocess: PreprocessConfig::default(),
            fusion: FusionConfig::default(),
            segmentation: SegmentationConfig::default(),
            train: TrainConfig::default(),
            hidden_units: 128,
            folds: 5,
            transfer_epochs: 200,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.preprocess.validate()?;
        self.fusion.validate()?;
        self.segmentation.validate()?;
        self.train.validate()?;
        if self.hidden_units == 0 {
            return Err(Error::invalid("hidden_units must be >= 1"));
        }
        if self.folds < 2 {
            return Err(Error::invalid("folds must be >= 2"));
        }
        if self.transfer_epochs == 0 {
            return Err(Error::invalid("transfer_epochs must be >= 1"));
        }
        Ok(())
    }

    fn model_spec(&self, model: ModelKind) -> ModelSpec {
        ModelSpec {
            hidden: model.hidden(),
            hidden_units: self.hidden_units,
        }
    }
}

/// Segments cut from one session under a scheme.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedSession {
    pub segments: Vec<Segment>,
    pub trace: PipelineTrace,
    /// Peaks found by heuristic segmentation, before label matching.
    pub detected: Option<usize>,
}

/// Cleans (or only calibrates), fuses and segments one session. Heuristic
/// schemes keep only peaks that received a label.
pub fn prepare_segments(
    session: &RecordingSession,
    scheme: Scheme,
    config: &ExperimentConfig,
) -> Result<PreparedSession> {
    let pre = PreprocessConfig {
        mode: scheme.pipeline_mode(),
        ..config.preprocess.clone()
    };
    let (clean, trace) = preprocess_pipeline_traced(session, &pre)?;
    let aligned = align_session(&clean, config.fusion.interval_ms)?;
    let frames = aligned.fuse(&config.fusion)?;
    let seg = &config.segmentation;
    if !scheme.heuristic() {
        let segments = segment_by_labels(&frames, &clean.labels, seg.half_window);
        return Ok(PreparedSession {
            segments,
            trace,
            detected: None,
        });
    }
    let peaks = segment_by_peaks(&frames, &aligned.gyroscope, seg.half_window, seg.peak_threshold)?;
    let segments = match_labels_to_peaks(&peaks, &clean.labels, seg.match_tolerance_ms);
    log::info!(
        "{}: {} peaks, {} matched to {} labels",
        session.id,
        peaks.len(),
        segments.len(),
        clean.labels.len()
    );
    Ok(PreparedSession {
        segments,
        trace,
        detected: Some(peaks.len()),
    })
}

/// Labels found in the sessions: keypad order when every label is a
/// keypad key, sorted otherwise.
pub fn codebook_for(sessions: &[RecordingSession]) -> Result<LabelCodebook> {
    let present: BTreeSet<&str> = sessions
        .iter()
        .flat_map(|s| s.labels.iter().map(|l| l.label.as_str()))
        .collect();
    if present.len() < 2 {
        return Err(Error::invalid(format!("need at least two distinct labels, found {}", present.len())));
    }
    let keypad = LabelCodebook::keypad();
    if present.iter().all(|l| keypad.contains(l)) {
        LabelCodebook::new(keypad.symbols().iter().filter(|s| present.contains(s.as_str())).cloned())
    } else {
        LabelCodebook::new(present)
    }
}

/// Un-normalized feature rows for labelled segments.
pub fn features_for(
    segments: &[Segment],
    kind: FeatureKind,
    codebook: &LabelCodebook,
    config: &ExperimentConfig,
) -> Result<FeatureMatrix> {
    if segments.is_empty() {
        return Err(Error::invalid("no segments to build features from"));
    }
    match kind {
        FeatureKind::Statistical => {
            raw_statistical_features(segments, codebook, config.segmentation.peak_threshold)
        }
        FeatureKind::Segment => build_segment_features(segments, codebook),
    }
}

fn session_features(
    sessions: &[RecordingSession],
    scheme: Scheme,
    kind: FeatureKind,
    codebook: &LabelCodebook,
    config: &ExperimentConfig,
) -> Result<(Vec<FeatureMatrix>, PipelineTrace)> {
    let mut trace = PipelineTrace::default();
    let mut out = Vec::with_capacity(sessions.len());
    for s in sessions {
        let prepared = prepare_segments(s, scheme, config)?;
        trace = prepared.trace;
        out.push(features_for(&prepared.segments, kind, codebook, config)?);
    }
    Ok((out, trace))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    CrossValidation,
    Transfer,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub scheme: Scheme,
    pub model: ModelKind,
    pub protocol: Protocol,
    pub hidden_units: usize,
    pub epochs: usize,
    pub fusion: FusionStrategy,
    /// Labelled segments used for training and evaluation.
    pub segments: usize,
    pub models_trained: usize,
    pub pipeline: PipelineTrace,
    pub evaluation: EvaluationReport,
}

/// k-fold cross-validation on `train` when `eval` is empty; otherwise one
/// model is trained on all of `train` for `transfer_epochs` epochs and
/// scored on `eval`. With several training sessions the folds of every
/// session are pooled into one report.
pub fn run_experiment(
    train: &[RecordingSession],
    eval: &[RecordingSession],
    scheme: Scheme,
    model: ModelKind,
    config: &ExperimentConfig,
) -> Result<ExperimentReport> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("no training sessions"));
    }
    let spec = config.model_spec(model);
    let codebook = codebook_for(train)?;
    let (train_sets, pipeline) = session_features(train, scheme, model.features(), &codebook, config)?;
    let strategy = config.fusion.strategy;

    if eval.is_empty() {
        let mut folds: Vec<FoldResult> = Vec::new();
        let mut segments = 0;
        for data in &train_sets {
            segments += data.len();
            folds.extend(cross_validate(&spec, data, strategy, config.folds, &config.train)?.folds);
        }
        let models_trained = folds.len();
        return Ok(ExperimentReport {
            scheme,
            model,
            protocol: Protocol::CrossValidation,
            hidden_units: config.hidden_units,
            epochs: config.train.epochs,
            fusion: strategy,
            segments,
            models_trained,
            pipeline,
            evaluation: EvaluationReport::from_folds(codebook.symbols().to_vec(), folds)?,
        });
    }

    let all = concat(train_sets)?;
    let cfg = TrainConfig {
        epochs: config.transfer_epochs,
        ..config.train.clone()
    };
    let (net, trace) = fit(&spec, &all, strategy, &cfg)?;
    let (eval_sets, _) = session_features(eval, scheme, model.features(), &codebook, config)?;
    let test = prepare_for(&net, &concat(eval_sets)?)?;
    let result = evaluate(&net, &test, trace)?;
    Ok(ExperimentReport {
        scheme,
        model,
        protocol: Protocol::Transfer,
        hidden_units: config.hidden_units,
        epochs: config.transfer_epochs,
        fusion: strategy,
        segments: all.len() + test.len(),
        models_trained: 1,
        pipeline,
        evaluation: EvaluationReport::from_folds(codebook.symbols().to_vec(), vec![result])?,
    })
}

fn concat(sets: Vec<FeatureMatrix>) -> Result<FeatureMatrix> {
    let mut it = sets.into_iter();
    let mut all = it.next().ok_or_else(|| Error::invalid("no sessions"))?;
    for m in it {
        all.extend(m)?;
    }
    Ok(all)
}

/// Trains one model on every labelled segment of `sessions`.
pub fn fit_model(
    sessions: &[RecordingSession],
    scheme: Scheme,
    model: ModelKind,
    config: &ExperimentConfig,
) -> Result<(NetworkModel, Vec<f64>)> {
    config.validate()?;
    let codebook = codebook_for(sessions)?;
    let (sets, _) = session_features(sessions, scheme, model.features(), &codebook, config)?;
    let (mut net, trace) = fit(&config.model_spec(model), &concat(sets)?, config.fusion.strategy, &config.train)?;
    net.scheme = Some(scheme.name().to_string());
    Ok((net, trace))
}

/// Prediction for one heuristically detected keystroke.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SegmentPrediction {
    pub t: Millis,
    pub label: String,
    pub distribution: Vec<f64>,
    pub reliability: f64,
}

/// Detects keystrokes by peak search (labels are ignored) and classifies
/// each one. The model's scheme decides whether the full cleaning chain
/// runs; a model without a scheme is treated as pre-processed.
pub fn infer_session(
    model: &NetworkModel,
    session: &RecordingSession,
    config: &ExperimentConfig,
) -> Result<Vec<SegmentPrediction>> {
    model.validate()?;
    let scheme = match &model.scheme {
        Some(s) => s.parse()?,
        None => Scheme::PH,
    };
    let pre = PreprocessConfig {
        mode: scheme.pipeline_mode(),
        ..config.preprocess.clone()
    };
    let (clean, _) = preprocess_pipeline_traced(session, &pre)?;
    let fusion = FusionConfig {
        strategy: model.fusion,
        ..config.fusion.clone()
    };
    let aligned = align_session(&clean, fusion.interval_ms)?;
    let frames = aligned.fuse(&fusion)?;
    let seg = &config.segmentation;
    let segments = segment_by_peaks(&frames, &aligned.gyroscope, seg.half_window, seg.peak_threshold)?;
    segments
        .iter()
        .map(|s| {
            let row = match model.feature_kind {
                FeatureKind::Statistical => crate::features::statistical_row(s, seg.peak_threshold)?,
                FeatureKind::Segment => s.frames.clone(),
            };
            let Prediction {
                label, distribution, ..
            } = model.predict_raw(&row)?;
            Ok(SegmentPrediction {
                t: s.center_t,
                label,
                reliability: reliability(&distribution)?,
                distribution,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FusionRow {
    pub strategy: FusionStrategy,
    pub vector: &'static str,
    pub dim: usize,
    pub f1: f64,
    pub reliability: f64,
}

/// Units of the recurrent layer in the fusion benchmark.
pub const FUSION_BENCHMARK_UNITS: usize = 9;

/// For every fusion strategy, trains a small LSTM on all segments and
/// scores it on the same segments: a measure of how memorable each input
/// vector is, not of generalization.
pub fn benchmark_fusion(
    sessions: &[RecordingSession],
    scheme: Scheme,
    config: &ExperimentConfig,
) -> Result<Vec<FusionRow>> {
    config.validate()?;
    if sessions.is_empty() {
        return Err(Error::invalid("no sessions"));
    }
    let codebook = codebook_for(sessions)?;
    if codebook.len() != 4 {
        return Err(Error::invalid(format!(
            "fusion benchmark needs a dataset with 4 labels, found {}",
            codebook.len()
        )));
    }
    let spec = ModelSpec {
        hidden: HiddenKind::Lstm,
        hidden_units: FUSION_BENCHMARK_UNITS,
    };
    FusionStrategy::ALL
        .into_iter()
        .map(|strategy| {
            let cfg = ExperimentConfig {
                fusion: FusionConfig {
                    strategy,
                    ..config.fusion.clone()
                },
                ..config.clone()
            };
            let (sets, _) = session_features(sessions, scheme, FeatureKind::Segment, &codebook, &cfg)?;
            let data = concat(sets)?;
            let (model, trace) = fit(&spec, &data, strategy, &cfg.train)?;
            let r = evaluate(&model, &data, trace)?;
            log::info!("fusion {strategy}: F1 {:.3}", r.f1);
            Ok(FusionRow {
                strategy,
                vector: strategy.vector(),
                dim: strategy.dim(),
                f1: r.f1,
                reliability: r.reliability,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelRow {
    pub id: char,
    pub hidden: HiddenKind,
    pub features: FeatureKind,
    pub f1_mean: f64,
    pub f1_std: f64,
    pub reliability_mean: f64,
    pub reliability_std: f64,
}

/// Rows A-F of the hidden layer benchmark.
pub const MODEL_BENCHMARK_ROWS: [(char, HiddenKind, FeatureKind); 6] = [
    ('A', HiddenKind::Sigmoid, FeatureKind::Statistical),
    ('B', HiddenKind::Tanh, FeatureKind::Statistical),
    ('C', HiddenKind::Sigmoid, FeatureKind::Segment),
    ('D', HiddenKind::Tanh, FeatureKind::Segment),
    ('E', HiddenKind::Lstm, FeatureKind::Segment),
    ('F', HiddenKind::LstmPeephole, FeatureKind::Segment),
];

/// Cross-validates each hidden layer and feature pairing on the same
/// segments.
pub fn benchmark_models(
    sessions: &[RecordingSession],
    scheme: Scheme,
    config: &ExperimentConfig,
) -> Result<Vec<ModelRow>> {
    config.validate()?;
    if sessions.is_empty() {
        return Err(Error::invalid("no sessions"));
    }
    let codebook = codebook_for(sessions)?;
    let mut segments = Vec::new();
    for s in sessions {
        segments.extend(prepare_segments(s, scheme, config)?.segments);
    }
    let stat = features_for(&segments, FeatureKind::Statistical, &codebook, config)?;
    let seg = features_for(&segments, FeatureKind::Segment, &codebook, config)?;
    MODEL_BENCHMARK_ROWS
        .into_iter()
        .map(|(id, hidden, features)| {
            let spec = ModelSpec {
                hidden,
                hidden_units: config.hidden_units,
            };
            let data = match features {
                FeatureKind::Statistical => &stat,
                FeatureKind::Segment => &seg,
            };
            let r = cross_validate(&spec, data, config.fusion.strategy, config.folds, &config.train)?;
            log::info!("model benchmark {id}: F1 {:.3} +- {:.3}", r.f1_mean, r.f1_std);
            Ok(ModelRow {
                id,
                hidden,
                features,
                f1_mean: r.f1_mean,
                f1_std: r.f1_std,
                reliability_mean: r.reliability_mean,
                reliability_std: r.reliability_std,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LabelEvent, SensorKind, TriaxialSeries};

    #[test]
    fn names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
        }
        for m in ModelKind::ALL {
            assert_eq!(m.name().parse::<ModelKind>().unwrap(), m);
        }
        assert_eq!("P-H".parse::<Scheme>().unwrap(), Scheme::PH);
        assert!("x-y".parse::<Scheme>().is_err());
        assert_eq!(ModelKind::FnnSigmoid.features(), FeatureKind::Statistical);
    }

    fn session(labels: &[&str]) -> RecordingSession {
        RecordingSession {
            id: "s".into(),
            gyroscope: TriaxialSeries::empty(SensorKind::Gyroscope),
            accelerometer: TriaxialSeries::empty(SensorKind::Accelerometer),
            labels: labels
                .iter()
                .enumerate()
                .map(|(i, l)| LabelEvent::new(i as Millis, *l))
                .collect(),
        }
    }

    #[test]
    fn codebook_follows_keypad_order() {
        let cb = codebook_for(&[session(&["#", "0", "1", "*", "1"])]).unwrap();
        assert_eq!(cb.symbols(), ["1", "*", "0", "#"]);
        let cb = codebook_for(&[session(&["b", "a"]), session(&["c"])]).unwrap();
        assert_eq!(cb.symbols(), ["a", "b", "c"]);
        assert!(codebook_for(&[session(&["1", "1"])]).is_err());
    }
}
