//! Run configuration: an optional TOML file overridden by flags.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use wristkey_core::eval::{ExperimentConfig, ModelKind, Scheme};
use wristkey_core::fusion::{FusionConfig, FusionStrategy};
use wristkey_core::nn::{TrainConfig, UpdateMode};
use wristkey_core::preprocess::PreprocessConfig;
use wristkey_core::segmentation::SegmentationConfig;
use wristkey_core::synth::SynthConfig;
use wristkey_core::{Error, Millis, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub hidden_units: usize,
    pub folds: usize,
    pub transfer_epochs: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let e = ExperimentConfig::default();
        ModelSection {
            hidden_units: e.hidden_units,
            folds: e.folds,
            transfer_epochs: e.transfer_epochs,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerSection {
    pub tcp_addr: String,
    pub http_addr: String,
    pub data_dir: PathBuf,
}

impl Default for ServerSection {
    fn default() -> Self {
        ServerSection {
            tcp_addr: "127.0.0.1:5000".into(),
            http_addr: "127.0.0.1:8080".into(),
            data_dir: PathBuf::from("sessions"),
        }
    }
}

/// Every tunable of the pipeline. Loaded from TOML, then flags win.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds training, synthesis and replay when set.
    pub seed: Option<u64>,
    pub scheme: Option<Scheme>,
    pub model: Option<ModelKind>,
    pub preprocess: PreprocessConfig,
    pub fusion: FusionConfig,
    pub segmentation: SegmentationConfig,
    pub train: TrainConfig,
    #[serde(rename = "model-params")]
    pub model_params: ModelSection,
    pub synth: SynthConfig,
    pub server: ServerSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            preprocess: self.preprocess.clone(),
            fusion: self.fusion.clone(),
            segmentation: self.segmentation.clone(),
            train: self.train.clone(),
            hidden_units: self.model_params.hidden_units,
            folds: self.model_params.folds,
            transfer_epochs: self.model_params.transfer_epochs,
        }
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme.unwrap_or(Scheme::PT)
    }

    pub fn validate(&self) -> Result<()> {
        self.experiment().validate()?;
        self.synth.validate()
    }
}

/// Flags shared by every subcommand.
#[derive(Args, Clone, Debug, Default)]
pub struct Overrides {
    /// TOML run configuration; flags override its values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for training, synthesis and replay
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Data preparation scheme: p-t, p-h, r-t or r-h
    #[arg(long, global = true)]
    pub scheme: Option<Scheme>,
    /// Classifier: fnn-sigmoid, fnn-tanh or rnn-lstm
    #[arg(long, global = true)]
    pub model: Option<ModelKind>,
    /// Fusion strategy, e.g. g3a3
    #[arg(long, global = true)]
    pub strategy: Option<FusionStrategy>,
    /// Fusion grid interval in ms
    #[arg(long, global = true)]
    pub interval_ms: Option<Millis>,

    #[arg(long, global = true)]
    pub median_window_gyro: Option<usize>,
    #[arg(long, global = true)]
    pub median_window_accel: Option<usize>,
    #[arg(long, global = true)]
    pub gyro_delay_us: Option<f64>,
    #[arg(long, global = true)]
    pub accel_delay_us: Option<f64>,
    #[arg(long, global = true)]
    pub gyro_lowpass_hz: Option<f64>,
    #[arg(long, global = true)]
    pub accel_highpass_hz: Option<f64>,
    #[arg(long, global = true)]
    pub butterworth_order: Option<usize>,
    #[arg(long, global = true)]
    pub kalman_q: Option<f64>,
    #[arg(long, global = true)]
    pub kalman_r: Option<f64>,

    /// Frames on each side of a segment centre
    #[arg(long, global = true)]
    pub half_window: Option<usize>,
    #[arg(long, global = true)]
    pub peak_threshold: Option<f64>,
    #[arg(long, global = true)]
    pub match_tolerance_ms: Option<Millis>,

    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    /// batch (one update per epoch) or online (one per example)
    #[arg(long, global = true)]
    pub update_mode: Option<UpdateMode>,
    #[arg(long, global = true)]
    pub hidden_units: Option<usize>,
    #[arg(long, global = true)]
    pub folds: Option<usize>,
    #[arg(long, global = true)]
    pub transfer_epochs: Option<usize>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl Overrides {
    /// The config file (if any) with these flags applied, validated.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if self.seed.is_some() {
            c.seed = self.seed;
        }
        if let Some(seed) = c.seed {
            c.train.seed = seed;
            c.synth.seed = seed;
        }
        if self.scheme.is_some() {
            c.scheme = self.scheme;
        }
        if self.model.is_some() {
            c.model = self.model;
        }
        set(&mut c.fusion.strategy, self.strategy);
        set(&mut c.fusion.interval_ms, self.interval_ms);
        let p = &mut c.preprocess;
        set(&mut p.median_window_gyro, self.median_window_gyro);
        set(&mut p.median_window_accel, self.median_window_accel);
        set(&mut p.gyro_delay_us, self.gyro_delay_us);
        set(&mut p.accel_delay_us, self.accel_delay_us);
        set(&mut p.gyro_lowpass_hz, self.gyro_lowpass_hz);
        set(&mut p.accel_highpass_hz, self.accel_highpass_hz);
        set(&mut p.butterworth_order, self.butterworth_order);
        set(&mut p.kalman_q, self.kalman_q);
        set(&mut p.kalman_r, self.kalman_r);
        let s = &mut c.segmentation;
        set(&mut s.half_window, self.half_window);
        set(&mut s.peak_threshold, self.peak_threshold);
        set(&mut s.match_tolerance_ms, self.match_tolerance_ms);
        set(&mut c.train.epochs, self.epochs);
        set(&mut c.train.mode, self.update_mode);
        let m = &mut c.model_params;
        set(&mut m.hidden_units, self.hidden_units);
        set(&mut m.folds, self.folds);
        set(&mut m.transfer_epochs, self.transfer_epochs);
        c.validate()?;
        Ok(c)
    }
}
