//! Feedforward and LSTM classifiers with softmax outputs, trained with
//! Rprop- on mean squared error.

pub mod activation;
mod network;
mod persist;
pub mod rprop;
mod topology;
mod train;

pub use network::{loss_mse, LstmState, Network};
pub use persist::{load_model, model_from_xml, model_to_xml, save_model};
pub use rprop::{Rprop, RpropConfig};
pub use topology::{HiddenKind, Topology};
pub use train::{check_compatible, train, train_from, TrainConfig, Trained, UpdateMode};

use crate::error::{Error, Result};
use crate::features::{argmax, ColumnScaler, FeatureKind};
use crate::fusion::FusionStrategy;
use crate::model::LabelCodebook;

/// A trained network with everything needed to classify new recordings.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkModel {
    pub network: Network,
    pub codebook: LabelCodebook,
    pub feature_kind: FeatureKind,
    pub fusion: FusionStrategy,
    /// Data preparation the model was trained under, e.g. `p-h`.
    pub scheme: Option<String>,
    /// Normalization fitted on the training rows.
    pub scaler: Option<ColumnScaler>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub index: usize,
    pub label: String,
    pub distribution: Vec<f64>,
}

impl NetworkModel {
    pub fn new(
        network: Network,
        codebook: LabelCodebook,
        feature_kind: FeatureKind,
        fusion: FusionStrategy,
    ) -> Result<Self> {
        let m = NetworkModel {
            network,
            codebook,
            feature_kind,
            fusion,
            scheme: None,
            scaler: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.network.topology();
        if t.output_dim() != self.codebook.len() {
            return Err(Error::ModelFormat(format!(
                "{t} has {} outputs for {} labels",
                t.output_dim(),
                self.codebook.len()
            )));
        }
        if t.hidden.is_recurrent() && self.feature_kind != FeatureKind::Segment {
            return Err(Error::ModelFormat(format!("{t} cannot take {} features", self.feature_kind)));
        }
        if let Some(s) = &self.scaler {
            if s.dim() != t.input_dim() && !t.hidden.is_recurrent() {
                return Err(Error::ModelFormat(format!(
                    "scaler covers {} columns, network takes {}",
                    s.dim(),
                    t.input_dim()
                )));
            }
        }
        Ok(())
    }

    /// Classifies one feature row that has already been normalized.
    pub fn predict(&self, row: &[f64]) -> Result<Prediction> {
        let distribution = self.network.forward(row)?;
        let index = argmax(&distribution);
        Ok(Prediction {
            index,
            label: self.codebook.symbol(index).expect("output within codebook").to_string(),
            distribution,
        })
    }

    /// Applies the stored normalization, if any, then classifies.
    pub fn predict_raw(&self, row: &[f64]) -> Result<Prediction> {
        match &self.scaler {
            Some(s) => self.predict(&s.transform(row)?),
            None => self.predict(row),
        }
    }
}
