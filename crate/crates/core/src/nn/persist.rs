//! XML model files.
//!
//! ```xml
//! <network-model version="1">
//!   <topology>rnn-lstm:6-128-12</topology>
//!   <features>segment</features>
//!   <fusion>g3a3</fusion>
//!   <scheme>p-h</scheme>
//!   <codebook><label>1</label>...</codebook>
//!   <scaler><min>...</min><max>...</max></scaler>
//!   <weights count="69120">0.0123 -0.04 ...</weights>
//! </network-model>
//! ```
//!
//! Reals are written as the shortest decimal that parses back to the same
//! `f64`, so files round-trip exactly. `scheme` and `scaler` are optional.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Network, NetworkModel, Topology};
use crate::error::{Error, Result};
use crate::model::LabelCodebook;

const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(rename = "network-model")]
struct ModelDoc {
    #[serde(rename = "@version")]
    version: u32,
    topology: String,
    features: String,
    fusion: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scheme: Option<String>,
    codebook: CodebookDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scaler: Option<ScalerDoc>,
    weights: WeightsDoc,
}

#[derive(Serialize, Deserialize)]
struct CodebookDoc {
    #[serde(rename = "label", default)]
    labels: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct ScalerDoc {
    min: String,
    max: String,
}

#[derive(Serialize, Deserialize)]
struct WeightsDoc {
    #[serde(rename = "@count")]
    count: usize,
    #[serde(rename = "$text", default)]
    values: String,
}

fn join(values: &[f64]) -> String {
    let mut s = String::with_capacity(values.len() * 22);
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        s.push_str(&v.to_string());
    }
    s
}

fn split(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split_ascii_whitespace()
        .map(|p| {
            p.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::ModelFormat(format!("bad {what} value {p:?}")))
        })
        .collect()
}

pub fn model_to_xml(model: &NetworkModel) -> Result<String> {
    let doc = ModelDoc {
        version: VERSION,
        topology: model.network.topology().to_string(),
        features: model.feature_kind.name().to_string(),
        fusion: model.fusion.name().to_string(),
        scheme: model.scheme.clone(),
        codebook: CodebookDoc {
            labels: model.codebook.symbols().to_vec(),
        },
        scaler: model.scaler.as_ref().map(|s| ScalerDoc {
            min: join(&s.min),
            max: join(&s.max),
        }),
        weights: WeightsDoc {
            count: model.network.weights().len(),
            values: join(model.network.weights()),
        },
    };
    let body = quick_xml::se::to_string(&doc).map_err(|e| Error::ModelFormat(e.to_string()))?;
    Ok(format!("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n{body}\n"))
}

pub fn model_from_xml(xml: &str) -> Result<NetworkModel> {
    let doc: ModelDoc = quick_xml::de::from_str(xml).map_err(|e| Error::ModelFormat(e.to_string()))?;
    if doc.version != VERSION {
        return Err(Error::ModelFormat(format!("unsupported model version {}", doc.version)));
    }
    let topology: Topology = doc.topology.parse()?;
    let weights = split(&doc.weights.values, "weight")?;
    if weights.len() != doc.weights.count {
        return Err(Error::ModelFormat(format!(
            "weights element declares {} values, holds {}",
            doc.weights.count,
            weights.len()
        )));
    }
    let network = Network::from_weights(topology, weights)?;
    let codebook = LabelCodebook::new(doc.codebook.labels).map_err(|e| Error::ModelFormat(e.to_string()))?;
    let feature_kind = doc.features.parse().map_err(|e: Error| Error::ModelFormat(e.to_string()))?;
    let fusion = doc.fusion.parse().map_err(|e: Error| Error::ModelFormat(e.to_string()))?;
    let scaler = match doc.scaler {
        Some(s) => {
            let min = split(&s.min, "scaler")?;
            let max = split(&s.max, "scaler")?;
            if min.len() != max.len() {
                return Err(Error::ModelFormat("scaler min and max differ in length".into()));
            }
            Some(crate::features::ColumnScaler { min, max })
        }
        None => None,
    };
    let model = NetworkModel {
        network,
        codebook,
        feature_kind,
        fusion,
        scheme: doc.scheme,
        scaler,
    };
    model.validate()?;
    Ok(model)
}

pub fn save_model(model: &NetworkModel, path: &Path) -> Result<()> {
    let xml = model_to_xml(model)?;
    fs::write(path, xml).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<NetworkModel> {
    let xml = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_xml(&xml)
}
