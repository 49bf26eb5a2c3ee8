//! Rprop- training. By default gradients are summed over the whole training
//! set and one update is made per epoch; online mode updates after every
//! example instead, visiting examples in a fresh order each epoch.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{Network, Workspace};
use super::rprop::{Rprop, RpropConfig};
use super::topology::Topology;
use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureMatrix};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateMode {
    /// One update per epoch from the gradient summed over all examples.
    #[default]
    Batch,
    /// One update per example.
    Online,
}

impl std::str::FromStr for UpdateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "batch" => Ok(UpdateMode::Batch),
            "online" => Ok(UpdateMode::Online),
            other => Err(Error::invalid(format!("unknown update mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub seed: u64,
    /// Independent generator stream, e.g. the fold index.
    pub stream: u64,
    pub mode: UpdateMode,
    pub rprop: RpropConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            seed: 1,
            stream: 0,
            mode: UpdateMode::Batch,
            rprop: RpropConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        self.rprop.validate()
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trained {
    pub network: Network,
    /// Mean per-example loss of every epoch.
    pub loss_trace: Vec<f64>,
}

/// Errors unless `data` can be fed to a network of this topology.
pub fn check_compatible(topology: &Topology, data: &FeatureMatrix) -> Result<()> {
    if data.is_empty() {
        return Err(Error::invalid("no training examples"));
    }
    if topology.output_dim() != data.codebook.len() {
        return Err(Error::Incompatible(format!(
            "{topology} has {} outputs for {} labels",
            topology.output_dim(),
            data.codebook.len()
        )));
    }
    if topology.hidden.is_recurrent() {
        if data.kind != FeatureKind::Segment || data.step_dim != topology.input_dim() {
            return Err(Error::Incompatible(format!(
                "{topology} needs segment features with {} values per frame, got {} with {}",
                topology.input_dim(),
                data.kind,
                data.step_dim
            )));
        }
    } else if data.row_dim() != topology.input_dim() {
        return Err(Error::Incompatible(format!(
            "{topology} needs {} inputs, rows have {}",
            topology.input_dim(),
            data.row_dim()
        )));
    }
    Ok(())
}

/// Initializes weights from the seeded generator and trains.
pub fn train(topology: Topology, data: &FeatureMatrix, config: &TrainConfig) -> Result<Trained> {
    config.validate()?;
    check_compatible(&topology, data)?;
    let mut rng = config.rng();
    let network = Network::random(topology, &mut rng);
    train_from(network, data, config, &mut rng)
}

/// Continues training `network`, drawing epoch orders from `rng`.
pub fn train_from(
    mut network: Network,
    data: &FeatureMatrix,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Trained> {
    config.validate()?;
    check_compatible(network.topology(), data)?;
    let mut opt = Rprop::new(network.weights().len(), config.rprop);
    let mut grad = vec![0.0; network.weights().len()];
    let mut sum = match config.mode {
        UpdateMode::Batch => vec![0.0; grad.len()],
        UpdateMode::Online => Vec::new(),
    };
    let mut ws = Workspace::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut trace = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        sum.fill(0.0);
        for &i in &order {
            total += network.gradient_into(&data.rows[i], &data.targets[i], &mut grad, &mut ws)?;
            match config.mode {
                UpdateMode::Online => opt.step(network.weights_mut(), &grad)?,
                UpdateMode::Batch => {
                    for (s, g) in sum.iter_mut().zip(&grad) {
                        *s += g;
                    }
                }
            }
        }
        if config.mode == UpdateMode::Batch {
            opt.step(network.weights_mut(), &sum)?;
        }
        let mean = total / data.len() as f64;
        if !mean.is_finite() || network.weights().iter().any(|w| !w.is_finite()) {
            return Err(Error::Diverged { epoch, loss: mean });
        }
        log::debug!("epoch {epoch}: loss {mean:.6}");
        trace.push(mean);
    }
    Ok(Trained {
        network,
        loss_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LabelCodebook;

    fn xor() -> FeatureMatrix {
        let cb = LabelCodebook::new(["0", "1"]).unwrap();
        let rows = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
        let targets = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]];
        FeatureMatrix {
            kind: FeatureKind::Statistical,
            rows,
            targets,
            codebook: cb,
            step_dim: 2,
            scaler: None,
        }
    }

    #[test]
    fn learns_xor() {
        let cfg = TrainConfig {
            epochs: 500,
            seed: 1,
            ..TrainConfig::default()
        };
        let t = train("fnn-sigmoid:2-8-2".parse().unwrap(), &xor(), &cfg).unwrap();
        assert_eq!(t.loss_trace.len(), 500);
        let data = xor();
        let mse: f64 = (0..4)
            .map(|i| t.network.loss(&data.rows[i], &data.targets[i]).unwrap())
            .sum::<f64>()
            / 4.0;
        assert!(mse < 0.01, "final mse {mse}");
    }

    #[test]
    fn same_seed_same_trace() {
        let cfg = TrainConfig {
            epochs: 30,
            seed: 9,
            ..TrainConfig::default()
        };
        let a = train("fnn-tanh:2-4-2".parse().unwrap(), &xor(), &cfg).unwrap();
        let b = train("fnn-tanh:2-4-2".parse().unwrap(), &xor(), &cfg).unwrap();
        assert_eq!(a, b);
        let other = TrainConfig { stream: 1, ..cfg.clone() };
        let c = train("fnn-tanh:2-4-2".parse().unwrap(), &xor(), &other).unwrap();
        assert_ne!(a.network, c.network);
        let online = TrainConfig { mode: UpdateMode::Online, ..cfg.clone() };
        let d = train("fnn-tanh:2-4-2".parse().unwrap(), &xor(), &online).unwrap();
        assert_eq!(d, train("fnn-tanh:2-4-2".parse().unwrap(), &xor(), &online).unwrap());
        assert_ne!(a.network, d.network);
    }

    #[test]
    fn rejects_mismatched_data() {
        let cfg = TrainConfig::default();
        assert!(train("fnn-sigmoid:3-4-2".parse().unwrap(), &xor(), &cfg).is_err());
        assert!(train("fnn-sigmoid:2-4-3".parse().unwrap(), &xor(), &cfg).is_err());
        assert!(train("rnn-lstm:2-4-2".parse().unwrap(), &xor(), &cfg).is_err());
        let zero = TrainConfig { epochs: 0, ..cfg };
        assert!(train("fnn-sigmoid:2-4-2".parse().unwrap(), &xor(), &zero).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let mut data = xor();
        data.rows[0][0] = f64::NAN;
        let cfg = TrainConfig { epochs: 2, ..TrainConfig::default() };
        let err = train("fnn-sigmoid:2-4-2".parse().unwrap(), &data, &cfg).unwrap_err();
        assert!(matches!(err, Error::Diverged { epoch: 0, .. }), "{err}");
    }
}
