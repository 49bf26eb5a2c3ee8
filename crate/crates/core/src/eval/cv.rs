use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::metrics::{f1_score, mean_std, reliability, ConfusionMatrix};
use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureMatrix};
use crate::nn::{train, HiddenKind, NetworkModel, Topology, TrainConfig};
use crate::fusion::FusionStrategy;

/// Generator stream reserved for fold assignment; training streams use the
/// fold index.
const SPLIT_STREAM: u64 = u64::MAX;

/// Shuffles `0..n` with the seeded generator and deals it into `k` folds
/// of `floor(n/k)` or `ceil(n/k)` indices, larger folds first.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::invalid("k-fold needs k >= 2"));
    }
    if k > n {
        return Err(Error::invalid(format!("cannot split {n} examples into {k} folds")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SPLIT_STREAM);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

/// Network shape to train: hidden layer kind and width. Input and output
/// sizes follow from the data.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelSpec {
    pub hidden: HiddenKind,
    pub hidden_units: usize,
}

impl ModelSpec {
    pub fn topology(&self, data: &FeatureMatrix) -> Result<Topology> {
        let input = if self.hidden.is_recurrent() {
            data.step_dim
        } else {
            data.row_dim()
        };
        Topology::new(self.hidden, vec![input, self.hidden_units, data.codebook.len()])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FoldResult {
    pub f1: f64,
    /// Mean reliability of the fold's predictions.
    pub reliability: f64,
    pub test_size: usize,
    pub confusion: ConfusionMatrix,
    pub loss_trace: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub labels: Vec<String>,
    pub f1_mean: f64,
    pub f1_std: f64,
    pub reliability_mean: f64,
    pub reliability_std: f64,
    pub folds: Vec<FoldResult>,
    /// Sum over folds.
    pub confusion: ConfusionMatrix,
}

impl EvaluationReport {
    pub fn from_folds(labels: Vec<String>, folds: Vec<FoldResult>) -> Result<Self> {
        let first = folds.first().ok_or_else(|| Error::invalid("report without folds"))?;
        let mut confusion = ConfusionMatrix::new(first.confusion.classes());
        for f in &folds {
            confusion.merge(&f.confusion)?;
        }
        let (f1_mean, f1_std) = mean_std(&folds.iter().map(|f| f.f1).collect::<Vec<_>>());
        let (reliability_mean, reliability_std) =
            mean_std(&folds.iter().map(|f| f.reliability).collect::<Vec<_>>());
        Ok(EvaluationReport {
            labels,
            f1_mean,
            f1_std,
            reliability_mean,
            reliability_std,
            folds,
            confusion,
        })
    }
}

/// Classifies every row of `data` (already normalized) and scores it.
pub fn evaluate(model: &NetworkModel, data: &FeatureMatrix, loss_trace: Vec<f64>) -> Result<FoldResult> {
    if data.codebook != model.codebook {
        return Err(Error::Incompatible("model and data use different label sets".into()));
    }
    let mut confusion = ConfusionMatrix::new(model.codebook.len());
    let mut rel = 0.0;
    for (row, target) in data.rows.iter().zip(&data.targets) {
        let p = model.predict(row)?;
        confusion.add(crate::features::argmax(target), p.index);
        rel += reliability(&p.distribution)?;
    }
    Ok(FoldResult {
        f1: f1_score(&confusion)?,
        reliability: rel / data.len() as f64,
        test_size: data.len(),
        confusion,
        loss_trace,
    })
}

/// Fits a model on `train_rows`. Statistical rows are normalized with a
/// scaler fitted here and stored in the model.
pub fn fit(
    spec: &ModelSpec,
    train_rows: &FeatureMatrix,
    fusion: FusionStrategy,
    config: &TrainConfig,
) -> Result<(NetworkModel, Vec<f64>)> {
    let train_rows = match train_rows.kind {
        FeatureKind::Statistical => train_rows.clone().normalized()?,
        FeatureKind::Segment => train_rows.clone(),
    };
    let topology = spec.topology(&train_rows)?;
    let trained = train(topology, &train_rows, config)?;
    let mut model = NetworkModel::new(trained.network, train_rows.codebook.clone(), train_rows.kind, fusion)?;
    model.scaler = train_rows.scaler.clone();
    Ok((model, trained.loss_trace))
}

/// Applies the model's stored normalization to raw rows.
pub fn prepare_for(model: &NetworkModel, data: &FeatureMatrix) -> Result<FeatureMatrix> {
    if data.kind != model.feature_kind {
        return Err(Error::Incompatible(format!(
            "model takes {} features, data has {}",
            model.feature_kind, data.kind
        )));
    }
    match &model.scaler {
        Some(s) => data.clone().scaled_with(s),
        None => Ok(data.clone()),
    }
}

/// k-fold cross-validation on un-normalized rows: one fresh model per
/// fold, trained on the other folds with generator stream = fold index.
pub fn cross_validate(
    spec: &ModelSpec,
    data: &FeatureMatrix,
    fusion: FusionStrategy,
    k: usize,
    config: &TrainConfig,
) -> Result<EvaluationReport> {
    let folds = kfold_split(data.len(), k, config.seed)?;
    let mut results = Vec::with_capacity(k);
    for (f, test_idx) in folds.iter().enumerate() {
        let train_idx: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|(g, _)| *g != f)
            .flat_map(|(_, idx)| idx.iter().copied())
            .collect();
        let cfg = TrainConfig {
            stream: f as u64,
            ..config.clone()
        };
        let (model, trace) = fit(spec, &data.subset(&train_idx), fusion, &cfg)?;
        let test = prepare_for(&model, &data.subset(test_idx))?;
        let r = evaluate(&model, &test, trace)?;
        log::info!("fold {}/{k}: F1 {:.3}, reliability {:.3}", f + 1, r.f1, r.reliability);
        results.push(r);
    }
    EvaluationReport::from_folds(data.codebook.symbols().to_vec(), results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LabelCodebook;
    use proptest::prelude::*;

    #[test]
    fn ten_into_five() {
        let folds = kfold_split(10, 5, 3).unwrap();
        assert!(folds.iter().all(|f| f.len() == 2));
        assert_eq!(folds, kfold_split(10, 5, 3).unwrap());
        assert_ne!(folds, kfold_split(10, 5, 4).unwrap());
        assert!(kfold_split(4, 5, 1).is_err());
        assert!(kfold_split(4, 1, 1).is_err());
    }

    proptest! {
        #[test]
        fn folds_partition_the_indices(n in 2usize..200, k in 2usize..12, seed in any::<u64>()) {
            prop_assume!(k <= n);
            let folds = kfold_split(n, k, seed).unwrap();
            prop_assert_eq!(folds.len(), k);
            let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            for f in &folds {
                prop_assert!(f.len() == n / k || f.len() == n.div_ceil(k));
            }
        }
    }

    fn separable(n_per: usize) -> FeatureMatrix {
        let cb = LabelCodebook::new(["a", "b", "c"]).unwrap();
        let mut rows = Vec::new();
        let mut targets = Vec::new();
        for i in 0..3 * n_per {
            let c = i % 3;
            let mut row = vec![0.0; 6];
            row[2 * c] = 1.0 + (i as f64) * 1e-3;
            row[2 * c + 1] = -1.0;
            rows.push(row);
            let mut t = vec![0.0; 3];
            t[c] = 1.0;
            targets.push(t);
        }
        FeatureMatrix {
            kind: FeatureKind::Statistical,
            rows,
            targets,
            codebook: cb,
            step_dim: 6,
            scaler: None,
        }
    }

    #[test]
    fn separable_data_cross_validates_perfectly() {
        let spec = ModelSpec {
            hidden: HiddenKind::Sigmoid,
            hidden_units: 8,
        };
        let cfg = TrainConfig {
            epochs: 60,
            ..TrainConfig::default()
        };
        let r = cross_validate(&spec, &separable(10), FusionStrategy::G3A3, 5, &cfg).unwrap();
        assert_eq!(r.folds.len(), 5);
        assert_eq!(r.confusion.total(), 30);
        assert_eq!((r.f1_mean, r.f1_std), (1.0, 0.0));
        let again = cross_validate(&spec, &separable(10), FusionStrategy::G3A3, 5, &cfg).unwrap();
        assert_eq!(r, again);
    }
}
