//! Classifier inputs built from segments: 48-value statistical vectors,
//! flattened frame windows, and one-hot targets.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LabelCodebook;
use crate::segmentation::{detect_peaks, papr, rms, Segment};

/// Number of statistics per axis.
pub const STATS_PER_AXIS: usize = 8;
/// Gyroscope and accelerometer, three axes each.
pub const STATISTICAL_DIM: usize = 6 * STATS_PER_AXIS;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Statistical,
    Segment,
}

impl FeatureKind {
    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Statistical => "statistical",
            FeatureKind::Segment => "segment",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "statistical" => Ok(FeatureKind::Statistical),
            "segment" => Ok(FeatureKind::Segment),
            other => Err(Error::invalid(format!("unknown feature kind {other:?}"))),
        }
    }
}

/// `<min, max, RMS, peak count, crest factor, skewness, kurtosis, variance>`
/// of one axis window. Moments are population moments; a zero-variance
/// window has skewness and kurtosis 0.
pub fn statistical_vector(values: &[f64], peak_threshold: f64) -> Result<[f64; STATS_PER_AXIS]> {
    if values.len() < 2 {
        return Err(Error::invalid("statistics need at least two values"));
    }
    let n = values.len() as f64;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let root = rms(values);
    let peaks = papr(values)
        .map(|r| detect_peaks(&r, peak_threshold).len() as f64)
        .unwrap_or(0.0);
    let crest = if root > 0.0 {
        values.iter().map(|v| v.abs()).fold(0.0, f64::max) / root
    } else {
        0.0
    };

    let (variance, skewness, kurtosis) = if values.iter().all(|&v| v == values[0]) {
        (0.0, 0.0, 0.0)
    } else {
        let mean = values.iter().sum::<f64>() / n;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for &v in values {
            let d = v - mean;
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
        }
        m2 /= n;
        m3 /= n;
        m4 /= n;
        if m2 > 0.0 {
            (m2, m3 / m2.powf(1.5), m4 / (m2 * m2))
        } else {
            (0.0, 0.0, 0.0)
        }
    };
    Ok([min, max, root, peaks, crest, skewness, kurtosis, variance])
}

/// Per-column affine map onto `[-1, 1]`, fitted on one set of rows and
/// reusable on others.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl ColumnScaler {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::invalid("cannot fit a scaler on zero rows"))?;
        let mut min = vec![f64::INFINITY; dim];
        let mut max = vec![f64::NEG_INFINITY; dim];
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        Ok(ColumnScaler { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn transform(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: row.len(),
            });
        }
        Ok(row
            .iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&v, (&lo, &hi))| {
                if hi > lo {
                    2.0 * (v - lo) / (hi - lo) - 1.0
                } else {
                    0.0
                }
            })
            .collect())
    }
}

/// One-hot vector of `symbol`'s codebook index.
pub fn encode_label(symbol: &str, codebook: &LabelCodebook) -> Result<Vec<f64>> {
    let i = codebook.index_of(symbol)?;
    let mut v = vec![0.0; codebook.len()];
    v[i] = 1.0;
    Ok(v)
}

/// Symbol of the largest entry (first one on ties).
pub fn decode_label<'a>(vector: &[f64], codebook: &'a LabelCodebook) -> Result<&'a str> {
    if vector.len() != codebook.len() {
        return Err(Error::DimensionMismatch {
            expected: codebook.len(),
            actual: vector.len(),
        });
    }
    Ok(codebook.symbol(argmax(vector)).expect("index within codebook"))
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Rows, aligned one-hot targets and the label codebook.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub kind: FeatureKind,
    pub rows: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    pub codebook: LabelCodebook,
    /// Values per time step: the frame dimension for segment rows, the row
    /// length for statistical rows.
    pub step_dim: usize,
    /// Normalization applied to the rows, if any.
    pub scaler: Option<ColumnScaler>,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row_dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn label_index(&self, row: usize) -> usize {
        argmax(&self.targets[row])
    }

    /// A segment row as its sequence of frames.
    pub fn steps(&self, row: usize) -> std::slice::ChunksExact<'_, f64> {
        self.rows[row].chunks_exact(self.step_dim)
    }

    pub fn subset(&self, indices: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            kind: self.kind,
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            targets: indices.iter().map(|&i| self.targets[i].clone()).collect(),
            codebook: self.codebook.clone(),
            step_dim: self.step_dim,
            scaler: self.scaler.clone(),
        }
    }

    /// Appends the rows of `other`, which must share kind, codebook and
    /// shape.
    pub fn extend(&mut self, other: FeatureMatrix) -> Result<()> {
        if other.kind != self.kind || other.codebook != self.codebook || other.step_dim != self.step_dim {
            return Err(Error::Incompatible("feature matrices differ in kind, codebook or shape".into()));
        }
        if !self.is_empty() && !other.is_empty() && other.row_dim() != self.row_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.row_dim(),
                actual: other.row_dim(),
            });
        }
        self.rows.extend(other.rows);
        self.targets.extend(other.targets);
        Ok(())
    }

    /// Fits a column scaler on these rows and applies it.
    pub fn normalized(mut self) -> Result<FeatureMatrix> {
        let scaler = ColumnScaler::fit(&self.rows)?;
        self.rows = self
            .rows
            .iter()
            .map(|r| scaler.transform(r))
            .collect::<Result<_>>()?;
        self.scaler = Some(scaler);
        Ok(self)
    }

    /// Applies an existing scaler (fitted elsewhere) to these rows.
    pub fn scaled_with(mut self, scaler: &ColumnScaler) -> Result<FeatureMatrix> {
        self.rows = self
            .rows
            .iter()
            .map(|r| scaler.transform(r))
            .collect::<Result<_>>()?;
        self.scaler = Some(scaler.clone());
        Ok(self)
    }
}

fn targets_for(segments: &[Segment], codebook: &LabelCodebook) -> Result<Vec<Vec<f64>>> {
    segments
        .iter()
        .map(|s| {
            let label = s
                .label
                .as_deref()
                .ok_or_else(|| Error::invalid(format!("unlabelled segment at t={}", s.center_t)))?;
            encode_label(label, codebook)
        })
        .collect()
}

/// Statistics of the six sensor axes of one segment. The segment must use
/// the `<gx,gy,gz,ax,ay,az>` frame layout.
pub fn statistical_row(segment: &Segment, peak_threshold: f64) -> Result<Vec<f64>> {
    if segment.dim != 6 {
        return Err(Error::Incompatible(format!(
            "statistical features need six-axis frames, got {} per frame",
            segment.dim
        )));
    }
    let mut row = Vec::with_capacity(STATISTICAL_DIM);
    for axis in 0..6 {
        row.extend_from_slice(&statistical_vector(&segment.column(axis), peak_threshold)?);
    }
    Ok(row)
}

/// Un-normalized statistical rows for labelled segments.
pub fn raw_statistical_features(
    segments: &[Segment],
    codebook: &LabelCodebook,
    peak_threshold: f64,
) -> Result<FeatureMatrix> {
    let targets = targets_for(segments, codebook)?;
    let rows = segments
        .iter()
        .map(|s| statistical_row(s, peak_threshold))
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureMatrix {
        kind: FeatureKind::Statistical,
        rows,
        targets,
        codebook: codebook.clone(),
        step_dim: STATISTICAL_DIM,
        scaler: None,
    })
}

/// Statistical rows normalized per column over these segments; the fitted
/// map is kept in [`FeatureMatrix::scaler`].
pub fn build_statistical_features(
    segments: &[Segment],
    codebook: &LabelCodebook,
    peak_threshold: f64,
) -> Result<FeatureMatrix> {
    raw_statistical_features(segments, codebook, peak_threshold)?.normalized()
}

/// Frames flattened in time-major order.
pub fn build_segment_features(segments: &[Segment], codebook: &LabelCodebook) -> Result<FeatureMatrix> {
    let targets = targets_for(segments, codebook)?;
    let (len, dim) = segments.first().map_or((0, 1), |s| (s.frames.len(), s.dim));
    if let Some(s) = segments.iter().find(|s| s.frames.len() != len || s.dim != dim) {
        return Err(Error::invalid(format!(
            "segment at t={} has {} values, expected {len}",
            s.center_t,
            s.frames.len()
        )));
    }
    Ok(FeatureMatrix {
        kind: FeatureKind::Segment,
        rows: segments.iter().map(|s| s.frames.clone()).collect(),
        targets,
        codebook: codebook.clone(),
        step_dim: dim,
        scaler: None,
    })
}
