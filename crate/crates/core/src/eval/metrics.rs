use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::LabelCodebook;

/// Counts indexed `[true label][predicted label]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let classes = counts.len();
        if counts.iter().any(|r| r.len() != classes) {
            return Err(Error::invalid("confusion matrix must be square"));
        }
        Ok(ConfusionMatrix { classes, counts })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn add(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.classes).map(|i| self.counts[i][i]).sum()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::DimensionMismatch {
                expected: self.classes,
                actual: other.classes,
            });
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    /// Pooled `(TP, FP, FN)` over all classes.
    pub fn pooled(&self) -> (u64, u64, u64) {
        let mut tp = 0;
        let mut fp = 0;
        let mut fn_ = 0;
        for c in 0..self.classes {
            let col: u64 = (0..self.classes).map(|r| self.counts[r][c]).sum();
            let row: u64 = self.counts[c].iter().sum();
            tp += self.counts[c][c];
            fp += col - self.counts[c][c];
            fn_ += row - self.counts[c][c];
        }
        (tp, fp, fn_)
    }

    /// Fixed-width table with true labels down the side.
    pub fn to_table(&self, codebook: &LabelCodebook) -> String {
        let width = self
            .counts
            .iter()
            .flatten()
            .map(|c| c.to_string().len())
            .chain(codebook.symbols().iter().map(String::len))
            .max()
            .unwrap_or(1)
            .max(4);
        let mut s = format!("{:>width$} |", "t\\p");
        for sym in codebook.symbols() {
            let _ = write!(s, " {sym:>width$}");
        }
        s.push('\n');
        s.push_str(&"-".repeat(s.len() - 1));
        s.push('\n');
        for (sym, row) in codebook.symbols().iter().zip(&self.counts) {
            let _ = write!(s, "{sym:>width$} |");
            for c in row {
                let _ = write!(s, " {c:>width$}");
            }
            s.push('\n');
        }
        s
    }
}

/// Micro-averaged F1 from pooled counts; 0 when precision and recall are
/// both 0.
pub fn f1_score(matrix: &ConfusionMatrix) -> Result<f64> {
    if matrix.total() == 0 {
        return Err(Error::invalid("F1 of an empty confusion matrix"));
    }
    let (tp, fp, fn_) = matrix.pooled();
    let p = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
    let r = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
    Ok(if p == r {
        // Harmonic mean of equal values; avoids rounding in 2pr/(p+r).
        p
    } else if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    })
}

/// `1 - S / ln n` for the entropy `S` (natural log) of an output
/// distribution: 1 for a one-hot vector, 0 for the uniform one.
pub fn reliability(distribution: &[f64]) -> Result<f64> {
    let n = distribution.len();
    if n < 2 {
        return Err(Error::invalid("reliability needs two or more outputs"));
    }
    if distribution.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::invalid("distribution entries must be finite and non-negative"));
    }
    let sum: f64 = distribution.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("distribution sums to {sum}")));
    }
    // Equal entries are exactly uniform; summing n rounded terms would
    // miss ln n by an ulp or two.
    if distribution.iter().all(|&p| p == distribution[0]) {
        return Ok(0.0);
    }
    let entropy: f64 = -distribution
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>();
    Ok((1.0 - entropy / (n as f64).ln()).clamp(0.0, 1.0))
}

/// Arithmetic mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_classifier() {
        let mut m = ConfusionMatrix::new(3);
        for c in 0..3 {
            m.add(c, c);
            m.add(c, c);
        }
        assert_eq!(f1_score(&m).unwrap(), 1.0);
        assert!(f1_score(&ConfusionMatrix::new(3)).is_err());
    }

    #[test]
    fn binary_collapse() {
        // TP=8, FP=2, FN=2.
        let m = ConfusionMatrix::from_counts(vec![vec![4, 1], vec![1, 4]]).unwrap();
        assert_eq!(m.pooled(), (8, 2, 2));
        assert!((f1_score(&m).unwrap() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn uniform_guessing_scores_one_in_twelve() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut m = ConfusionMatrix::new(12);
        for _ in 0..100_000 {
            m.add(rng.gen_range(0..12), rng.gen_range(0..12));
        }
        assert!((f1_score(&m).unwrap() - 1.0 / 12.0).abs() < 0.02);
    }

    #[test]
    fn reliability_reference_points() {
        assert_eq!(reliability(&[1.0 / 12.0; 12]).unwrap(), 0.0);
        assert_eq!(reliability(&[0.2; 5]).unwrap(), 0.0);
        assert_eq!(reliability(&[0.0, 1.0, 0.0]).unwrap(), 1.0);
        let s = -(0.9f64 * 0.9f64.ln() + 0.1 * 0.1f64.ln());
        let r = reliability(&[0.9, 0.1]).unwrap();
        assert!((r - (1.0 - s / 2f64.ln())).abs() < 1e-15);
        assert!((r - 0.531).abs() < 5e-4);
        assert!(reliability(&[0.5, 0.6]).is_err());
        assert!(reliability(&[1.0]).is_err());
        assert!(reliability(&[1.5, -0.5]).is_err());
    }

    #[test]
    fn table_lists_every_label() {
        let cb = LabelCodebook::new(["1", "#"]).unwrap();
        let m = ConfusionMatrix::from_counts(vec![vec![10, 2], vec![0, 7]]).unwrap();
        let t = m.to_table(&cb);
        assert_eq!(t.lines().count(), 4);
        assert!(t.lines().nth(3).unwrap().trim_start().starts_with('#'));
    }

    #[test]
    fn mean_std_is_population_form() {
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 1.0));
    }

    proptest! {
        #[test]
        fn micro_f1_is_accuracy(cells in prop::collection::vec(0u64..20, 16)) {
            let m = ConfusionMatrix::from_counts(cells.chunks(4).map(<[u64]>::to_vec).collect()).unwrap();
            prop_assume!(m.total() > 0);
            let f1 = f1_score(&m).unwrap();
            let acc = m.correct() as f64 / m.total() as f64;
            prop_assert_eq!(f1, acc);
        }

        #[test]
        fn reliability_is_bounded_and_falls_with_entropy(raw in prop::collection::vec(0.0f64..1.0, 2..20), t in 0.01f64..0.99) {
            let sum: f64 = raw.iter().sum();
            prop_assume!(sum > 0.0);
            let p: Vec<f64> = raw.iter().map(|v| v / sum).collect();
            let r = reliability(&p).unwrap();
            prop_assert!((0.0..=1.0).contains(&r));
            // Mixing towards uniform raises entropy.
            let n = p.len() as f64;
            let q: Vec<f64> = p.iter().map(|v| (1.0 - t) * v + t / n).collect();
            prop_assert!(reliability(&q).unwrap() <= r + 1e-12);
        }
    }
}
