//! Digital Butterworth filters designed through the bilinear transform and
//! run as a cascade of second-order sections.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterKind {
    LowPass,
    HighPass,
}

/// One biquad `b0 + b1 z^-1 + b2 z^-2 / 1 + a1 z^-1 + a2 z^-2`. First-order
/// sections have `b2 = a2 = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Section {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Section {
    /// Complex frequency response at normalized angular frequency `w`
    /// (radians per sample), as `(re, im)`.
    fn response(&self, w: f64) -> (f64, f64) {
        let poly = |c0: f64, c1: f64, c2: f64| {
            let re = c0 + c1 * w.cos() + c2 * (2.0 * w).cos();
            let im = -c1 * w.sin() - c2 * (2.0 * w).sin();
            (re, im)
        };
        let (nr, ni) = poly(self.b[0], self.b[1], self.b[2]);
        let (dr, di) = poly(1.0, self.a[0], self.a[1]);
        let den = dr * dr + di * di;
        ((nr * dr + ni * di) / den, (ni * dr - nr * di) / den)
    }
}

/// A designed filter: its sections in cascade order.
#[derive(Clone, Debug, PartialEq)]
pub struct Butterworth {
    pub kind: FilterKind,
    pub sections: Vec<Section>,
}

impl Butterworth {
    pub fn design(kind: FilterKind, order: usize, cutoff: f64, sample_rate: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::invalid("Butterworth order must be at least 1"));
        }
        if !(sample_rate > 0.0) {
            return Err(Error::invalid(format!("sample rate {sample_rate} must be positive")));
        }
        let nyquist = sample_rate / 2.0;
        if !(cutoff > 0.0 && cutoff < nyquist) {
            return Err(Error::invalid(format!(
                "cutoff {cutoff} Hz outside (0, {nyquist}) Hz"
            )));
        }

        // Pre-warped analog cutoff for a sample period of 1/fs.
        let fs2 = 2.0 * sample_rate;
        let warped = fs2 * (PI * cutoff / sample_rate).tan();

        let mut sections = Vec::with_capacity(order.div_ceil(2));
        // Upper-half-plane prototype poles; each gives one conjugate pair.
        for k in 0..order / 2 {
            let theta = PI * (2 * k + 1 + order) as f64 / (2 * order) as f64;
            let (re, im) = (theta.cos(), theta.sin());
            let (pr, pi) = match kind {
                FilterKind::LowPass => (warped * re, warped * im),
                // s -> w/s maps p to w / p = w * conj(p) for unit |p|.
                FilterKind::HighPass => (warped * re, -warped * im),
            };
            let (zr, zi) = bilinear(pr, pi, fs2);
            let a1 = -2.0 * zr;
            let a2 = zr * zr + zi * zi;
            let b = match kind {
                FilterKind::LowPass => [1.0, 2.0, 1.0],
                FilterKind::HighPass => [1.0, -2.0, 1.0],
            };
            sections.push(normalized(kind, b, [a1, a2]));
        }
        if order % 2 == 1 {
            // Real pole at -w for either kind.
            let (zr, _) = bilinear(-warped, 0.0, fs2);
            let b = match kind {
                FilterKind::LowPass => [1.0, 1.0, 0.0],
                FilterKind::HighPass => [1.0, -1.0, 0.0],
            };
            sections.push(normalized(kind, b, [-zr, 0.0]));
        }
        Ok(Butterworth { kind, sections })
    }

    /// Magnitude response at `freq` Hz for the given sample rate.
    pub fn magnitude(&self, freq: f64, sample_rate: f64) -> f64 {
        let w = 2.0 * PI * freq / sample_rate;
        self.sections
            .iter()
            .map(|s| {
                let (re, im) = s.response(w);
                (re * re + im * im).sqrt()
            })
            .product()
    }

    /// Runs the cascade forward once from a zero state.
    pub fn apply(&self, input: &[f64]) -> Vec<f64> {
        let mut signal = input.to_vec();
        for s in &self.sections {
            // Transposed direct form II.
            let (mut s1, mut s2) = (0.0, 0.0);
            for v in signal.iter_mut() {
                let x = *v;
                let y = s.b[0] * x + s1;
                s1 = s.b[1] * x - s.a[0] * y + s2;
                s2 = s.b[2] * x - s.a[1] * y;
                *v = y;
            }
        }
        signal
    }
}

fn bilinear(re: f64, im: f64, fs2: f64) -> (f64, f64) {
    // z = (fs2 + s) / (fs2 - s)
    let (nr, ni) = (fs2 + re, im);
    let (dr, di) = (fs2 - re, -im);
    let den = dr * dr + di * di;
    ((nr * dr + ni * di) / den, (ni * dr - nr * di) / den)
}

/// Scales the numerator for unit gain at DC (low-pass) or Nyquist
/// (high-pass).
fn normalized(kind: FilterKind, b: [f64; 3], a: [f64; 2]) -> Section {
    let z: f64 = match kind {
        FilterKind::LowPass => 1.0,
        FilterKind::HighPass => -1.0,
    };
    let num = b[0] + b[1] / z + b[2] / (z * z);
    let den = 1.0 + a[0] / z + a[1] / (z * z);
    let g = den / num;
    Section {
        b: [b[0] * g, b[1] * g, b[2] * g],
        a,
    }
}

/// Causal Butterworth filter of `values`, preserving length.
pub fn butterworth(
    values: &[f64],
    kind: FilterKind,
    cutoff: f64,
    sample_rate: f64,
    order: usize,
) -> Result<Vec<f64>> {
    let filter = Butterworth::design(kind, order, cutoff, sample_rate)?;
    if values.len() <= 3 * order {
        return Err(Error::invalid(format!(
            "sequence of {} samples too short for an order-{order} filter",
            values.len()
        )));
    }
    Ok(filter.apply(values))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn analog_magnitude(kind: FilterKind, order: usize, f: f64, fc: f64, fs: f64) -> f64 {
        // Bilinear transform maps the analog response through tan warping.
        let ratio = (PI * f / fs).tan() / (PI * fc / fs).tan();
        let r = match kind {
            FilterKind::LowPass => ratio,
            FilterKind::HighPass => 1.0 / ratio,
        };
        1.0 / (1.0 + r.powi(2 * order as i32)).sqrt()
    }

    #[test]
    fn response_matches_warped_analog_prototype() {
        for kind in [FilterKind::LowPass, FilterKind::HighPass] {
            for order in 1..=5 {
                let fs = 100.0;
                let fc = 8.0;
                let f = Butterworth::design(kind, order, fc, fs).unwrap();
                for &freq in &[0.5, 2.0, 8.0, 15.0, 30.0, 45.0] {
                    let got = f.magnitude(freq, fs);
                    let want = analog_magnitude(kind, order, freq, fc, fs);
                    assert!(
                        (got - want).abs() < 1e-9,
                        "{kind:?} order {order} at {freq} Hz: {got} vs {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn cutoff_is_half_power() {
        let f = Butterworth::design(FilterKind::LowPass, 2, 8.0, 100.0).unwrap();
        assert!((f.magnitude(8.0, 100.0) - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn dc_gains() {
        let constant = vec![3.5; 400];
        let lp = butterworth(&constant, FilterKind::LowPass, 8.0, 100.0, 2).unwrap();
        assert!(lp[300..].iter().all(|v| (v - 3.5).abs() < 1e-6));
        let hp = butterworth(&constant, FilterKind::HighPass, 0.3, 16.0, 2).unwrap();
        assert!(hp[300..].iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn low_pass_attenuates_above_cutoff_more() {
        let fs = 100.0;
        let fc = 8.0;
        let rms_out = |freq: f64| {
            let x: Vec<f64> = (0..2000)
                .map(|i| (2.0 * PI * freq * i as f64 / fs).sin())
                .collect();
            let y = butterworth(&x, FilterKind::LowPass, fc, fs, 2).unwrap();
            let tail = &y[1000..];
            (tail.iter().map(|v| v * v).sum::<f64>() / tail.len() as f64).sqrt()
        };
        let low = rms_out(fc / 2.0);
        let high = rms_out(2.0 * fc);
        assert!(high < low, "{high} !< {low}");
        // Steady-state RMS of a unit sine is |H| / sqrt(2).
        let f = Butterworth::design(FilterKind::LowPass, 2, fc, fs).unwrap();
        assert!((high - f.magnitude(2.0 * fc, fs) / 2f64.sqrt()).abs() < 1e-3);
    }

    #[test]
    fn rejects_bad_parameters() {
        let x = vec![0.0; 100];
        assert!(butterworth(&x, FilterKind::LowPass, 0.0, 100.0, 2).is_err());
        assert!(butterworth(&x, FilterKind::LowPass, 50.0, 100.0, 2).is_err());
        assert!(butterworth(&x, FilterKind::LowPass, 8.0, 100.0, 0).is_err());
        assert!(butterworth(&x[..6], FilterKind::LowPass, 8.0, 100.0, 2).is_err());
    }
}
