//! Rprop- (sign-based steps, no weight backtracking): a step size grows
//! while the gradient keeps its sign and shrinks when it flips, and every
//! nonzero gradient moves its weight by the current step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RpropConfig {
    pub eta_plus: f64,
    pub eta_minus: f64,
    pub delta0: f64,
    pub delta_max: f64,
    pub delta_min: f64,
}

impl Default for RpropConfig {
    fn default() -> Self {
        RpropConfig {
            eta_plus: 1.2,
            eta_minus: 0.5,
            delta0: 0.1,
            delta_max: 50.0,
            delta_min: 1e-6,
        }
    }
}

impl RpropConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.eta_plus > 1.0
            && self.eta_minus > 0.0
            && self.eta_minus < 1.0
            && self.delta_min > 0.0
            && self.delta_min <= self.delta0
            && self.delta0 <= self.delta_max
            && self.delta_max.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("inconsistent Rprop parameters {self:?}")))
        }
    }
}

/// Per-weight step sizes and the previous gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Rprop {
    config: RpropConfig,
    delta: Vec<f64>,
    previous: Vec<f64>,
}

impl Rprop {
    pub fn new(weights: usize, config: RpropConfig) -> Self {
        Rprop {
            config,
            delta: vec![config.delta0; weights],
            previous: vec![0.0; weights],
        }
    }

    pub fn deltas(&self) -> &[f64] {
        &self.delta
    }

    /// Applies one update to `weights` for gradient `grad`.
    pub fn step(&mut self, weights: &mut [f64], grad: &[f64]) -> Result<()> {
        if weights.len() != self.delta.len() || grad.len() != self.delta.len() {
            return Err(Error::DimensionMismatch {
                expected: self.delta.len(),
                actual: if weights.len() != self.delta.len() { weights.len() } else { grad.len() },
            });
        }
        let c = self.config;
        for (((w, &g), d), p) in weights
            .iter_mut()
            .zip(grad)
            .zip(self.delta.iter_mut())
            .zip(self.previous.iter_mut())
        {
            let s = g * *p;
            if s > 0.0 {
                *d = (*d * c.eta_plus).min(c.delta_max);
            } else if s < 0.0 {
                *d = (*d * c.eta_minus).max(c.delta_min);
            }
            *p = g;
            if g > 0.0 {
                *w -= *d;
            } else if g < 0.0 {
                *w += *d;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn same_sign_grows_step() {
        let mut r = Rprop::new(1, RpropConfig::default());
        let mut w = [0.0];
        r.step(&mut w, &[2.0]).unwrap();
        assert_eq!(r.deltas()[0], 0.1);
        assert_eq!(w[0], -0.1);
        r.step(&mut w, &[0.5]).unwrap();
        assert_eq!(r.deltas()[0], 0.1 * 1.2);
        assert_eq!(w[0], -0.1 - 0.1 * 1.2);
    }

    #[test]
    fn sign_flip_shrinks_without_backtracking() {
        let mut r = Rprop::new(1, RpropConfig::default());
        let mut w = [1.0];
        r.step(&mut w, &[1.0]).unwrap();
        r.step(&mut w, &[-1.0]).unwrap();
        assert_eq!(r.deltas()[0], 0.05);
        assert_eq!(w[0], 1.0 - 0.1 + 0.05);
        r.step(&mut w, &[1.0]).unwrap();
        assert_eq!(r.deltas()[0], 0.025);
        assert_eq!(w[0], 1.0 - 0.1 + 0.05 - 0.025);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut r = Rprop::new(2, RpropConfig::default());
        let mut w = [0.3, -0.2];
        r.step(&mut w, &[1.0, -1.0]).unwrap();
        let before = (w, r.deltas().to_vec());
        r.step(&mut w, &[0.0, 0.0]).unwrap();
        assert_eq!((w, r.deltas().to_vec()), before);
        assert!(r.step(&mut w, &[0.0]).is_err());
    }

    proptest! {
        #[test]
        fn steps_stay_within_bounds(grads in prop::collection::vec(prop::sample::select(vec![-1.0, 0.0, 1.0, 3.0]), 1..400)) {
            let cfg = RpropConfig::default();
            let mut r = Rprop::new(1, cfg);
            let mut w = [0.0];
            for g in grads {
                r.step(&mut w, &[g]).unwrap();
                prop_assert!(r.deltas()[0] <= cfg.delta_max && r.deltas()[0] >= cfg.delta_min);
            }
        }
    }
}
