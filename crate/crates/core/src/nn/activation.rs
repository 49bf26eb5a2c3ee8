//! Elementwise activations and the softmax layer.

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn sigmoid_prime(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 - s)
}

pub fn tanh(x: f64) -> f64 {
    x.tanh()
}

pub fn tanh_prime(x: f64) -> f64 {
    let t = x.tanh();
    1.0 - t * t
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Subgradient 0 at the kink.
pub fn relu_prime(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Softmax with the maximum subtracted first.
pub fn softmax(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    softmax_in_place(&mut out);
    out
}

pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// `J[i][j] = y_i (delta_ij - y_j)` for softmax output `y`.
pub fn softmax_jacobian(y: &[f64]) -> Vec<Vec<f64>> {
    (0..y.len())
        .map(|i| {
            (0..y.len())
                .map(|j| y[i] * (if i == j { 1.0 } else { 0.0 } - y[j]))
                .collect()
        })
        .collect()
}

/// Pulls `dE/dy` back through the softmax: `J^T g`, written into `out`.
pub fn softmax_backward(y: &[f64], g: &[f64], out: &mut [f64]) {
    let dot: f64 = y.iter().zip(g).map(|(a, b)| a * b).sum();
    for ((o, &yi), &gi) in out.iter_mut().zip(y).zip(g) {
        *o = yi * (gi - dot);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_points() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(tanh(0.0), 0.0);
        assert_eq!(relu(-2.0), 0.0);
        assert_eq!(relu(3.0), 3.0);
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        assert_eq!(sigmoid_prime(0.0), 0.25);
        assert_eq!(tanh_prime(0.0), 1.0);
        assert_eq!((relu_prime(-1.0), relu_prime(2.0)), (0.0, 1.0));
    }

    #[test]
    fn softmax_survives_large_inputs() {
        let y = softmax(&[1000.0, 1000.0, -1000.0]);
        assert!((y[0] - 0.5).abs() < 1e-15 && y[2] == 0.0);
    }

    #[test]
    fn derivatives_match_differences() {
        let h = 1e-6;
        for &x in &[-3.0, -0.4, 0.0, 0.7, 2.5] {
            let ds = (sigmoid(x + h) - sigmoid(x - h)) / (2.0 * h);
            let dt = (tanh(x + h) - tanh(x - h)) / (2.0 * h);
            assert!((ds - sigmoid_prime(x)).abs() < 1e-9);
            assert!((dt - tanh_prime(x)).abs() < 1e-9);
        }
    }

    #[test]
    fn backward_equals_jacobian_product() {
        let y = softmax(&[0.3, -1.0, 2.0, 0.0]);
        let g = [0.5, -0.2, 0.1, 1.0];
        let j = softmax_jacobian(&y);
        let mut out = [0.0; 4];
        softmax_backward(&y, &g, &mut out);
        for (i, &o) in out.iter().enumerate() {
            let want: f64 = (0..4).map(|k| j[k][i] * g[k]).sum();
            assert!((o - want).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn softmax_is_a_distribution(v in prop::collection::vec(-50.0f64..50.0, 1..20)) {
            let y = softmax(&v);
            prop_assert!(y.iter().all(|&p| p >= 0.0));
            prop_assert!((y.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }
}
