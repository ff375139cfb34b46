//! Standard normal helpers and small numeric utilities.

use std::f64::consts::{PI, SQRT_2};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

// Below this the asymptotic series is more accurate than ln(erfc).
const TAIL: f64 = -35.0;

fn tail_series(x: f64) -> f64 {
    let r = 1.0 / (x * x);
    1.0 - r + 3.0 * r * r - 15.0 * r * r * r + 105.0 * r * r * r * r
}

pub fn ln_norm_cdf(x: f64) -> f64 {
    if x > TAIL {
        norm_cdf(x).ln()
    } else {
        -0.5 * x * x - LN_SQRT_2PI - (-x).ln() + tail_series(x).ln()
    }
}

/// d/dx ln Φ(x) = φ(x)/Φ(x).
pub fn inv_mills(x: f64) -> f64 {
    if x > TAIL {
        norm_pdf(x) / norm_cdf(x)
    } else {
        -x / tail_series(x)
    }
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn log_softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    x.iter().map(|v| v - lse).collect()
}

/// Index of the largest entry, ties to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

pub fn ln_2pi() -> f64 {
    (2.0 * PI).ln()
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the mean (sample std / sqrt(n)); zero for n < 2.
pub fn std_err(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_reference_points() {
        assert_eq!(norm_cdf(0.0), 0.5);
        assert!((norm_cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-12);
        assert!((norm_cdf(-3.0) - 0.001_349_898_031_630_094_6).abs() < 1e-15);
        assert_eq!(norm_cdf(f64::NEG_INFINITY), 0.0);
    }

    #[test]
    fn log_cdf_is_continuous_across_tail_switch() {
        let a = ln_norm_cdf(TAIL + 1e-9);
        let b = ln_norm_cdf(TAIL - 1e-9);
        assert!((a - b).abs() / a.abs() < 1e-9, "{a} vs {b}");
        let a = inv_mills(TAIL + 1e-9);
        let b = inv_mills(TAIL - 1e-9);
        assert!((a - b).abs() / a.abs() < 1e-9);
        assert!(ln_norm_cdf(-200.0).is_finite());
    }

    #[test]
    fn softmax_shift_invariant() {
        let q = [0.3, -1.2, 2.0];
        let a = softmax(&q);
        let b = softmax(&[5.3, 3.8, 7.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
