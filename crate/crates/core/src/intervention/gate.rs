use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::math::{norm_cdf, softmax};

fn d_sigma() -> f64 {
    1.0
}

/// Effort cost `c` and CDF scale `sigma` of the probit gate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterventionParams {
    #[serde(default)]
    pub c: f64,
    #[serde(default = "d_sigma")]
    pub sigma: f64,
}

impl Default for InterventionParams {
    fn default() -> Self {
        Self { c: 0.0, sigma: 1.0 }
    }
}

impl InterventionParams {
    pub fn new(c: f64, sigma: f64) -> Result<Self> {
        let p = Self { c, sigma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(invalid(format!("sigma must be a finite positive number, got {}", self.sigma)));
        }
        if self.c.is_nan() {
            return Err(invalid("c must not be NaN"));
        }
        Ok(())
    }

    /// Gate argument (delta - c) / sigma.
    #[inline]
    pub fn z(&self, delta: f64) -> f64 {
        (delta - self.c) / self.sigma
    }
}

/// Φ((delta − c)/σ).
pub fn probit_gate(delta: f64, params: &InterventionParams) -> f64 {
    norm_cdf(params.z(delta))
}

pub fn boltzmann_policy(q: &[f64]) -> Vec<f64> {
    softmax(q)
}

pub fn boltzmann_policy_t(q: &[f64], temperature: f64) -> Vec<f64> {
    let s: Vec<f64> = q.iter().map(|v| v / temperature).collect();
    softmax(&s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gate_reference_points() {
        let p = InterventionParams::new(0.7, 2.5).unwrap();
        assert_eq!(probit_gate(0.7, &p), 0.5);
        assert!((probit_gate(0.7 + 1.96 * 2.5, &p) - 0.975).abs() < 1e-3);
        assert_eq!(probit_gate(-1e300, &p), 0.0);
        assert!(probit_gate(0.0, &p) < probit_gate(1e-3, &p));
    }

    #[test]
    fn sigma_must_be_positive() {
        assert!(InterventionParams::new(0.0, 0.0).is_err());
        assert!(InterventionParams::new(0.0, -1.0).is_err());
    }

    #[test]
    fn boltzmann_examples() {
        let u = boltzmann_policy(&[0.0, 0.0, 0.0]);
        assert!(u.iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-15));
        let q = [0.3, -1.2, 2.0];
        let a = boltzmann_policy(&q);
        let b = boltzmann_policy(&q.map(|v| v + 5.0));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        let e = std::f64::consts::E;
        let z = e + 1.0 + 1.0 / e;
        let p = boltzmann_policy(&[1.0, 0.0, -1.0]);
        for (x, y) in p.iter().zip([e / z, 1.0 / z, 1.0 / (e * z)]) {
            assert!((x - y).abs() < 1e-15);
        }
    }
}
