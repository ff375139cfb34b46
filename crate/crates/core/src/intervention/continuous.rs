use rand_distr::{Distribution, StandardNormal};

use crate::diffnet::DistOutput;
use crate::error::{invalid, Error, Result};
use crate::math::{norm_cdf, norm_pdf};
use crate::rng::Rng;

use super::discrete::{Estimator, InterventionEstimate};
use super::gate::InterventionParams;

/// Reparameterized estimate of p(ν=1|s) for gaussian π_θ (human role) and
/// π̂ (mental model), keeping what the backward pass needs.
///
/// With a_j = μ + √v ⊙ ε_j the log-ratio is
/// Δ_j = ½ Σ_d [(v̂_d + (μ̂_d − μ_d)²)/v_d − ε_jd²]; the 2πv terms cancel.
#[derive(Clone, Debug)]
pub struct ContinuousGate {
    /// mean_j Φ(z_j)
    pub p: f64,
    /// mean_j Φ(−z_j), i.e. 1 − p without cancellation
    pub q: f64,
    pub deltas: Vec<f64>,
    pub z: Vec<f64>,
    sigma: f64,
    mu: Vec<f64>,
    v: Vec<f64>,
    mu_hat: Vec<f64>,
    v_hat: Vec<f64>,
}

/// Gradients with respect to both gaussians' parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussPairGrad {
    pub d_mu: Vec<f64>,
    pub d_v: Vec<f64>,
    pub d_mu_hat: Vec<f64>,
    pub d_v_hat: Vec<f64>,
}

fn gauss(d: &DistOutput, name: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    match d {
        DistOutput::Gaussian { mean, var } => Ok((mean.clone(), var.clone())),
        _ => Err(invalid(format!("{name} must be gaussian"))),
    }
}

/// Draws an M × d bank of standard normals.
pub fn noise_bank(m: usize, d: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    (0..m)
        .map(|_| (0..d).map(|_| StandardNormal.sample(rng)).collect())
        .collect()
}

/// Estimates p(ν=1|s) with the given noise bank (one row per sample).
pub fn intervene_prob_continuous(
    pi_theta: &DistOutput,
    pi_hat: &DistOutput,
    params: &InterventionParams,
    noise: &[Vec<f64>],
) -> Result<ContinuousGate> {
    params.validate()?;
    if noise.is_empty() {
        return Err(invalid("continuous estimator needs M >= 1 samples"));
    }
    let (mu, v) = gauss(pi_theta, "pi_theta")?;
    let (mu_hat, v_hat) = gauss(pi_hat, "pi_hat")?;
    if mu_hat.len() != mu.len() {
        return Err(Error::Dim {
            what: "mental-model gaussian",
            expected: mu.len(),
            got: mu_hat.len(),
        });
    }
    if v.iter().chain(&v_hat).any(|x| !(*x > 0.0)) {
        return Err(invalid("gaussian variances must be positive"));
    }
    let k: f64 = 0.5
        * (0..mu.len())
            .map(|d| (v_hat[d] + (mu_hat[d] - mu[d]).powi(2)) / v[d])
            .sum::<f64>();
    let m = noise.len() as f64;
    let mut deltas = Vec::with_capacity(noise.len());
    let mut z = Vec::with_capacity(noise.len());
    let (mut p, mut q) = (0.0, 0.0);
    for eps in noise {
        if eps.len() != mu.len() {
            return Err(Error::Dim {
                what: "noise sample",
                expected: mu.len(),
                got: eps.len(),
            });
        }
        let delta = k - 0.5 * eps.iter().map(|e| e * e).sum::<f64>();
        let zj = params.z(delta);
        p += norm_cdf(zj);
        q += norm_cdf(-zj);
        deltas.push(delta);
        z.push(zj);
    }
    Ok(ContinuousGate {
        p: p / m,
        q: q / m,
        deltas,
        z,
        sigma: params.sigma,
        mu,
        v,
        mu_hat,
        v_hat,
    })
}

impl ContinuousGate {
    pub fn estimate(&self) -> InterventionEstimate {
        InterventionEstimate {
            p_intervene: self.p,
            joint: Vec::new(),
            terms: self.deltas.clone(),
            estimator: Estimator::MonteCarlo {
                samples: self.deltas.len(),
            },
            floored: false,
        }
    }

    /// Back-propagates upstream adjoints on `p` and on `q` (= 1 − p).
    pub fn backward(&self, d_p: f64, d_q: f64) -> GaussPairGrad {
        let m = self.z.len() as f64;
        // every Δ_j depends on the parameters through the same term
        let d_delta: f64 = self
            .z
            .iter()
            .map(|zj| (d_p - d_q) * norm_pdf(*zj) / (self.sigma * m))
            .sum();
        let n = self.mu.len();
        let mut g = GaussPairGrad {
            d_mu: vec![0.0; n],
            d_v: vec![0.0; n],
            d_mu_hat: vec![0.0; n],
            d_v_hat: vec![0.0; n],
        };
        for d in 0..n {
            let diff = self.mu_hat[d] - self.mu[d];
            let v = self.v[d];
            g.d_mu[d] = -d_delta * diff / v;
            g.d_mu_hat[d] = d_delta * diff / v;
            g.d_v[d] = -0.5 * d_delta * (self.v_hat[d] + diff * diff) / (v * v);
            g.d_v_hat[d] = 0.5 * d_delta / v;
        }
        g
    }
}
