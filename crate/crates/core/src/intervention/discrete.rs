use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::math::norm_cdf;

use super::gate::InterventionParams;

/// ln(1e-12): floor applied to log-probabilities of zero-mass actions.
pub const LOG_FLOOR: f64 = -27.631_021_115_928_547;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    ClosedForm,
    MonteCarlo { samples: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct InterventionEstimate {
    pub p_intervene: f64,
    /// Discrete: per-action joint probabilities P(a_h = a, ν = 1).
    /// Continuous: empty.
    pub joint: Vec<f64>,
    /// Discrete: per-action gate arguments. Continuous: per-sample Δ_j.
    pub terms: Vec<f64>,
    pub estimator: Estimator,
    /// Some π_h entry was zero and its log hit the floor.
    pub floored: bool,
}

fn check_dist(name: &str, p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(invalid(format!("{name} is empty")));
    }
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(invalid(format!("{name} has negative or non-finite entries")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-6 {
        return Err(invalid(format!("{name} sums to {s}, not 1")));
    }
    Ok(())
}

/// Δ(a) = ln π_h(a) − Σ_a' π̂(a') ln π_h(a'), with the log floor flagged.
pub fn action_deltas(pi_h: &[f64], pi_hat: &[f64]) -> (Vec<f64>, bool) {
    let mut floored = false;
    let lp: Vec<f64> = pi_h
        .iter()
        .map(|p| {
            let l = p.ln();
            if l < LOG_FLOOR {
                floored = true;
                LOG_FLOOR
            } else {
                l
            }
        })
        .collect();
    let expect: f64 = pi_hat.iter().zip(&lp).map(|(q, l)| q * l).sum();
    (lp.into_iter().map(|l| l - expect).collect(), floored)
}

/// p(ν=1|s) = Σ_a π_h(a) Φ((Δ(a) − c)/σ), exact.
pub fn intervene_prob_discrete(
    pi_h: &[f64],
    pi_hat: &[f64],
    params: &InterventionParams,
) -> Result<InterventionEstimate> {
    check_dist("pi_h", pi_h)?;
    check_dist("pi_hat", pi_hat)?;
    if pi_h.len() != pi_hat.len() {
        return Err(invalid("pi_h and pi_hat have different lengths"));
    }
    params.validate()?;
    let (deltas, floored) = action_deltas(pi_h, pi_hat);
    let terms: Vec<f64> = deltas.iter().map(|d| params.z(*d)).collect();
    let joint: Vec<f64> = pi_h.iter().zip(&terms).map(|(p, z)| p * norm_cdf(*z)).collect();
    Ok(InterventionEstimate {
        p_intervene: joint.iter().sum::<f64>().min(1.0),
        joint,
        terms,
        estimator: Estimator::ClosedForm,
        floored,
    })
}

/// The same probability written directly in Q: π_h = softmax(q) and the gate
/// reads Q(a) − E_π̂[Q].
pub fn q_form_intervene_prob(q: &[f64], pi_hat: &[f64], params: &InterventionParams) -> Result<f64> {
    check_dist("pi_hat", pi_hat)?;
    if q.len() != pi_hat.len() || q.iter().any(|v| !v.is_finite()) {
        return Err(invalid("q must be finite and match pi_hat in length"));
    }
    params.validate()?;
    let pi_h = crate::math::softmax(q);
    let eq: f64 = pi_hat.iter().zip(q).map(|(w, v)| w * v).sum();
    Ok(pi_h
        .iter()
        .zip(q)
        .map(|(p, v)| p * norm_cdf(params.z(v - eq)))
        .sum())
}

/// |A|+1 classes: P(a_h = a, ν = 1) for each action, then P(ν = 0).
pub fn joint_action_distribution(
    pi_h: &[f64],
    pi_hat: &[f64],
    params: &InterventionParams,
) -> Result<Vec<f64>> {
    let est = intervene_prob_discrete(pi_h, pi_hat, params)?;
    // Σ π(a)Φ(−z_a) keeps full precision when p(ν=1) is close to 1
    let none: f64 = pi_h
        .iter()
        .zip(&est.terms)
        .map(|(p, z)| p * norm_cdf(-z))
        .sum();
    let mut out = est.joint;
    out.push(none);
    Ok(out)
}
