use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::datastore::TransitionRecord;
use crate::diffnet::{DistAdjoint, DistOutput, Mlp};
use crate::error::{invalid, Error, Result};
use crate::intervention::{intervene_prob_continuous, InterventionParams};
use crate::math::{inv_mills, ln_norm_cdf, norm_cdf, norm_pdf};

fn d_lambda() -> f64 {
    0.5
}
fn d_m() -> usize {
    16
}

/// What the discrete loss uses as the label on ν=0 steps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// The extra no-intervention class.
    #[default]
    NoIntervention,
    /// The robot's own action (ablation).
    RobotAction,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    #[serde(default = "d_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub params: InterventionParams,
    /// Reparameterized samples per state for the continuous gate.
    #[serde(default = "d_m")]
    pub mc_samples: usize,
    #[serde(default)]
    pub label: LabelMode,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: d_lambda(),
            params: InterventionParams::default(),
            mc_samples: d_m(),
            label: LabelMode::default(),
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(invalid("lambda must be in [0, 1]"));
        }
        if self.mc_samples == 0 {
            return Err(invalid("mc_samples must be >= 1"));
        }
        self.params.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub grad_policy: Vec<f64>,
    pub grad_mental: Vec<f64>,
    /// The batch held no ν=1 record, so J2 contributed nothing.
    pub j2_empty: bool,
}

pub(crate) const CLAMP: f64 = 1e-7;

fn check_batch(batch: &[&TransitionRecord]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    Ok(())
}

/// Class probabilities P(a, ν=1) for each action, then P(ν=0), for π_θ in the
/// human role and π̂ in the mental-model role; computed from log-probs.
pub fn predicted_classes(log_pi: &[f64], pi_hat: &[f64], params: &InterventionParams) -> Vec<f64> {
    let e: f64 = pi_hat.iter().zip(log_pi).map(|(q, l)| q * l).sum();
    let mut out: Vec<f64> = log_pi
        .iter()
        .map(|l| l.exp() * norm_cdf(params.z(l - e)))
        .collect();
    out.push(
        log_pi
            .iter()
            .map(|l| l.exp() * norm_cdf(-params.z(l - e)))
            .sum(),
    );
    out
}

/// −ln P(label) for one state and its adjoints w.r.t. log π_θ and π̂.
/// `label = None` is the no-intervention class.
pub fn class_nll(
    log_pi: &[f64],
    pi_hat: &[f64],
    params: &InterventionParams,
    label: Option<usize>,
) -> (f64, Vec<f64>, Vec<f64>) {
    let n = log_pi.len();
    let s = params.sigma;
    let e: f64 = pi_hat.iter().zip(log_pi).map(|(q, l)| q * l).sum();
    let z: Vec<f64> = log_pi.iter().map(|l| params.z(l - e)).collect();
    match label {
        Some(a) => {
            let value = -log_pi[a] - ln_norm_cdf(z[a]);
            let r = inv_mills(z[a]) / s;
            let d_lp = (0..n)
                .map(|b| {
                    let d = if b == a { 1.0 } else { 0.0 };
                    -d - r * (d - pi_hat[b])
                })
                .collect();
            let d_hat = log_pi.iter().map(|l| r * l).collect();
            (value, d_lp, d_hat)
        }
        None => {
            let pi: Vec<f64> = log_pi.iter().map(|l| l.exp()).collect();
            let p0: f64 = pi.iter().zip(&z).map(|(p, zi)| p * norm_cdf(-zi)).sum();
            let big_s: f64 = pi.iter().zip(&z).map(|(p, zi)| p * norm_pdf(*zi)).sum::<f64>() / s;
            let d_lp = (0..n)
                .map(|b| {
                    let dp0 = pi[b] * norm_cdf(-z[b]) - pi[b] * norm_pdf(z[b]) / s + pi_hat[b] * big_s;
                    -dp0 / p0
                })
                .collect();
            let d_hat = log_pi.iter().map(|l| -l * big_s / p0).collect();
            (-p0.ln(), d_lp, d_hat)
        }
    }
}

fn categorical(d: &DistOutput) -> Result<(&[f64], &[f64])> {
    match d {
        DistOutput::Categorical { probs, log_probs } => Ok((probs, log_probs)),
        _ => Err(invalid("discrete loss needs categorical heads")),
    }
}

fn gaussian(d: &DistOutput) -> Result<(&[f64], &[f64])> {
    match d {
        DistOutput::Gaussian { mean, var } => Ok((mean, var)),
        _ => Err(invalid("continuous loss needs gaussian heads")),
    }
}

fn discrete_label(r: &TransitionRecord, mode: LabelMode, index: usize) -> Result<Option<usize>> {
    let a = match (r.nu, &r.a_h, mode) {
        (1, Some(a), _) => a,
        (0, None, LabelMode::NoIntervention) => return Ok(None),
        (0, None, LabelMode::RobotAction) => &r.a_r,
        _ => {
            return Err(Error::Record {
                index,
                msg: "nu and a_h disagree".into(),
            })
        }
    };
    a.as_discrete().map(Some).ok_or_else(|| Error::Record {
        index,
        msg: "discrete loss got a continuous action".into(),
    })
}

/// Mean cross-entropy over the (|A|+1)-class output.
pub fn loss_discrete(
    batch: &[&TransitionRecord],
    policy: &Mlp,
    mental: &Mlp,
    cfg: &LossConfig,
) -> Result<LossOutput> {
    check_batch(batch)?;
    let inv = 1.0 / batch.len() as f64;
    let mut gp = vec![0.0; policy.n_params()];
    let mut gm = vec![0.0; mental.n_params()];
    let mut value = 0.0;
    for (i, r) in batch.iter().enumerate() {
        let label = discrete_label(r, cfg.label, i)?;
        let (dp, tp) = policy.forward_tape(&r.obs)?;
        let (dm, tm) = mental.forward_tape(&r.obs)?;
        let (_, lp) = categorical(&dp)?;
        let (hat, _) = categorical(&dm)?;
        let (v, d_lp, d_hat) = class_nll(lp, hat, &cfg.params, label);
        value += inv * v;
        let adj_p = DistAdjoint::LogProbs(d_lp.iter().map(|g| g * inv).collect());
        // π̂ = exp(ℓ̂), so dL/dℓ̂ = dL/dπ̂ ⊙ π̂
        let adj_m = DistAdjoint::LogProbs(d_hat.iter().zip(hat).map(|(g, p)| g * p * inv).collect());
        if !adj_p.is_finite() || !adj_m.is_finite() {
            return Err(Error::NonFinite {
                what: "discrete loss adjoint",
                index: i,
            });
        }
        policy.backward_sample(&tp, &policy.head_adjoint(&tp, &adj_p)?, &mut gp);
        mental.backward_sample(&tm, &mental.head_adjoint(&tm, &adj_m)?, &mut gm);
    }
    Ok(LossOutput {
        value,
        grad_policy: gp,
        grad_mental: gm,
        j2_empty: false,
    })
}

/// BCE between ν and the reparameterized ν̂; `noise[i]` is the M×d bank for
/// batch element i.
pub fn loss_j1(
    batch: &[&TransitionRecord],
    policy: &Mlp,
    mental: &Mlp,
    cfg: &LossConfig,
    noise: &[Vec<Vec<f64>>],
) -> Result<LossOutput> {
    check_batch(batch)?;
    if noise.len() != batch.len() {
        return Err(Error::Dim {
            what: "noise banks",
            expected: batch.len(),
            got: noise.len(),
        });
    }
    let inv = 1.0 / batch.len() as f64;
    let mut gp = vec![0.0; policy.n_params()];
    let mut gm = vec![0.0; mental.n_params()];
    let mut value = 0.0;
    for (i, r) in batch.iter().enumerate() {
        let (dp, tp) = policy.forward_tape(&r.obs)?;
        let (dm, tm) = mental.forward_tape(&r.obs)?;
        gaussian(&dp)?;
        gaussian(&dm)?;
        let gate = intervene_prob_continuous(&dp, &dm, &cfg.params, &noise[i])?;
        let (v, d_p, d_q) = if r.nu == 1 {
            let p = gate.p.clamp(CLAMP, 1.0 - CLAMP);
            let d = if p == gate.p { -1.0 / p } else { 0.0 };
            (-p.ln(), d, 0.0)
        } else {
            let q = gate.q.clamp(CLAMP, 1.0 - CLAMP);
            let d = if q == gate.q { -1.0 / q } else { 0.0 };
            (-q.ln(), 0.0, d)
        };
        value += inv * v;
        let g = gate.backward(d_p * inv, d_q * inv);
        let adj_p = DistAdjoint::Gaussian {
            d_mean: g.d_mu,
            d_var: g.d_v,
        };
        let adj_m = DistAdjoint::Gaussian {
            d_mean: g.d_mu_hat,
            d_var: g.d_v_hat,
        };
        if !adj_p.is_finite() || !adj_m.is_finite() {
            return Err(Error::NonFinite {
                what: "J1 adjoint",
                index: i,
            });
        }
        policy.backward_sample(&tp, &policy.head_adjoint(&tp, &adj_p)?, &mut gp);
        mental.backward_sample(&tm, &mental.head_adjoint(&tm, &adj_m)?, &mut gm);
    }
    Ok(LossOutput {
        value,
        grad_policy: gp,
        grad_mental: gm,
        j2_empty: false,
    })
}

/// Mean NLL of human actions over the intervention records of the batch.
pub fn loss_j2(batch: &[&TransitionRecord], policy: &Mlp, mental_params: usize) -> Result<LossOutput> {
    check_batch(batch)?;
    let hits: Vec<(usize, &Action)> = batch
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.a_h.as_ref().filter(|_| r.nu == 1).map(|a| (i, a)))
        .collect();
    let mut gp = vec![0.0; policy.n_params()];
    if hits.is_empty() {
        return Ok(LossOutput {
            value: 0.0,
            grad_policy: gp,
            grad_mental: vec![0.0; mental_params],
            j2_empty: true,
        });
    }
    let inv = 1.0 / hits.len() as f64;
    let mut value = 0.0;
    for (i, a) in hits {
        let (d, tape) = policy.forward_tape(&batch[i].obs)?;
        let (nll, adj) = d.nll(a)?;
        value += inv * nll;
        let adj = adj.scaled(inv);
        if !adj.is_finite() {
            return Err(Error::NonFinite {
                what: "J2 adjoint",
                index: i,
            });
        }
        policy.backward_sample(&tape, &policy.head_adjoint(&tape, &adj)?, &mut gp);
    }
    Ok(LossOutput {
        value,
        grad_policy: gp,
        grad_mental: vec![0.0; mental_params],
        j2_empty: false,
    })
}

/// λ J1 + (1 − λ) J2.
pub fn loss_total(
    batch: &[&TransitionRecord],
    policy: &Mlp,
    mental: &Mlp,
    cfg: &LossConfig,
    noise: &[Vec<Vec<f64>>],
) -> Result<LossOutput> {
    let l = cfg.lambda;
    let j1 = loss_j1(batch, policy, mental, cfg, noise)?;
    let j2 = loss_j2(batch, policy, mental.n_params())?;
    if l == 1.0 {
        return Ok(LossOutput { j2_empty: j2.j2_empty, ..j1 });
    }
    let blend = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| l * x + (1.0 - l) * y).collect() };
    Ok(LossOutput {
        value: l * j1.value + (1.0 - l) * j2.value,
        grad_policy: blend(&j1.grad_policy, &j2.grad_policy),
        grad_mental: blend(&j1.grad_mental, &j2.grad_mental),
        j2_empty: j2.j2_empty,
    })
}

/// MILE's intervention prediction ν̂(s): p(ν=1|s) under π_θ and π̂_ξ.
pub fn predicted_intervention(
    obs: &[f64],
    policy: &Mlp,
    mental: &Mlp,
    cfg: &LossConfig,
    noise: &[Vec<f64>],
) -> Result<f64> {
    let dp = policy.forward(obs)?;
    let dm = mental.forward(obs)?;
    match (&dp, &dm) {
        (DistOutput::Categorical { log_probs, .. }, DistOutput::Categorical { probs, .. }) => {
            let c = predicted_classes(log_probs, probs, &cfg.params);
            Ok(1.0 - c[c.len() - 1])
        }
        _ => Ok(intervene_prob_continuous(&dp, &dm, &cfg.params, noise)?.p),
    }
}
