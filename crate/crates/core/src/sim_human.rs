//! The simulated intervener: expert policy in the human role, a BC mental
//! model of the robot, and the probit gate between them.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::bc::{mean_nll, top1_agreement, train_bc, BcConfig, Sample};
use crate::datastore::{Source, TransitionRecord};
use crate::diffnet::{sample_index, DistOutput, Mlp};
use crate::envs::{Env, EnvSpec, EnvState, Expert};
use crate::error::{invalid, Error, Result};
use crate::intervention::{intervene_prob_continuous, intervene_prob_discrete, noise_bank, InterventionParams};
use crate::rng::{self, tag, Rng};
use crate::rollout::run_episode;

#[derive(Clone, Debug)]
pub struct SimulatedHuman {
    pub expert: Expert,
    /// π_ζ: the human's belief about the robot.
    pub mental_model: Mlp,
    pub params: InterventionParams,
    /// Extra steps a takeover is held for once started.
    pub sticky_steps: usize,
    /// Samples for the continuous p(ν=1|s) estimate (reporting only).
    pub mc_samples: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub nu: u8,
    pub a_h: Option<Action>,
}

impl SimulatedHuman {
    pub fn new(expert: Expert, mental_model: Mlp, params: InterventionParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            expert,
            mental_model,
            params,
            sticky_steps: 0,
            mc_samples: 256,
        })
    }

    pub fn with_c(&self, c: f64) -> Self {
        let mut h = self.clone();
        h.params.c = c;
        h
    }

    /// p(ν=1|s): exact for discrete actions, a reparameterized estimate for
    /// continuous ones.
    pub fn intervention_probability(&self, obs: &[f64], state: &EnvState, rng: &mut Rng) -> Result<f64> {
        let pi_h = self.expert.dist(state);
        let pi_hat = self.mental_model.forward(obs)?;
        match (&pi_h, &pi_hat) {
            (DistOutput::Categorical { probs, .. }, DistOutput::Categorical { probs: hat, .. }) => {
                Ok(intervene_prob_discrete(probs, hat, &self.params)?.p_intervene)
            }
            (DistOutput::Gaussian { mean, .. }, DistOutput::Gaussian { .. }) => {
                let noise = noise_bank(self.mc_samples.max(1), mean.len(), rng);
                Ok(intervene_prob_continuous(&pi_h, &pi_hat, &self.params, &noise)?.p)
            }
            _ => Err(invalid("mental model head does not match the expert's action space")),
        }
    }

    /// Decides whether to take over at this state, without seeing the
    /// robot's action. Every call consumes the same number of draws.
    pub fn decide(&self, obs: &[f64], state: &EnvState, rng: &mut Rng) -> Result<Decision> {
        let pi_h = self.expert.dist(state);
        let pi_hat = self.mental_model.forward(obs)?;
        match (&pi_h, &pi_hat) {
            (DistOutput::Categorical { probs, .. }, DistOutput::Categorical { probs: hat, .. }) => {
                let u_nu: f64 = rng.random();
                let u_a: f64 = rng.random();
                let est = intervene_prob_discrete(probs, hat, &self.params)?;
                if u_nu < est.p_intervene {
                    let cond: Vec<f64> = est.joint.iter().map(|j| j / est.p_intervene).collect();
                    Ok(Decision {
                        nu: 1,
                        a_h: Some(Action::Discrete(sample_index(&cond, u_a))),
                    })
                } else {
                    Ok(Decision { nu: 0, a_h: None })
                }
            }
            (DistOutput::Gaussian { mean, var }, DistOutput::Gaussian { mean: mh, var: vh }) => {
                if mh.len() != mean.len() {
                    return Err(invalid("mental model action dim differs from the expert's"));
                }
                // nominal action first, then the gate on its log-density advantage
                let eps: Vec<f64> = (0..mean.len()).map(|_| rng.sample(StandardNormal)).collect();
                let u_nu: f64 = rng.random();
                let delta: f64 = 0.5
                    * (0..mean.len())
                        .map(|d| (vh[d] + (mh[d] - mean[d]).powi(2)) / var[d] - eps[d] * eps[d])
                        .sum::<f64>();
                if u_nu < crate::intervention::probit_gate(delta, &self.params) {
                    let a = (0..mean.len()).map(|d| mean[d] + var[d].sqrt() * eps[d]).collect();
                    Ok(Decision {
                        nu: 1,
                        a_h: Some(Action::Continuous(a)),
                    })
                } else {
                    Ok(Decision { nu: 0, a_h: None })
                }
            }
            _ => Err(invalid("mental model head does not match the expert's action space")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MentalFit {
    pub samples: usize,
    pub train_nll: f64,
    pub heldout_nll: f64,
    pub heldout_agreement: f64,
}

/// BC fit of π_ζ on rollouts of an actor; 10% of the samples are held out.
pub fn fit_mental_model_with<F>(
    spec: &EnvSpec,
    net: Mlp,
    n_rollouts: usize,
    bc: &BcConfig,
    seed: u64,
    act: F,
) -> Result<(Mlp, MentalFit)>
where
    F: Fn(&EnvState, &[f64], &mut Rng) -> Result<Action>,
{
    if n_rollouts == 0 {
        return Err(invalid("mental model needs at least one rollout"));
    }
    let mut data = Vec::new();
    let mut env = Env::new(spec.clone())?;
    for e in 0..n_rollouts as u64 {
        env.reset(rng::mix(seed, &[tag::ROLLOUT, u64::MAX, e]));
        let mut r = rng::stream(seed, &[tag::ROLLOUT, u64::MAX, e, tag::ROBOT]);
        run_episode(&mut env, &mut r, |s, obs, r| {
            let a = act(s, obs, r)?;
            data.push(Sample::new(obs.to_vec(), a.clone()));
            Ok(a)
        })?;
    }
    data.shuffle(&mut rng::stream(seed, &[tag::SPLIT]));
    let n_hold = (data.len() / 10).max(1).min(data.len() - 1);
    let held: Vec<Sample> = data.split_off(data.len() - n_hold);
    let mut net = net;
    let report = train_bc(&mut net, &data, bc, rng::mix(seed, &[tag::BATCH, 1]))?;
    let train_nll = *report.epoch_loss.last().unwrap_or(&f64::NAN);
    let heldout_nll = mean_nll(&net, &held)?;
    if !heldout_nll.is_finite() {
        return Err(Error::Diverged("mental model held-out NLL is not finite".into()));
    }
    let fit = MentalFit {
        samples: data.len(),
        train_nll,
        heldout_nll,
        heldout_agreement: top1_agreement(&net, &held)?,
    };
    Ok((net, fit))
}

/// π_ζ as BC on `n_rollouts` sampled rollouts of the initial policy; the
/// net starts from `init` (same architecture as the policy).
pub fn fit_mental_model(
    spec: &EnvSpec,
    initial: &Mlp,
    init: Mlp,
    n_rollouts: usize,
    bc: &BcConfig,
    seed: u64,
) -> Result<(Mlp, MentalFit)> {
    fit_mental_model_with(spec, init, n_rollouts, bc, seed, |_, obs, r| {
        Ok(initial.forward(obs)?.sample(r))
    })
}

/// Streams for deployment episode `ep` of iteration `iter`.
pub fn episode_streams(seed: u64, iter: u64, ep: u64) -> (u64, Rng, Rng) {
    (
        rng::mix(seed, &[tag::RESET, iter, ep]),
        rng::stream(seed, &[tag::ROBOT, iter, ep]),
        rng::stream(seed, &[tag::HUMAN, iter, ep]),
    )
}

/// One deployment episode with the simulated human watching.
pub fn deploy_episode(
    spec: &EnvSpec,
    robot: &Mlp,
    human: &SimulatedHuman,
    seed: u64,
    iter: u64,
    ep: u64,
) -> Result<Vec<TransitionRecord>> {
    if human.mental_model.spec().input_dim != spec.obs_dim() {
        return Err(Error::Dim {
            what: "mental model input",
            expected: spec.obs_dim(),
            got: human.mental_model.spec().input_dim,
        });
    }
    let mut env = Env::new(spec.clone())?;
    let (reset, mut robot_rng, mut human_rng) = episode_streams(seed, iter, ep);
    let mut obs = env.reset(reset);
    let mut out = Vec::new();
    let mut hold = 0usize;
    while !env.done() {
        let state = env.state();
        let a_r = robot.forward(&obs)?.sample(&mut robot_rng);
        let mut d = human.decide(&obs, &state, &mut human_rng)?;
        if d.nu == 1 {
            hold = human.sticky_steps;
        } else if hold > 0 {
            hold -= 1;
            d = Decision {
                nu: 1,
                a_h: Some(human.expert.dist(&state).sample(&mut human_rng)),
            };
        }
        let executed = d.a_h.clone().unwrap_or_else(|| a_r.clone());
        let step = env.step(&executed)?;
        out.push(TransitionRecord {
            ep,
            t: env.t() as u64 - 1,
            obs: std::mem::take(&mut obs),
            a_r,
            a_h: d.a_h,
            nu: d.nu,
            next_obs: step.obs.clone(),
            reward: step.reward,
            done: step.done,
            success: step.success,
            iter,
            source: Source::SimHuman,
        });
        obs = step.obs;
    }
    Ok(out)
}

/// `k` deployment episodes numbered `ep_offset..ep_offset + k`, run in
/// parallel; each episode's randomness depends only on `(seed, iter, ep)`.
pub fn run_deployment(
    spec: &EnvSpec,
    robot: &Mlp,
    human: &SimulatedHuman,
    k: usize,
    seed: u64,
    iter: u64,
    ep_offset: u64,
) -> Result<Vec<Vec<TransitionRecord>>> {
    (0..k as u64)
        .into_par_iter()
        .map(|j| deploy_episode(spec, robot, human, seed, iter, ep_offset + j))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub c: f64,
    pub rate: f64,
    /// (c, rate) for every evaluation, in order.
    pub trace: Vec<(f64, f64)>,
}

pub const C_LO: f64 = -50.0;
pub const C_HI: f64 = 500.0;

/// Empirical intervention rate of `k` common-random-number episodes at cost `c`.
pub fn intervention_rate_at(
    spec: &EnvSpec,
    robot: &Mlp,
    human: &SimulatedHuman,
    c: f64,
    k: usize,
    seed: u64,
) -> Result<f64> {
    let h = human.with_c(c);
    let eps = run_deployment(spec, robot, &h, k, seed, u64::MAX, 0)?;
    let (mut n, mut m) = (0usize, 0usize);
    for e in &eps {
        n += e.len();
        m += e.iter().filter(|r| r.nu == 1).count();
    }
    Ok(m as f64 / n.max(1) as f64)
}

/// Bisection on c until the rate over `k` CRN rollouts is within `tol` of
/// `target`.
pub fn calibrate_c(
    spec: &EnvSpec,
    robot: &Mlp,
    human: &SimulatedHuman,
    target: f64,
    tol: f64,
    k: usize,
    seed: u64,
) -> Result<Calibration> {
    if !(target > 0.0 && target < 1.0) || !(tol > 0.0) || k == 0 {
        return Err(invalid("calibration needs target in (0,1), tol > 0, k >= 1"));
    }
    let seed = rng::mix(seed, &[tag::CALIBRATE]);
    let mut trace = Vec::new();
    let rate = |c: f64, trace: &mut Vec<(f64, f64)>| -> Result<f64> {
        let r = intervention_rate_at(spec, robot, human, c, k, seed)?;
        trace.push((c, r));
        Ok(r)
    };
    let (mut lo, mut hi) = (C_LO, C_HI);
    let r_lo = rate(lo, &mut trace)?;
    let r_hi = rate(hi, &mut trace)?;
    if (r_lo - target).abs() <= tol {
        return Ok(Calibration { c: lo, rate: r_lo, trace });
    }
    if (r_hi - target).abs() <= tol {
        return Ok(Calibration { c: hi, rate: r_hi, trace });
    }
    if r_lo < target || r_hi > target {
        return Err(Error::NoBracket {
            target,
            lo,
            hi,
            trace,
        });
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let r = rate(mid, &mut trace)?;
        if (r - target).abs() <= tol {
            return Ok(Calibration { c: mid, rate: r, trace });
        }
        if r > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NoBracket {
        target,
        lo,
        hi,
        trace,
    })
}
