//! Episode execution and success-rate evaluation without interventions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::diffnet::Mlp;
use crate::envs::{Env, EnvSpec, EnvState, Expert};
use crate::error::Result;
use crate::rng::{self, tag, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub steps: usize,
    pub success: bool,
    pub ret: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub success_rate: f64,
    pub mean_return: f64,
    pub mean_steps: f64,
}

/// How a policy net picks actions at evaluation time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActMode {
    #[default]
    Sample,
    Mode,
}

/// Runs one episode from the current reset state.
pub fn run_episode<F>(env: &mut Env, rng: &mut Rng, mut act: F) -> Result<EpisodeSummary>
where
    F: FnMut(&EnvState, &[f64], &mut Rng) -> Result<Action>,
{
    let mut obs = env.obs();
    let mut ret = 0.0;
    let mut success = false;
    while !env.done() {
        let a = act(&env.state(), &obs, rng)?;
        let r = env.step(&a)?;
        ret += r.reward;
        success = r.success;
        obs = r.obs;
    }
    Ok(EpisodeSummary {
        steps: env.t(),
        success,
        ret,
    })
}

/// Evaluates an arbitrary actor over `episodes` fresh episodes in parallel.
/// Episode `e` uses reset and action streams derived from `(seed, e)` only,
/// so results do not depend on thread scheduling.
pub fn evaluate_with<F>(spec: &EnvSpec, episodes: usize, seed: u64, act: F) -> Result<EvalSummary>
where
    F: Fn(&EnvState, &[f64], &mut Rng) -> Result<Action> + Sync,
{
    let runs: Vec<EpisodeSummary> = (0..episodes as u64)
        .into_par_iter()
        .map(|e| {
            let mut env = Env::new(spec.clone())?;
            env.reset(rng::mix(seed, &[tag::EVAL, e]));
            let mut r = rng::stream(seed, &[tag::EVAL, e, tag::ROBOT]);
            run_episode(&mut env, &mut r, &act)
        })
        .collect::<Result<_>>()?;
    let n = episodes.max(1) as f64;
    Ok(EvalSummary {
        episodes,
        success_rate: runs.iter().filter(|r| r.success).count() as f64 / n,
        mean_return: runs.iter().map(|r| r.ret).sum::<f64>() / n,
        mean_steps: runs.iter().map(|r| r.steps as f64).sum::<f64>() / n,
    })
}

pub fn policy_action(policy: &Mlp, obs: &[f64], mode: ActMode, rng: &mut Rng) -> Result<Action> {
    let d = policy.forward(obs)?;
    Ok(match mode {
        ActMode::Sample => d.sample(rng),
        ActMode::Mode => d.mode(),
    })
}

pub fn evaluate_policy(
    spec: &EnvSpec,
    policy: &Mlp,
    episodes: usize,
    seed: u64,
    mode: ActMode,
) -> Result<EvalSummary> {
    evaluate_with(spec, episodes, seed, |_, obs, r| policy_action(policy, obs, mode, r))
}

/// The expert acting alone: noiseless (`ActMode::Mode`) or sampling its own
/// distribution.
pub fn evaluate_expert(
    spec: &EnvSpec,
    expert: &Expert,
    episodes: usize,
    seed: u64,
    mode: ActMode,
) -> Result<EvalSummary> {
    evaluate_with(spec, episodes, seed, |s, _, r| {
        Ok(match mode {
            ActMode::Mode => expert.mode(s),
            ActMode::Sample => expert.dist(s).sample(r),
        })
    })
}
