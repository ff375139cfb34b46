use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::bc::{train_bc, BcConfig, Sample};
use crate::diffnet::{DistOutput, Mlp, NetSpec};
use crate::error::{invalid, Error, Result};
use crate::rng::{self, tag, Rng};
use crate::rollout::{evaluate_policy, run_episode, ActMode};

use super::{Env, EnvSpec, EnvState, Expert};

fn d_corruption() -> f64 {
    0.3
}
fn d_rollouts() -> usize {
    50
}
fn d_inflation() -> f64 {
    0.05
}
fn d_band() -> Option<[f64; 2]> {
    Some([0.2, 0.6])
}
fn d_eval() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    /// 0 = the expert, 1 = uniformly random actions.
    #[serde(default = "d_corruption")]
    pub corruption: f64,
    /// Corrupted-expert episodes used as BC data.
    #[serde(default = "d_rollouts")]
    pub rollouts: usize,
    /// ReachGap: extra action noise std per unit of corruption.
    #[serde(default = "d_inflation")]
    pub noise_inflation: f64,
    /// Required success band; `None` skips the check.
    #[serde(default = "d_band")]
    pub band: Option<[f64; 2]>,
    #[serde(default = "d_eval")]
    pub eval_episodes: usize,
    #[serde(default)]
    pub bc: BcConfig,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            corruption: d_corruption(),
            rollouts: d_rollouts(),
            noise_inflation: d_inflation(),
            band: d_band(),
            eval_episodes: d_eval(),
            bc: BcConfig::default(),
        }
    }
}

/// One action of the ε-corrupted expert.
pub fn corrupted_action(
    expert: &Expert,
    state: &EnvState,
    corruption: f64,
    inflation: f64,
    rng: &mut Rng,
) -> Action {
    match (expert, expert.dist(state)) {
        (Expert::Grid { .. }, DistOutput::Categorical { probs, .. }) => {
            let n = probs.len() as f64;
            let mixed: Vec<f64> = probs
                .iter()
                .map(|p| (1.0 - corruption) * p + corruption / n)
                .collect();
            DistOutput::categorical(mixed).sample(rng)
        }
        (Expert::Reach { spec, noise_std }, DistOutput::Gaussian { mean, .. }) => {
            let u: f64 = rng.random();
            if u < corruption {
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                Action::Continuous(vec![spec.max_step * angle.cos(), spec.max_step * angle.sin()])
            } else {
                let sd = noise_std + corruption * inflation;
                DistOutput::Gaussian {
                    var: vec![sd * sd; mean.len()],
                    mean,
                }
                .sample(rng)
            }
        }
        _ => unreachable!("expert kind determines its distribution kind"),
    }
}

/// Rolls out the corrupted expert and returns (obs, executed action) pairs.
pub fn corrupted_rollouts(
    spec: &EnvSpec,
    expert: &Expert,
    cfg: &InitialConfig,
    seed: u64,
) -> Result<Vec<Sample>> {
    let mut data = Vec::new();
    let mut env = Env::new(spec.clone())?;
    for e in 0..cfg.rollouts as u64 {
        env.reset(rng::mix(seed, &[tag::ROLLOUT, e]));
        let mut r = rng::stream(seed, &[tag::ROLLOUT, e, tag::ROBOT]);
        run_episode(&mut env, &mut r, |s, obs, r| {
            let a = corrupted_action(expert, s, cfg.corruption, cfg.noise_inflation, r);
            data.push(Sample::new(obs.to_vec(), a.clone()));
            Ok(a)
        })?;
    }
    Ok(data)
}

/// BC on ε-corrupted expert rollouts; returns the net and its evaluated
/// success rate. Fails if the rate is outside the configured band.
pub fn make_initial_policy(
    spec: &EnvSpec,
    expert: &Expert,
    net_spec: NetSpec,
    cfg: &InitialConfig,
    seed: u64,
) -> Result<(Mlp, f64)> {
    if !(0.0..=1.0).contains(&cfg.corruption) {
        return Err(invalid("initial.corruption must be in [0, 1]"));
    }
    if cfg.rollouts == 0 {
        return Err(invalid("initial.rollouts must be >= 1"));
    }
    let data = corrupted_rollouts(spec, expert, cfg, seed)?;
    let mut net = Mlp::new(net_spec, rng::mix(seed, &[tag::INIT, 0]))?;
    train_bc(&mut net, &data, &cfg.bc, rng::mix(seed, &[tag::BATCH, 0]))?;
    let rate = evaluate_policy(spec, &net, cfg.eval_episodes, rng::mix(seed, &[tag::EVAL, 0]), ActMode::Sample)?
        .success_rate;
    if let Some([lo, hi]) = cfg.band {
        if rate < lo || rate > hi {
            return Err(Error::OutOfBand {
                rate,
                lo,
                hi,
                corruption: cfg.corruption,
            });
        }
    }
    Ok((net, rate))
}
