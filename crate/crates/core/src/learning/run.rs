use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{train_bc_interventions, train_hg_dagger, train_weighted_bc, WeightingScheme};
use crate::bc::BcConfig;
use crate::datastore::{episodes, DatasetFilter, RunStore, TransitionRecord};
use crate::diffnet::Mlp;
use crate::envs::EnvSpec;
use crate::error::{invalid, Error, Result};
use crate::rng::{self, tag};
use crate::rollout::{evaluate_policy, ActMode};
use crate::sim_human::{run_deployment, SimulatedHuman};

use super::loss::LossConfig;
use super::train::{learn, TrainConfig, TrainState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mile,
    HgDagger,
    Iwr,
    Sirius,
    BcInterventions,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Mile,
        Method::HgDagger,
        Method::Iwr,
        Method::Sirius,
        Method::BcInterventions,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mile => "mile",
            Method::HgDagger => "hg_dagger",
            Method::Iwr => "iwr",
            Method::Sirius => "sirius",
            Method::BcInterventions => "bc_interventions",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| invalid(format!("unknown method `{s}`")))
    }
}

/// BC settings for the baselines; unset fields fall back to the MILE budget.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub iwr: Option<WeightingScheme>,
    pub sirius: Option<WeightingScheme>,
}

impl BaselineConfig {
    pub fn bc(&self, train: &TrainConfig) -> BcConfig {
        BcConfig {
            epochs: self.epochs.unwrap_or(train.m),
            batch_size: self.batch_size.unwrap_or(train.b),
            lr: self.lr.unwrap_or(train.lr),
        }
    }
}

/// Everything a run needs besides the method and seed.
#[derive(Clone, Debug)]
pub struct Setup {
    pub env: EnvSpec,
    pub human: SimulatedHuman,
    pub initial: Mlp,
    /// Starting point of π̂_ξ.
    pub mental_init: Mlp,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub baselines: BaselineConfig,
    pub eval_episodes: usize,
    pub eval_mode: ActMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterMetrics {
    pub iter: u64,
    /// Cumulative deployment episodes.
    pub episodes: u64,
    /// Cumulative intervention steps.
    pub interventions: u64,
    /// Share of this iteration's deployment steps with ν=1.
    pub intervention_rate: f64,
    /// Final-epoch training loss.
    pub loss: Option<f64>,
    pub success_rate: f64,
    pub seed: u64,
    pub method: String,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub state: TrainState,
    pub metrics: Vec<IterMetrics>,
    pub data: Vec<TransitionRecord>,
}

pub fn eval_seed(seed: u64, iter: u64) -> u64 {
    rng::mix(seed, &[tag::EVAL, iter])
}

/// One training round of `method` on the aggregated data.
pub fn train_round(
    setup: &Setup,
    method: Method,
    state: &mut TrainState,
    data: &[TransitionRecord],
    seed: u64,
    on_epoch: &mut dyn FnMut(usize, f64),
) -> Result<Option<f64>> {
    let iter = state.iteration;
    let bc = setup.baselines.bc(&setup.train);
    let bc_seed = rng::mix(seed, &[tag::BATCH, iter, 7]);
    let loss = match method {
        Method::Mile => learn(state, data, &setup.loss, &setup.train, seed, on_epoch)?.last().copied(),
        Method::HgDagger => {
            let (net, rep) = train_hg_dagger(data, &state.policy, &bc, bc_seed)?;
            state.policy = net;
            rep.bc.epoch_loss.last().copied()
        }
        Method::Iwr | Method::Sirius => {
            let scheme = if method == Method::Iwr {
                setup.baselines.iwr.unwrap_or_else(WeightingScheme::iwr)
            } else {
                setup.baselines.sirius.unwrap_or_else(WeightingScheme::sirius)
            };
            let (net, rep) = train_weighted_bc(data, &state.policy, &scheme, &bc, bc_seed)?;
            state.policy = net;
            rep.epoch_loss.last().copied()
        }
        Method::BcInterventions => {
            let fresh = Mlp::new(setup.initial.spec().clone(), rng::mix(seed, &[tag::INIT, 3, iter]))?;
            state.policy = train_bc_interventions(data, fresh, &bc, bc_seed)?;
            None
        }
    };
    Ok(loss)
}

/// Alg. 1: `N` rounds of deploying `k` episodes under the simulated human,
/// aggregating, and training with `method`; evaluation after each round.
/// Row 0 is the initial policy.
pub fn run_interactive(
    setup: &Setup,
    method: Method,
    seed: u64,
    mut store: Option<&mut RunStore>,
    checkpoint_dir: Option<&Path>,
    resume: Option<TrainState>,
) -> Result<RunOutcome> {
    setup.loss.validate()?;
    setup.train.validate()?;
    let mut metrics = Vec::new();
    let mut data: Vec<TransitionRecord> = Vec::new();
    let (mut state, start) = match resume {
        Some(s) => {
            let st = store
                .as_deref()
                .ok_or_else(|| invalid("resuming needs the run's data store"))?;
            data = st.load_dataset(&DatasetFilter {
                max_iter: Some(s.iteration),
                ..Default::default()
            })?;
            let it = s.iteration;
            (s, it + 1)
        }
        None => {
            let s = TrainState::new(setup.initial.clone(), setup.mental_init.clone());
            let ev = evaluate_policy(&setup.env, &s.policy, setup.eval_episodes, eval_seed(seed, 0), setup.eval_mode)?;
            metrics.push(IterMetrics {
                iter: 0,
                episodes: 0,
                interventions: 0,
                intervention_rate: 0.0,
                loss: None,
                success_rate: ev.success_rate,
                seed,
                method: method.name().into(),
            });
            (s, 1)
        }
    };
    let mut n_eps = episodes(&data).len() as u64;
    let mut n_int = data.iter().filter(|r| r.nu == 1).count() as u64;
    for iter in start..=setup.train.n_iters as u64 {
        let eps = run_deployment(&setup.env, &state.policy, &setup.human, setup.train.k, seed, iter, n_eps)?;
        let (mut steps, mut hits) = (0u64, 0u64);
        for ep in &eps {
            if let Some(s) = store.as_deref_mut() {
                s.append_episode(ep)?;
            }
            steps += ep.len() as u64;
            hits += ep.iter().filter(|r| r.nu == 1).count() as u64;
            data.extend_from_slice(ep);
        }
        n_eps += eps.len() as u64;
        n_int += hits;
        state.iteration = iter;
        // training leaves `state` untouched on failure; the checkpoint on
        // disk is still the previous iteration's
        let loss = train_round(setup, method, &mut state, &data, seed, &mut |_, _| {}).map_err(|e| match e {
            Error::Diverged(m) => Error::Diverged(format!("{m}; rolled back to iteration {}", iter - 1)),
            other => other,
        })?;
        let ev = evaluate_policy(&setup.env, &state.policy, setup.eval_episodes, eval_seed(seed, iter), setup.eval_mode)?;
        metrics.push(IterMetrics {
            iter,
            episodes: n_eps,
            interventions: n_int,
            intervention_rate: hits as f64 / steps.max(1) as f64,
            loss,
            success_rate: ev.success_rate,
            seed,
            method: method.name().into(),
        });
        if let Some(dir) = checkpoint_dir {
            state.checkpoint(dir)?;
        }
    }
    Ok(RunOutcome { state, metrics, data })
}
