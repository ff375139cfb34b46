use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bc::epoch_batches;
use crate::datastore::{write_json_atomic, TransitionRecord};
use crate::diffnet::{load_adam, load_net, save_adam, save_net, Adam, Mlp, LAYOUT_VERSION};
use crate::error::{invalid, Error, Result};
use crate::intervention::noise_bank;
use crate::rng::{self, tag};

use super::loss::{loss_discrete, loss_total, LossConfig};

fn d_b() -> usize {
    64
}
fn d_m() -> usize {
    300
}
fn d_lr() -> f64 {
    1e-3
}

/// Alg. 1 budgets: `n_iters` deployment rounds of `k` episodes, then `m`
/// epochs of `l` batches of size `b` (`l` unset = one pass over the data).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(rename = "N", alias = "n_iters")]
    pub n_iters: usize,
    pub k: usize,
    #[serde(default = "d_b")]
    pub b: usize,
    #[serde(default)]
    pub l: Option<usize>,
    #[serde(default = "d_m")]
    pub m: usize,
    #[serde(default = "d_lr")]
    pub lr: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_iters: 1,
            k: 15,
            b: d_b(),
            l: None,
            m: d_m(),
            lr: d_lr(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.b == 0 || self.m == 0 || self.l == Some(0) {
            return Err(invalid("train: b, l and m must be >= 1"));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(invalid("train: lr must be a positive number"));
        }
        Ok(())
    }
}

/// Policy θ and mental model ξ with their optimizer states.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub policy: Mlp,
    pub policy_adam: Adam,
    pub mental: Mlp,
    pub mental_adam: Adam,
    pub iteration: u64,
    /// Mean training loss of every epoch run so far.
    pub loss_history: Vec<f64>,
    pub j2_empty_batches: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct StateSidecar {
    layout_version: u32,
    iteration: u64,
    loss_history: Vec<f64>,
    j2_empty_batches: u64,
}

impl TrainState {
    pub fn new(policy: Mlp, mental: Mlp) -> Self {
        Self {
            policy_adam: Adam::new(policy.n_params()),
            mental_adam: Adam::new(mental.n_params()),
            policy,
            mental,
            iteration: 0,
            loss_history: Vec::new(),
            j2_empty_batches: 0,
        }
    }

    pub fn checkpoint(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        save_net(&self.policy, dir, "policy")?;
        save_adam(&self.policy_adam, dir, "policy_adam")?;
        save_net(&self.mental, dir, "mental")?;
        save_adam(&self.mental_adam, dir, "mental_adam")?;
        let side = StateSidecar {
            layout_version: LAYOUT_VERSION,
            iteration: self.iteration,
            loss_history: self.loss_history.clone(),
            j2_empty_batches: self.j2_empty_batches,
        };
        write_json_atomic(&dir.join("state.json"), &side)
    }

    pub fn restore(dir: &Path) -> Result<Self> {
        let side: StateSidecar = serde_json::from_str(&fs::read_to_string(dir.join("state.json"))?)?;
        if side.layout_version != LAYOUT_VERSION {
            return Err(Error::LayoutVersion {
                found: side.layout_version,
                expected: LAYOUT_VERSION,
            });
        }
        let policy = load_net(dir, "policy")?;
        let mental = load_net(dir, "mental")?;
        Ok(Self {
            policy_adam: load_adam(dir, "policy_adam", policy.n_params())?,
            mental_adam: load_adam(dir, "mental_adam", mental.n_params())?,
            policy,
            mental,
            iteration: side.iteration,
            loss_history: side.loss_history,
            j2_empty_batches: side.j2_empty_batches,
        })
    }
}

/// Batches for one epoch: a fresh permutation, cut into `b`-sized pieces;
/// with `l` set, exactly `l` batches, continuing into further permutations
/// when one runs out.
pub fn epoch_plan(n: usize, cfg: &TrainConfig, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut plan = epoch_batches(n, cfg.b, seed, epoch * 1_000);
    if let Some(l) = cfg.l {
        let mut extra = 1;
        while plan.len() < l {
            plan.extend(epoch_batches(n, cfg.b, seed, epoch * 1_000 + extra));
            extra += 1;
        }
        plan.truncate(l);
    }
    plan
}

/// Per-element noise banks for a continuous batch.
pub fn batch_noise(len: usize, m: usize, dim: usize, seed: u64, parts: &[u64]) -> Vec<Vec<Vec<f64>>> {
    let mut r = rng::stream(seed, &[&[tag::NOISE], parts].concat());
    (0..len).map(|_| noise_bank(m, dim, &mut r)).collect()
}

/// LEARNING: `m` epochs of joint θ/ξ updates on `data`. Both gradients are
/// taken at the same parameters, then both nets step. On a non-finite loss
/// the state is left as it was on entry.
pub fn learn(
    state: &mut TrainState,
    data: &[TransitionRecord],
    loss: &LossConfig,
    train: &TrainConfig,
    seed: u64,
    on_epoch: &mut dyn FnMut(usize, f64),
) -> Result<Vec<f64>> {
    loss.validate()?;
    train.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let discrete = data[0].a_r.as_discrete().is_some();
    let action_dim = data[0].a_r.as_continuous().map_or(0, <[f64]>::len);
    let saved = state.clone();
    let iter = state.iteration;
    let mut epochs = Vec::with_capacity(train.m);
    let run = |state: &mut TrainState, epochs: &mut Vec<f64>, on_epoch: &mut dyn FnMut(usize, f64)| -> Result<()> {
        for epoch in 0..train.m {
            let plan = epoch_plan(data.len(), train, rng::mix(seed, &[tag::BATCH, iter]), epoch);
            let (mut total, mut count) = (0.0, 0usize);
            for (bi, idx) in plan.iter().enumerate() {
                let batch: Vec<&TransitionRecord> = idx.iter().map(|&i| &data[i]).collect();
                let out = if discrete {
                    loss_discrete(&batch, &state.policy, &state.mental, loss)?
                } else {
                    let noise = batch_noise(
                        batch.len(),
                        loss.mc_samples,
                        action_dim,
                        seed,
                        &[iter, epoch as u64, bi as u64],
                    );
                    loss_total(&batch, &state.policy, &state.mental, loss, &noise)?
                };
                if !out.value.is_finite() {
                    return Err(Error::Diverged(format!(
                        "non-finite loss at iteration {iter}, epoch {epoch}, batch {bi}"
                    )));
                }
                if out.j2_empty {
                    state.j2_empty_batches += 1;
                }
                total += out.value * batch.len() as f64;
                count += batch.len();
                state.policy_adam.step(&mut state.policy.params, &out.grad_policy, train.lr)?;
                state.mental_adam.step(&mut state.mental.params, &out.grad_mental, train.lr)?;
            }
            let mean = total / count as f64;
            epochs.push(mean);
            on_epoch(epoch, mean);
        }
        Ok(())
    };
    match run(state, &mut epochs, on_epoch) {
        Ok(()) => {
            state.loss_history.extend_from_slice(&epochs);
            Ok(epochs)
        }
        Err(e) => {
            *state = saved;
            Err(e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::Action;
    use crate::datastore::Source;
    use crate::diffnet::{Head, NetSpec};
    use rand::Rng as _;

    fn data(n: usize) -> Vec<TransitionRecord> {
        let mut r = rng::stream(11, &[]);
        (0..n)
            .map(|i| {
                let obs: Vec<f64> = (0..5).map(|_| r.random_range(-1.0..1.0)).collect();
                let nu = u8::from(i % 4 == 0);
                TransitionRecord {
                    ep: (i / 10) as u64,
                    t: (i % 10) as u64,
                    next_obs: obs.clone(),
                    obs,
                    a_r: Action::Discrete(r.random_range(0..3)),
                    a_h: (nu == 1).then(|| Action::Discrete(2)),
                    nu,
                    reward: 0.0,
                    done: i % 10 == 9,
                    success: false,
                    iter: 1,
                    source: Source::SimHuman,
                }
            })
            .collect()
    }

    fn state() -> TrainState {
        let spec = NetSpec::new(5, vec![8], Head::Categorical { n_actions: 3 });
        TrainState::new(Mlp::new(spec.clone(), 1).unwrap(), Mlp::new(spec, 2).unwrap())
    }

    fn cfg() -> TrainConfig {
        TrainConfig { m: 20, b: 8, lr: 1e-2, ..Default::default() }
    }

    #[test]
    fn epoch_plan_respects_l() {
        let c = TrainConfig { b: 4, l: Some(7), ..Default::default() };
        let plan = epoch_plan(10, &c, 3, 0);
        assert_eq!(plan.len(), 7);
        assert!(plan.iter().all(|b| !b.is_empty() && b.len() <= 4));
        let full = epoch_plan(10, &TrainConfig { b: 4, ..Default::default() }, 3, 0);
        let mut seen: Vec<usize> = full.concat();
        seen.sort();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn learning_lowers_the_loss_and_is_deterministic() {
        let d = data(80);
        let (mut a, mut b) = (state(), state());
        let la = learn(&mut a, &d, &LossConfig::default(), &cfg(), 4, &mut |_, _| {}).unwrap();
        let lb = learn(&mut b, &d, &LossConfig::default(), &cfg(), 4, &mut |_, _| {}).unwrap();
        assert_eq!(la, lb);
        assert_eq!(a.policy.params, b.policy.params);
        assert!(la.last().unwrap() < la.first().unwrap());
        assert_eq!(a.loss_history.len(), 20);
    }

    #[test]
    fn checkpoint_round_trip() {
        let d = data(40);
        let mut s = state();
        s.iteration = 3;
        learn(&mut s, &d, &LossConfig::default(), &cfg(), 1, &mut |_, _| {}).unwrap();
        let dir = tempfile::tempdir().unwrap();
        s.checkpoint(dir.path()).unwrap();
        let back = TrainState::restore(dir.path()).unwrap();
        assert_eq!(back.policy.params, s.policy.params);
        assert_eq!(back.mental.params, s.mental.params);
        assert_eq!(back.iteration, 3);
        assert_eq!(back.loss_history, s.loss_history);
        // the restored optimizer continues exactly like the live one
        let (mut x, mut y) = (s.clone(), back);
        learn(&mut x, &d, &LossConfig::default(), &cfg(), 2, &mut |_, _| {}).unwrap();
        learn(&mut y, &d, &LossConfig::default(), &cfg(), 2, &mut |_, _| {}).unwrap();
        assert_eq!(x.policy.params, y.policy.params);
    }

    #[test]
    fn bad_inputs_leave_state_alone() {
        let mut s = state();
        let before = s.policy.params.clone();
        assert!(learn(&mut s, &[], &LossConfig::default(), &cfg(), 0, &mut |_, _| {}).is_err());
        let mut d = data(10);
        d[4].nu = 0;
        assert!(learn(&mut s, &d, &LossConfig::default(), &cfg(), 0, &mut |_, _| {}).is_err());
        assert_eq!(s.policy.params, before);
        assert!(s.loss_history.is_empty());
    }
}
