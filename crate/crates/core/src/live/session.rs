use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::action::Action;
use crate::datastore::{episodes, DatasetFilter, RunManifest, RunStore, Source, TransitionRecord};
use crate::diffnet::Mlp;
use crate::envs::{grid_action_from_key, Env, EnvSpec, N_GRID_ACTIONS};
use crate::error::{invalid, Error, Result};
use crate::learning::{learn, LossConfig, TrainConfig, TrainState};
use crate::rng::Rng;
use crate::rollout::{evaluate_policy, ActMode};
use crate::sim_human::episode_streams;

use super::protocol::{ClientMsg, Frame, IterStat, Owner, Phase, ServerMsg, Stats, View};

/// What the human's input does on ticks with no fresh action.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HoldPolicy {
    #[default]
    Repeat,
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub env: EnvSpec,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub hold: HoldPolicy,
    pub seed: u64,
    /// Episodes for the post-training evaluation.
    pub eval_episodes: usize,
    pub eval_mode: ActMode,
}

const RECENT: usize = 20;

/// One operator's session: the serving policy, the running episode and the
/// live recording. All mutation goes through `handle`, `tick` and
/// `finish_training`.
pub struct Session {
    pub id: String,
    cfg: SessionConfig,
    env: Env,
    obs: Vec<f64>,
    state: TrainState,
    owner: Owner,
    phase: Phase,
    pending: Option<Action>,
    last_human: Option<Action>,
    robot_rng: Option<Rng>,
    episode: Option<u64>,
    n_episodes: u64,
    buffer: Vec<TransitionRecord>,
    data: Vec<TransitionRecord>,
    new_episodes: usize,
    store: Option<RunStore>,
    ckpt_dir: Option<PathBuf>,
    last_eval: Option<f64>,
    per_iter: Vec<IterStat>,
}

/// Work handed to a training worker; the session stays in `training`
/// until `finish_training` gets the result.
pub struct TrainJob {
    pub state: TrainState,
    pub data: Vec<TransitionRecord>,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub seed: u64,
    pub iterations: usize,
}

impl TrainJob {
    /// One LEARNING phase per iteration on the aggregated data.
    pub fn run(mut self, on_progress: &mut dyn FnMut(u64, usize, f64)) -> Result<TrainState> {
        for _ in 0..self.iterations {
            let iter = self.state.iteration + 1;
            self.state.iteration = iter;
            learn(&mut self.state, &self.data, &self.loss, &self.train, self.seed, &mut |e, l| {
                on_progress(iter, e, l)
            })?;
        }
        Ok(self.state)
    }
}

#[derive(Default)]
pub struct Handled {
    pub replies: Vec<ServerMsg>,
    /// Messages for every connected client.
    pub broadcast: Vec<ServerMsg>,
    pub job: Option<TrainJob>,
}

impl Handled {
    fn reply(msg: ServerMsg) -> Self {
        Self {
            replies: vec![msg],
            ..Default::default()
        }
    }
}

pub fn policy_hash(net: &Mlp) -> String {
    let mut h = Sha256::new();
    for p in &net.params {
        h.update(p.to_le_bytes());
    }
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

impl Session {
    /// `dir` receives the live store (`store/`) and checkpoints (`ckpt/`).
    pub fn new(id: String, cfg: SessionConfig, policy: Mlp, mental: Mlp, dir: Option<&Path>) -> Result<Self> {
        cfg.env.validate()?;
        cfg.loss.validate()?;
        cfg.train.validate()?;
        for (what, net) in [("policy input", &policy), ("mental model input", &mental)] {
            if net.spec().input_dim != cfg.env.obs_dim() {
                return Err(Error::Dim {
                    what,
                    expected: cfg.env.obs_dim(),
                    got: net.spec().input_dim,
                });
            }
        }
        let store = match dir {
            Some(d) => {
                let manifest = RunManifest::new(
                    format!("live-{id}"),
                    cfg.env.clone(),
                    vec![cfg.seed],
                    cfg.loss.params.c,
                    cfg.loss.params.sigma,
                    cfg.loss.lambda,
                );
                Some(RunStore::create(d.join("store"), manifest)?)
            }
            None => None,
        };
        let mut env = Env::new(cfg.env.clone())?;
        let obs = env.reset(cfg.seed);
        Ok(Self {
            id,
            env,
            obs,
            state: TrainState::new(policy, mental),
            owner: Owner::Robot,
            phase: Phase::Idle,
            pending: None,
            last_human: None,
            robot_rng: None,
            episode: None,
            n_episodes: 0,
            buffer: Vec::new(),
            data: Vec::new(),
            new_episodes: 0,
            store,
            ckpt_dir: dir.map(|d| d.join("ckpt")),
            last_eval: None,
            per_iter: Vec::new(),
            cfg,
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn owner(&self) -> Owner {
        self.owner
    }

    pub fn policy(&self) -> &Mlp {
        &self.state.policy
    }

    pub fn train_state(&self) -> &TrainState {
        &self.state
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    /// All records recorded so far, in order.
    pub fn data(&self) -> &[TransitionRecord] {
        &self.data
    }

    /// Deployment round the next episode belongs to.
    fn deploy_iter(&self) -> u64 {
        self.state.iteration + 1
    }

    fn frame(&self, done: bool, success: bool, reward: f64) -> Frame {
        Frame {
            session: self.id.clone(),
            episode: self.episode.unwrap_or(self.n_episodes.saturating_sub(1)),
            t: self.env.t() as u64,
            owner: self.owner,
            phase: self.phase,
            done,
            success,
            final_frame: done,
            reward,
            view: View::of(&self.cfg.env, &self.env.state()),
        }
    }

    fn ack(&self, of: &str) -> ServerMsg {
        ServerMsg::Ack {
            of: of.into(),
            owner: self.owner,
            phase: self.phase,
        }
    }

    fn parse_action(&self, a: Option<Vec<f64>>, key: Option<String>) -> Result<Action> {
        match (&self.cfg.env, a, key) {
            (EnvSpec::GridNav(_), None, Some(k)) => grid_action_from_key(&k)
                .map(Action::Discrete)
                .ok_or_else(|| invalid(format!("unknown action key `{k}`"))),
            (EnvSpec::ReachGap(_), Some(v), None) => {
                if v.len() != 2 || !v.iter().all(|x| x.is_finite()) {
                    return Err(invalid("action `a` must be two finite numbers"));
                }
                Ok(Action::Continuous(v))
            }
            (EnvSpec::GridNav(_), _, _) => Err(invalid("gridnav actions take exactly a `key`")),
            (EnvSpec::ReachGap(_), _, _) => Err(invalid("reachgap actions take exactly `a: [dx, dy]`")),
        }
    }

    fn zero_action(&self) -> Action {
        match self.cfg.env {
            EnvSpec::GridNav(_) => Action::Discrete(N_GRID_ACTIONS - 1),
            EnvSpec::ReachGap(_) => Action::Continuous(vec![0.0, 0.0]),
        }
    }

    /// Applies one client message. Rejected messages leave the session
    /// unchanged.
    pub fn handle(&mut self, msg: ClientMsg) -> Handled {
        match msg {
            ClientMsg::StartEpisode => {
                if self.phase != Phase::Idle {
                    return Handled::reply(ServerMsg::error(format!(
                        "start_episode needs phase idle, not {:?}",
                        self.phase
                    )));
                }
                let ep = self.n_episodes;
                let (reset, robot, _) = episode_streams(self.cfg.seed, self.deploy_iter(), ep);
                self.obs = self.env.reset(reset);
                self.robot_rng = Some(robot);
                self.episode = Some(ep);
                self.n_episodes += 1;
                self.owner = Owner::Robot;
                self.pending = None;
                self.last_human = None;
                self.buffer.clear();
                self.phase = Phase::Running;
                Handled {
                    replies: vec![self.ack("start_episode")],
                    broadcast: vec![ServerMsg::Frame(self.frame(false, false, 0.0))],
                    job: None,
                }
            }
            ClientMsg::Intervene { on } => {
                if self.phase != Phase::Running {
                    return Handled::reply(ServerMsg::error("intervene needs a running episode"));
                }
                self.owner = if on { Owner::Human } else { Owner::Robot };
                if !on {
                    self.pending = None;
                    self.last_human = None;
                }
                Handled::reply(self.ack("intervene"))
            }
            ClientMsg::Action { a, key } => {
                let action = match self.parse_action(a, key) {
                    Ok(x) => x,
                    Err(e) => return Handled::reply(ServerMsg::error(e.to_string())),
                };
                if self.phase != Phase::Running || self.owner != Owner::Human {
                    return Handled::reply(ServerMsg::Notice {
                        msg: "action ignored: the robot is in control".into(),
                    });
                }
                self.pending = Some(action);
                Handled::default()
            }
            ClientMsg::Train { iterations } => {
                if self.phase != Phase::Idle {
                    return Handled::reply(ServerMsg::error(format!("train needs phase idle, not {:?}", self.phase)));
                }
                if iterations == 0 {
                    return Handled::reply(ServerMsg::error("train needs iterations >= 1"));
                }
                if self.new_episodes == 0 {
                    return Handled::reply(ServerMsg::error("no new episodes since the last training round"));
                }
                self.phase = Phase::Training;
                Handled {
                    replies: vec![self.ack("train")],
                    broadcast: Vec::new(),
                    job: Some(TrainJob {
                        state: self.state.clone(),
                        data: self.data.clone(),
                        loss: self.cfg.loss,
                        train: self.cfg.train.clone(),
                        seed: self.cfg.seed,
                        iterations,
                    }),
                }
            }
            ClientMsg::Stats => match self.stats() {
                Ok(s) => Handled::reply(ServerMsg::Stats(s)),
                Err(e) => Handled::reply(ServerMsg::error(e.to_string())),
            },
        }
    }

    /// One control step of the running episode.
    pub fn tick(&mut self) -> Result<Option<Frame>> {
        if self.phase != Phase::Running {
            return Ok(None);
        }
        let ep = self.episode.expect("running implies an episode");
        let rng = self.robot_rng.as_mut().expect("running implies a robot stream");
        // sampled every tick so the robot stream does not depend on takeovers
        let a_r = self.state.policy.forward(&self.obs)?.sample(rng);
        let (nu, a_h) = match self.owner {
            Owner::Robot => (0, None),
            Owner::Human => {
                let a = match self.pending.take() {
                    Some(a) => a,
                    None => match (self.cfg.hold, &self.last_human) {
                        (HoldPolicy::Repeat, Some(a)) => a.clone(),
                        _ => self.zero_action(),
                    },
                };
                self.last_human = Some(a.clone());
                (1, Some(a))
            }
        };
        let executed = a_h.clone().unwrap_or_else(|| a_r.clone());
        let step = self.env.step(&executed)?;
        self.buffer.push(TransitionRecord {
            ep,
            t: self.env.t() as u64 - 1,
            obs: std::mem::take(&mut self.obs),
            a_r,
            a_h,
            nu,
            next_obs: step.obs.clone(),
            reward: step.reward,
            done: step.done,
            success: step.success,
            iter: self.deploy_iter(),
            source: Source::Live,
        });
        self.obs = step.obs;
        if step.done {
            let records = std::mem::take(&mut self.buffer);
            if let Some(s) = self.store.as_mut() {
                s.append_episode(&records)?;
            }
            self.data.extend(records);
            self.new_episodes += 1;
            self.phase = Phase::Idle;
            self.owner = Owner::Robot;
            self.pending = None;
            let f = self.frame(true, step.success, step.reward);
            self.episode = None;
            return Ok(Some(f));
        }
        Ok(Some(self.frame(false, false, step.reward)))
    }

    /// Drops the running episode without recording it.
    pub fn abort_episode(&mut self) {
        self.buffer.clear();
        self.episode = None;
        self.phase = Phase::Idle;
        self.owner = Owner::Robot;
        self.pending = None;
    }

    /// Installs the trained state (or keeps the old one on error) and
    /// returns to idle.
    pub fn finish_training(&mut self, result: Result<TrainState>) -> Vec<ServerMsg> {
        self.phase = Phase::Idle;
        let state = match result {
            Ok(s) => s,
            Err(e) => return vec![ServerMsg::error(format!("training failed, serving policy kept: {e}"))],
        };
        let eval = evaluate_policy(
            &self.cfg.env,
            &state.policy,
            self.cfg.eval_episodes,
            crate::learning::eval_seed(self.cfg.seed, state.iteration),
            self.cfg.eval_mode,
        );
        let eval = match eval {
            Ok(e) => e.success_rate,
            Err(e) => return vec![ServerMsg::error(format!("evaluation failed, serving policy kept: {e}"))],
        };
        if let Some(dir) = &self.ckpt_dir {
            if let Err(e) = state.checkpoint(dir) {
                return vec![ServerMsg::error(format!("checkpoint failed, serving policy kept: {e}"))];
            }
        }
        let round: Vec<&TransitionRecord> = self.data.iter().filter(|r| r.iter == self.deploy_iter()).collect();
        let eps = round.iter().filter(|r| r.done).count() as u64;
        self.per_iter.push(IterStat {
            iter: self.deploy_iter(),
            episodes: eps,
            intervention_rate: round.iter().filter(|r| r.nu == 1).count() as f64 / round.len().max(1) as f64,
            success_rate: round.iter().filter(|r| r.done && r.success).count() as f64 / eps.max(1) as f64,
        });
        self.state = state;
        self.new_episodes = 0;
        self.last_eval = Some(eval);
        vec![ServerMsg::TrainDone {
            iteration: self.state.iteration,
            policy_hash: policy_hash(&self.state.policy),
            eval_success_rate: eval,
        }]
    }

    pub fn stats(&self) -> Result<Stats> {
        let loaded;
        let data: &[TransitionRecord] = match &self.store {
            Some(s) => {
                loaded = s.load_dataset(&DatasetFilter::default())?;
                &loaded
            }
            None => &self.data,
        };
        let eps = episodes(data);
        let recent = &eps[eps.len().saturating_sub(RECENT)..];
        let interventions = data.iter().filter(|r| r.nu == 1).count() as u64;
        Ok(Stats {
            iteration: self.state.iteration,
            episodes: eps.len() as u64,
            records: data.len() as u64,
            interventions,
            intervention_rate: interventions as f64 / data.len().max(1) as f64,
            success_rate: recent.iter().filter(|e| e.last().is_some_and(|r| r.success)).count() as f64
                / recent.len().max(1) as f64,
            eval_success_rate: self.last_eval,
            per_iter: self.per_iter.clone(),
        })
    }
}
