//! Desk-scale MDPs: GridNav (discrete) and ReachGap2D (continuous), with
//! exact or scripted experts and stacked observations.

mod expert;
mod gridnav;
mod initial;
mod reachgap;
mod stack;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

pub use expert::Expert;
pub use gridnav::{
    grid_action_from_key, value_iteration, Cell, GridFeatures, GridNavConfig, GridNavSpec, QTable,
    DEFAULT_MAP, GRID_ACTION_KEYS, N_GRID_ACTIONS,
};
pub use initial::{corrupted_action, corrupted_rollouts, make_initial_policy, InitialConfig};
pub use reachgap::{dist, scripted_expert, ReachGapSpec, WallContact};
pub use stack::{current_frame, FrameStack, STACK_DEPTH};

use crate::action::Action;
use crate::diffnet::Head;
use crate::error::{invalid, Error, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvSpec {
    #[serde(rename = "gridnav")]
    GridNav(GridNavSpec),
    #[serde(rename = "reachgap")]
    ReachGap(ReachGapSpec),
}

impl EnvSpec {
    pub fn name(&self) -> &'static str {
        match self {
            EnvSpec::GridNav(_) => "gridnav",
            EnvSpec::ReachGap(_) => "reachgap",
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            EnvSpec::GridNav(s) => s.horizon,
            EnvSpec::ReachGap(s) => s.horizon,
        }
    }

    pub fn raw_dim(&self) -> usize {
        match self {
            EnvSpec::GridNav(s) => s.raw_dim(),
            EnvSpec::ReachGap(_) => 2,
        }
    }

    pub fn obs_dim(&self) -> usize {
        STACK_DEPTH * self.raw_dim()
    }

    pub fn action_space(&self) -> ActionSpace {
        match self {
            EnvSpec::GridNav(_) => ActionSpace::Discrete(N_GRID_ACTIONS),
            EnvSpec::ReachGap(s) => ActionSpace::Box {
                dim: 2,
                max_norm: s.max_step,
            },
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, EnvSpec::GridNav(_))
    }

    /// Policy head matching the action space. Gaussian means are scaled to
    /// the step limit.
    pub fn policy_head(&self) -> Head {
        match self.action_space() {
            ActionSpace::Discrete(n) => Head::Categorical { n_actions: n },
            ActionSpace::Box { dim, max_norm } => Head::DiagonalGaussian {
                action_dim: dim,
                scale: max_norm,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EnvSpec::GridNav(s) => s.validate(),
            EnvSpec::ReachGap(s) => s.validate(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ActionSpace {
    Discrete(usize),
    Box { dim: usize, max_norm: f64 },
}

/// The true (unstacked) environment state, as the expert sees it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EnvState {
    Grid(usize),
    Reach([f64; 2]),
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub success: bool,
    /// The continuous action exceeded the step limit and was scaled down.
    pub clipped: bool,
}

/// A running episode of either environment.
#[derive(Clone, Debug)]
pub struct Env {
    spec: EnvSpec,
    state: EnvState,
    stack: FrameStack,
    t: usize,
    done: bool,
}

impl Env {
    pub fn new(spec: EnvSpec) -> Result<Self> {
        spec.validate()?;
        let state = match &spec {
            EnvSpec::GridNav(s) => EnvState::Grid(s.starts[0]),
            EnvSpec::ReachGap(s) => EnvState::Reach(s.start_min),
        };
        let stack = FrameStack::new(spec.raw_dim());
        let mut env = Self {
            spec,
            state,
            stack,
            t: 0,
            done: false,
        };
        env.reset(0);
        Ok(env)
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn state(&self) -> EnvState {
        self.state
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn done(&self) -> bool {
        self.done
    }

    pub fn obs(&self) -> Vec<f64> {
        self.stack.obs()
    }

    pub fn raw_state(&self) -> Vec<f64> {
        match (&self.spec, self.state) {
            (EnvSpec::GridNav(s), EnvState::Grid(c)) => s.features(c),
            (_, EnvState::Reach(p)) => p.to_vec(),
            _ => unreachable!(),
        }
    }

    /// Draws an initial state from the start distribution and clears the stack.
    pub fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut r = rng::stream(seed, &[rng::tag::RESET]);
        self.state = match &self.spec {
            EnvSpec::GridNav(s) => EnvState::Grid(s.starts[r.random_range(0..s.starts.len())]),
            EnvSpec::ReachGap(s) => {
                let mut p = [0.0; 2];
                for d in 0..2 {
                    p[d] = if s.start_max[d] > s.start_min[d] {
                        r.random_range(s.start_min[d]..s.start_max[d])
                    } else {
                        s.start_min[d]
                    };
                }
                EnvState::Reach(p)
            }
        };
        self.t = 0;
        self.done = false;
        self.stack.clear();
        self.stack.push(self.raw_state());
        self.obs()
    }

    /// Puts the agent at an explicit state (for fixed-start evaluation grids).
    pub fn reset_to(&mut self, state: EnvState) -> Result<Vec<f64>> {
        match (&self.spec, state) {
            (EnvSpec::GridNav(s), EnvState::Grid(c)) if c < s.n_cells() && s.cells[c] == Cell::Free => {}
            (EnvSpec::ReachGap(_), EnvState::Reach(p)) if p.iter().all(|v| (0.0..=1.0).contains(v)) => {}
            _ => return Err(invalid("reset_to: state does not belong to this environment")),
        }
        self.state = state;
        self.t = 0;
        self.done = false;
        self.stack.clear();
        self.stack.push(self.raw_state());
        Ok(self.obs())
    }

    pub fn step(&mut self, action: &Action) -> Result<StepResult> {
        if self.done {
            return Err(invalid("step called on a finished episode"));
        }
        let (reward, terminal, success, clipped) = match (&self.spec, self.state, action) {
            (EnvSpec::GridNav(s), EnvState::Grid(cell), Action::Discrete(a)) => {
                if *a >= N_GRID_ACTIONS {
                    return Err(invalid(format!("gridnav action {a} out of range")));
                }
                let next = s.next_cell(cell, *a);
                self.state = EnvState::Grid(next);
                (s.reward(next), s.is_terminal(next), next == s.goal, false)
            }
            (EnvSpec::ReachGap(s), EnvState::Reach(p), Action::Continuous(a)) => {
                if a.len() != 2 {
                    return Err(Error::Dim {
                        what: "reachgap action",
                        expected: 2,
                        got: a.len(),
                    });
                }
                if a.iter().any(|v| !v.is_finite()) {
                    return Err(invalid("reachgap action must be finite"));
                }
                let (d, clipped) = s.clip(a);
                let to = [(p[0] + d[0]).clamp(0.0, 1.0), (p[1] + d[1]).clamp(0.0, 1.0)];
                if s.crosses_wall(p, to) {
                    match s.wall_contact {
                        WallContact::Terminal => (s.crash_reward, true, false, clipped),
                        WallContact::Block => (s.step_reward, false, false, clipped),
                    }
                } else {
                    self.state = EnvState::Reach(to);
                    if s.at_goal(to) {
                        (s.goal_reward, true, true, clipped)
                    } else {
                        (s.step_reward, false, false, clipped)
                    }
                }
            }
            _ => return Err(invalid("action kind does not match the environment")),
        };
        self.t += 1;
        self.done = terminal || self.t >= self.spec.horizon();
        self.stack.push(self.raw_state());
        Ok(StepResult {
            obs: self.obs(),
            reward,
            done: self.done,
            success,
            clipped,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gridnav_fixed_start_is_fixed() {
        let spec = EnvSpec::GridNav(GridNavSpec::default());
        let mut env = Env::new(spec).unwrap();
        let a = env.reset(1);
        let b = env.reset(999);
        assert_eq!(a, b);
        assert_eq!(env.state(), EnvState::Grid(0));
    }

    #[test]
    fn reachgap_reset_is_deterministic() {
        let mut env = Env::new(EnvSpec::ReachGap(ReachGapSpec::default())).unwrap();
        let a = env.reset(7);
        let b = env.reset(7);
        assert_eq!(a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), b.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        let c = env.reset(8);
        assert_ne!(a, c);
    }

    #[test]
    fn initial_stack_is_zero_padded() {
        let mut env = Env::new(EnvSpec::ReachGap(ReachGapSpec::default())).unwrap();
        let obs = env.reset(3);
        assert_eq!(obs.len(), 8);
        assert!(obs[2..].iter().all(|v| *v == 0.0));
        assert_eq!(&obs[..2], env.raw_state().as_slice());
    }

    #[test]
    fn gridnav_blocked_move_costs_a_step() {
        let spec = GridNavSpec::from_ascii("S#G\n...").unwrap();
        let mut env = Env::new(EnvSpec::GridNav(spec)).unwrap();
        env.reset(0);
        let r = env.step(&Action::Discrete(3)).unwrap();
        assert_eq!(env.state(), EnvState::Grid(0));
        assert_eq!(r.reward, -0.01);
        assert!(!r.done);
    }

    #[test]
    fn gridnav_goal_step_succeeds() {
        let spec = GridNavSpec::from_ascii("SG").unwrap();
        let mut env = Env::new(EnvSpec::GridNav(spec)).unwrap();
        env.reset(0);
        let r = env.step(&Action::Discrete(3)).unwrap();
        assert_eq!((r.reward, r.done, r.success), (1.0, true, true));
        assert!(env.step(&Action::Discrete(0)).is_err());
    }

    #[test]
    fn gridnav_hazard_ends_in_failure() {
        let spec = GridNavSpec::from_ascii("SH\n.G").unwrap();
        let mut env = Env::new(EnvSpec::GridNav(spec)).unwrap();
        env.reset(0);
        let r = env.step(&Action::Discrete(3)).unwrap();
        assert_eq!((r.reward, r.done, r.success), (-1.0, true, false));
    }

    #[test]
    fn reachgap_clips_long_moves() {
        let mut env = Env::new(EnvSpec::ReachGap(ReachGapSpec::default())).unwrap();
        env.reset_to(EnvState::Reach([0.2, 0.6])).unwrap();
        let r = env.step(&Action::Continuous(vec![0.0, 0.2])).unwrap();
        assert!(r.clipped);
        match env.state() {
            EnvState::Reach(p) => assert!((dist(p, [0.2, 0.6]) - 0.05).abs() < 1e-12),
            _ => panic!(),
        }
    }

    #[test]
    fn reachgap_wall_contact_is_terminal() {
        let mut env = Env::new(EnvSpec::ReachGap(ReachGapSpec::default())).unwrap();
        env.reset_to(EnvState::Reach([0.48, 0.7])).unwrap();
        let r = env.step(&Action::Continuous(vec![0.04, 0.0])).unwrap();
        assert!(r.done && !r.success);
    }

    #[test]
    fn horizon_bounds_episodes() {
        let spec = GridNavSpec {
            horizon: 3,
            ..GridNavSpec::default()
        };
        let mut env = Env::new(EnvSpec::GridNav(spec)).unwrap();
        env.reset(0);
        let mut n = 0;
        loop {
            n += 1;
            if env.step(&Action::Discrete(4)).unwrap().done {
                break;
            }
        }
        assert_eq!(n, 3);
    }

    #[test]
    fn stack_holds_last_four_frames() {
        let spec = GridNavSpec::from_ascii("S.....G").unwrap();
        let mut env = Env::new(EnvSpec::GridNav(spec.clone())).unwrap();
        env.reset(0);
        let mut history = vec![env.raw_state()];
        for _ in 0..4 {
            env.step(&Action::Discrete(3)).unwrap();
            history.push(env.raw_state());
        }
        let obs = env.obs();
        let d = spec.raw_dim();
        for k in 0..4 {
            assert_eq!(&obs[k * d..(k + 1) * d], history[history.len() - 1 - k].as_slice());
        }
    }
}
