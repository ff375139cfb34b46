use serde::{Deserialize, Serialize};

use crate::envs::{Cell, EnvSpec, EnvState};

fn one() -> usize {
    1
}

/// Client to server.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMsg {
    StartEpisode,
    Intervene {
        on: bool,
    },
    Action {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        key: Option<String>,
    },
    Train {
        #[serde(default = "one")]
        iterations: usize,
    },
    Stats,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Owner {
    #[default]
    Robot,
    Human,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    #[default]
    Idle,
    Running,
    Training,
}

/// Rendering payload: the world as the human sees it. Carries no robot
/// action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum View {
    Gridnav {
        width: usize,
        height: usize,
        /// `[row, col]`
        agent: [usize; 2],
        goal: [usize; 2],
        walls: Vec<[usize; 2]>,
        hazards: Vec<[usize; 2]>,
    },
    Reachgap {
        agent: [f64; 2],
        goal: [f64; 2],
        success_radius: f64,
        wall_x: f64,
        gap_center_y: f64,
        gap_half_width: f64,
    },
}

impl View {
    pub fn of(spec: &EnvSpec, state: &EnvState) -> Self {
        match (spec, state) {
            (EnvSpec::GridNav(g), EnvState::Grid(cell)) => {
                let rc = |i: usize| [i / g.width, i % g.width];
                let of_kind = |k: Cell| {
                    g.cells
                        .iter()
                        .enumerate()
                        .filter(|(_, c)| **c == k)
                        .map(|(i, _)| rc(i))
                        .collect()
                };
                View::Gridnav {
                    width: g.width,
                    height: g.height,
                    agent: rc(*cell),
                    goal: rc(g.goal),
                    walls: of_kind(Cell::Wall),
                    hazards: of_kind(Cell::Hazard),
                }
            }
            (EnvSpec::ReachGap(r), EnvState::Reach(p)) => View::Reachgap {
                agent: *p,
                goal: r.goal,
                success_radius: r.success_radius,
                wall_x: r.wall_x,
                gap_center_y: r.gap_center_y,
                gap_half_width: r.gap_half_width,
            },
            _ => unreachable!("env state always matches its spec"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub session: String,
    pub episode: u64,
    pub t: u64,
    /// Who controls the next step.
    pub owner: Owner,
    pub phase: Phase,
    pub done: bool,
    pub success: bool,
    /// Last frame of an episode.
    #[serde(rename = "final")]
    pub final_frame: bool,
    pub reward: f64,
    pub view: View,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterStat {
    pub iter: u64,
    pub episodes: u64,
    pub intervention_rate: f64,
    pub success_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub iteration: u64,
    pub episodes: u64,
    pub records: u64,
    pub interventions: u64,
    pub intervention_rate: f64,
    /// Success over the last 20 recorded episodes.
    pub success_rate: f64,
    /// Evaluation of the serving policy after the latest training round.
    pub eval_success_rate: Option<f64>,
    pub per_iter: Vec<IterStat>,
}

/// Server to client.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMsg {
    Frame(Frame),
    TrainProgress {
        iteration: u64,
        epoch: usize,
        loss: f64,
    },
    TrainDone {
        iteration: u64,
        policy_hash: String,
        eval_success_rate: f64,
    },
    Stats(Stats),
    Ack {
        of: String,
        owner: Owner,
        phase: Phase,
    },
    Notice {
        msg: String,
    },
    Error {
        msg: String,
    },
}

impl ServerMsg {
    pub fn error(msg: impl Into<String>) -> Self {
        ServerMsg::Error { msg: msg.into() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}
