use crate::action::Action;
use crate::diffnet::{DistOutput, VAR_FLOOR};
use crate::error::{invalid, Result};
use crate::math;

use super::gridnav::{GridNavSpec, QTable};
use super::reachgap::{scripted_expert, ReachGapSpec};
use super::{EnvSpec, EnvState};

/// Ground-truth expert: Boltzmann over Q* on GridNav, scripted gaussian on
/// ReachGap.
#[derive(Clone, Debug)]
pub enum Expert {
    Grid {
        spec: GridNavSpec,
        q: QTable,
        temperature: f64,
    },
    Reach {
        spec: ReachGapSpec,
        noise_std: f64,
    },
}

impl Expert {
    /// Solves GridNav by value iteration or wraps the scripted controller.
    pub fn for_env(env: &EnvSpec, temperature: f64, noise_std: f64) -> Result<Self> {
        match env {
            EnvSpec::GridNav(s) => {
                if !(temperature > 0.0) {
                    return Err(invalid("expert temperature must be > 0"));
                }
                let q = super::value_iteration(s, s.gamma, 1e-10)?;
                Ok(Expert::Grid {
                    spec: s.clone(),
                    q,
                    temperature,
                })
            }
            EnvSpec::ReachGap(s) => {
                if !(noise_std >= 0.0) {
                    return Err(invalid("expert noise_std must be >= 0"));
                }
                Ok(Expert::Reach {
                    spec: s.clone(),
                    noise_std,
                })
            }
        }
    }

    pub fn dist(&self, state: &EnvState) -> DistOutput {
        match (self, state) {
            (Expert::Grid { q, temperature, .. }, EnvState::Grid(c)) => {
                let scaled: Vec<f64> = q.values(*c).iter().map(|v| v / temperature).collect();
                let log_probs = math::log_softmax(&scaled);
                let probs = log_probs.iter().map(|l| l.exp()).collect();
                DistOutput::Categorical { probs, log_probs }
            }
            (Expert::Reach { spec, noise_std }, EnvState::Reach(p)) => {
                let mut d = scripted_expert(spec, *p, *noise_std);
                if let DistOutput::Gaussian { var, .. } = &mut d {
                    for v in var.iter_mut() {
                        *v = v.max(VAR_FLOOR);
                    }
                }
                d
            }
            _ => panic!("expert and state belong to different environments"),
        }
    }

    /// Noiseless action: greedy on Q* or the scripted mean.
    pub fn mode(&self, state: &EnvState) -> Action {
        match (self, state) {
            (Expert::Grid { q, .. }, EnvState::Grid(c)) => Action::Discrete(q.greedy(*c)),
            _ => self.dist(state).mode(),
        }
    }

    pub fn q_values(&self, state: &EnvState) -> Option<Vec<f64>> {
        match (self, state) {
            (Expert::Grid { q, temperature, .. }, EnvState::Grid(c)) => {
                Some(q.values(*c).iter().map(|v| v / temperature).collect())
            }
            _ => None,
        }
    }
}
