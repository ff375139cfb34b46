//! Intervention-model imitation learning: a differentiable model of when and
//! how a supervising expert takes control, and the training loop that learns
//! a policy and a mental-model network from sparse takeovers.

pub mod action;
pub mod baselines;
pub mod bc;
pub mod datastore;
pub mod diffnet;
pub mod envs;
pub mod error;
pub mod harness;
pub mod intervention;
pub mod learning;
pub mod live;
pub mod math;
pub mod rng;
pub mod rollout;
pub mod sim_human;

pub use action::Action;
pub use error::{Error, Result};
