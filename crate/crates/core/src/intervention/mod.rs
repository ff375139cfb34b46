//! The intervention model: a probit gate on the advantage of the human's
//! nominal action over what they expect the robot to do.

mod continuous;
mod discrete;
mod gate;

pub use continuous::{intervene_prob_continuous, noise_bank, ContinuousGate, GaussPairGrad};
pub use discrete::{
    action_deltas, intervene_prob_discrete, joint_action_distribution, q_form_intervene_prob,
    Estimator, InterventionEstimate, LOG_FLOOR,
};
pub use gate::{boltzmann_policy, boltzmann_policy_t, probit_gate, InterventionParams};
