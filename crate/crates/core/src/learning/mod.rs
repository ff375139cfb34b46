//! MILE training: intervention-model losses, joint policy / mental-model
//! updates, and the deploy-then-learn loop.

mod loss;
mod run;
mod train;

pub use loss::{
    class_nll, loss_discrete, loss_j1, loss_j2, loss_total, predicted_classes, predicted_intervention,
    LabelMode, LossConfig, LossOutput,
};
pub use run::{eval_seed, run_interactive, train_round, BaselineConfig, IterMetrics, Method, RunOutcome, Setup};
pub use train::{batch_noise, epoch_plan, learn, TrainConfig, TrainState};
