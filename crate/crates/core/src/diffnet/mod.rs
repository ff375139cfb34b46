//! Small feed-forward networks with hand-written reverse-mode gradients,
//! an Adam optimizer, finite-difference gradient checking, and a flat
//! binary parameter format.

mod adam;
mod gradcheck;
mod io;
mod mlp;

pub use adam::Adam;
pub use gradcheck::{grad_check, GradCheckReport};
pub use io::{load_adam, load_net, save_adam, save_net, NetSidecar, LAYOUT_VERSION};
pub(crate) use mlp::sample_index;
pub use mlp::{
    Activation, DistAdjoint, DistOutput, Head, LayerLayout, Mlp, NetSpec, Tape, VAR_FLOOR,
};
