//! Live intervention sessions over WebSocket.

mod protocol;
mod server;
mod session;

pub use protocol::{ClientMsg, Frame, IterStat, Owner, Phase, ServerMsg, Stats, View};
pub use server::{
    build_session, default_session_config, router, run_server, serve, spawn_session, ServeOptions, SessionHandle,
    PROTOCOL_SCHEMA,
};
pub use session::{policy_hash, Handled, HoldPolicy, Session, SessionConfig, TrainJob};
