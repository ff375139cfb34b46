use std::path::PathBuf;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use tokio::net::TcpListener;
use tokio::sync::{broadcast, mpsc};
use tokio::time::MissedTickBehavior;

use crate::diffnet::load_net;
use crate::envs::{make_initial_policy, EnvSpec, Expert, InitialConfig};
use crate::error::{invalid, Error, Result};
use crate::harness::ExperimentConfig;
use crate::intervention::InterventionParams;
use crate::learning::{LossConfig, TrainConfig, TrainState};
use crate::rng::{self, tag};
use crate::rollout::ActMode;

use super::protocol::{ClientMsg, ServerMsg};
use super::session::{Handled, HoldPolicy, Session, SessionConfig};

pub const PROTOCOL_SCHEMA: &str = include_str!("../../schema/live-protocol.schema.json");

const INDEX: &str = r#"<!doctype html>
<html><head><meta charset="utf-8"><title>mile-lab session</title></head>
<body>
<h1>mile-lab live session</h1>
<p>Connect a client to the <code>/session</code> WebSocket. Message schema: <a href="/schema.json">/schema.json</a>.</p>
</body></html>
"#;

#[derive(Clone, Debug)]
pub struct ServeOptions {
    pub env: EnvSpec,
    pub config: Option<ExperimentConfig>,
    /// Directory with `policy.*` (and optionally `mental.*`).
    pub checkpoint: Option<PathBuf>,
    pub tick_hz: f64,
    /// Root for `live-<id>/` recordings.
    pub out: PathBuf,
}

/// Gate and training defaults for sessions started without a config.
pub fn default_session_config(env: &EnvSpec) -> SessionConfig {
    let params = match env {
        EnvSpec::GridNav(_) => InterventionParams { c: 3.0, sigma: 1.0 },
        EnvSpec::ReachGap(_) => InterventionParams { c: 60.0, sigma: 20.0 },
    };
    SessionConfig {
        env: env.clone(),
        loss: LossConfig {
            params,
            ..Default::default()
        },
        train: TrainConfig {
            n_iters: 6,
            k: 3,
            ..Default::default()
        },
        hold: HoldPolicy::Repeat,
        seed: 0,
        eval_episodes: 20,
        eval_mode: ActMode::Sample,
    }
}

fn session_config(opts: &ServeOptions) -> SessionConfig {
    match &opts.config {
        Some(cfg) => SessionConfig {
            env: cfg.env.clone(),
            loss: cfg.loss_config(),
            train: cfg.train_config(),
            hold: HoldPolicy::Repeat,
            seed: cfg.seeds[0],
            eval_episodes: 20,
            eval_mode: cfg.eval_mode,
        },
        None => default_session_config(&opts.env),
    }
}

/// Loads or trains the serving policy and opens a recording directory.
pub fn build_session(opts: &ServeOptions) -> Result<Session> {
    let cfg = session_config(opts);
    let (policy, mental) = match &opts.checkpoint {
        Some(dir) => {
            let policy = load_net(dir, "policy")?;
            let mental = if dir.join("mental.json").exists() {
                load_net(dir, "mental")?
            } else {
                policy.clone()
            };
            (policy, mental)
        }
        None => {
            let (temperature, noise, initial, net) = match &opts.config {
                Some(c) => (c.expert.temperature, c.expert.noise_std, c.initial.clone(), c.net_spec()),
                None => {
                    let net = crate::diffnet::NetSpec::new(cfg.env.obs_dim(), vec![64, 64], cfg.env.policy_head());
                    let initial = InitialConfig {
                        band: None,
                        ..Default::default()
                    };
                    (0.01, 0.005, initial, net)
                }
            };
            let expert = Expert::for_env(&cfg.env, temperature, noise)?;
            let (policy, rate) = make_initial_policy(&cfg.env, &expert, net, &initial, cfg.seed)?;
            log::info!("initial policy success {rate:.3}");
            (policy.clone(), policy)
        }
    };
    if policy.spec().input_dim != cfg.env.obs_dim() {
        return Err(invalid(format!(
            "checkpoint policy expects {} inputs but env `{}` produces {}",
            policy.spec().input_dim,
            cfg.env.name(),
            cfg.env.obs_dim()
        )));
    }
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0);
    let id = format!("{:x}", rng::mix(stamp, &[tag::INIT]) & 0xffff_ffff);
    let dir = opts.out.join(format!("live-{id}"));
    Session::new(id, cfg, policy, mental, Some(&dir))
}

enum Cmd {
    Client(String, mpsc::UnboundedSender<String>),
    Trained(Result<TrainState>),
}

#[derive(Clone)]
pub struct SessionHandle {
    cmd: mpsc::UnboundedSender<Cmd>,
    events: broadcast::Sender<String>,
}

/// Starts the session loop on the current runtime. The loop owns the
/// session: messages and ticks are applied one at a time, messages first.
pub fn spawn_session(session: Session, tick_hz: f64) -> Result<SessionHandle> {
    if !(tick_hz > 0.0 && tick_hz.is_finite()) {
        return Err(invalid("tick rate must be a positive number"));
    }
    let (tx, rx) = mpsc::unbounded_channel();
    let (events, _) = broadcast::channel(4096);
    let handle = SessionHandle {
        cmd: tx.clone(),
        events: events.clone(),
    };
    tokio::spawn(session_loop(session, Duration::from_secs_f64(1.0 / tick_hz), rx, tx, events));
    Ok(handle)
}

async fn session_loop(
    mut s: Session,
    period: Duration,
    mut rx: mpsc::UnboundedReceiver<Cmd>,
    tx: mpsc::UnboundedSender<Cmd>,
    events: broadcast::Sender<String>,
) {
    let mut ticker = tokio::time::interval(period);
    ticker.set_missed_tick_behavior(MissedTickBehavior::Delay);
    let emit = |m: ServerMsg| {
        let _ = events.send(m.to_json());
    };
    loop {
        tokio::select! {
            biased;
            cmd = rx.recv() => {
                let Some(cmd) = cmd else { break };
                match cmd {
                    Cmd::Client(text, reply) => {
                        let h = match serde_json::from_str::<ClientMsg>(&text) {
                            Ok(m) => s.handle(m),
                            Err(e) => Handled {
                                replies: vec![ServerMsg::error(format!("malformed message: {e}"))],
                                ..Default::default()
                            },
                        };
                        for r in h.replies {
                            let _ = reply.send(r.to_json());
                        }
                        h.broadcast.into_iter().for_each(emit);
                        if let Some(job) = h.job {
                            let ev = events.clone();
                            let tx = tx.clone();
                            tokio::task::spawn_blocking(move || {
                                let res = job.run(&mut |iteration, epoch, loss| {
                                    let _ = ev.send(ServerMsg::TrainProgress { iteration, epoch, loss }.to_json());
                                });
                                let _ = tx.send(Cmd::Trained(res));
                            });
                        }
                    }
                    Cmd::Trained(res) => s.finish_training(res).into_iter().for_each(emit),
                }
            }
            _ = ticker.tick() => match s.tick() {
                Ok(Some(f)) => emit(ServerMsg::Frame(f)),
                Ok(None) => {}
                Err(e) => {
                    s.abort_episode();
                    emit(ServerMsg::error(format!("episode aborted: {e}")));
                }
            },
        }
    }
}

pub fn router(handle: SessionHandle) -> Router {
    Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/", get(|| async { Html(INDEX) }))
        .route(
            "/schema.json",
            get(|| async { ([(axum::http::header::CONTENT_TYPE, "application/json")], PROTOCOL_SCHEMA) }),
        )
        .route("/session", get(ws_upgrade))
        .with_state(handle)
}

async fn ws_upgrade(ws: WebSocketUpgrade, State(h): State<SessionHandle>) -> Response {
    ws.on_upgrade(move |socket| client(socket, h)).into_response()
}

async fn client(socket: WebSocket, h: SessionHandle) {
    let (mut sink, mut stream) = socket.split();
    let (reply_tx, mut reply_rx) = mpsc::unbounded_channel::<String>();
    let mut events = h.events.subscribe();
    loop {
        let out = tokio::select! {
            msg = stream.next() => match msg {
                Some(Ok(Message::Text(t))) => {
                    if h.cmd.send(Cmd::Client(t.to_string(), reply_tx.clone())).is_err() {
                        break;
                    }
                    continue;
                }
                Some(Ok(Message::Binary(_))) => ServerMsg::error("binary frames are not supported").to_json(),
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => continue,
            },
            Some(r) = reply_rx.recv() => r,
            ev = events.recv() => match ev {
                Ok(t) => t,
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    log::warn!("client lagged; {n} messages dropped");
                    continue;
                }
                Err(broadcast::error::RecvError::Closed) => break,
            },
        };
        if sink.send(Message::Text(out.into())).await.is_err() {
            break;
        }
    }
}

/// Serves `session` on `listener` until the server stops.
pub async fn run_server(listener: TcpListener, session: Session, tick_hz: f64) -> Result<()> {
    let handle = spawn_session(session, tick_hz)?;
    axum::serve(listener, router(handle)).await.map_err(Error::Io)
}

pub async fn serve(opts: ServeOptions, port: u16) -> Result<()> {
    let o = opts.clone();
    let session = tokio::task::spawn_blocking(move || build_session(&o))
        .await
        .map_err(|e| Error::Session(format!("session setup panicked: {e}")))??;
    let listener = TcpListener::bind(("127.0.0.1", port)).await?;
    log::info!(
        "session {} on http://{} (env {}, {} Hz)",
        session.id,
        listener.local_addr()?,
        opts.env.name(),
        opts.tick_hz
    );
    run_server(listener, session, opts.tick_hz).await
}

