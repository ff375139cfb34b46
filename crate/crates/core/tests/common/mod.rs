#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::Path;

use futures::{SinkExt, StreamExt};
use mile_lab::datastore::{DatasetFilter, RunStore};
use mile_lab::diffnet::{Mlp, NetSpec};
use mile_lab::envs::{make_initial_policy, value_iteration, EnvSpec, Expert, GridNavSpec, InitialConfig, QTable};
use mile_lab::learning::{eval_seed, learn, TrainState};
use mile_lab::live::{default_session_config, run_server, Session, SessionConfig};
use mile_lab::rollout::evaluate_policy;
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio_tungstenite::tungstenite::Message;

pub struct LiveFixture {
    pub cfg: SessionConfig,
    pub policy: Mlp,
    pub mental: Mlp,
}

/// A small GridNav session: a corrupted-expert BC policy serving, its own
/// copy as the mental model.
pub fn gridnav_fixture(seed: u64) -> LiveFixture {
    let env = EnvSpec::GridNav(GridNavSpec::default());
    let mut cfg = default_session_config(&env);
    cfg.seed = seed;
    cfg.train.m = 30;
    cfg.eval_episodes = 100;
    let expert = Expert::for_env(&env, 0.01, 0.0).unwrap();
    let initial = InitialConfig {
        corruption: 0.6,
        band: None,
        ..Default::default()
    };
    let net = NetSpec::new(env.obs_dim(), vec![32, 32], env.policy_head());
    let (policy, _) = make_initial_policy(&env, &expert, net, &initial, seed).unwrap();
    LiveFixture {
        cfg,
        mental: policy.clone(),
        policy,
    }
}

pub async fn start(fx: &LiveFixture, dir: &Path, tick_hz: f64) -> SocketAddr {
    let session = Session::new("test".into(), fx.cfg.clone(), fx.policy.clone(), fx.mental.clone(), Some(dir)).unwrap();
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(run_server(listener, session, tick_hz));
    addr
}

pub type Ws = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

pub async fn connect(addr: SocketAddr) -> Ws {
    let (ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/session")).await.unwrap();
    ws
}

pub async fn send(ws: &mut Ws, v: Value) {
    ws.send(Message::Text(v.to_string().into())).await.unwrap();
}

/// Next JSON text message, with a timeout.
pub async fn recv(ws: &mut Ws) -> Value {
    loop {
        let msg = tokio::time::timeout(std::time::Duration::from_secs(120), ws.next())
            .await
            .expect("server went quiet")
            .expect("stream ended")
            .unwrap();
        if let Message::Text(t) = msg {
            return serde_json::from_str(&t).unwrap();
        }
    }
}

/// Reads until a message of type `ty` arrives; returns it and everything
/// skipped on the way.
pub async fn recv_until(ws: &mut Ws, ty: &str) -> (Value, Vec<Value>) {
    let mut seen = Vec::new();
    loop {
        let v = recv(ws).await;
        if v["type"] == ty {
            return (v, seen);
        }
        seen.push(v);
    }
}

const KEYS: [&str; 5] = ["up", "down", "left", "right", "stay"];

fn near_hazard(v: &Value) -> bool {
    let a = &v["view"]["agent"];
    let (r, c) = (a[0].as_i64().unwrap(), a[1].as_i64().unwrap());
    v["view"]["hazards"]
        .as_array()
        .unwrap()
        .iter()
        .any(|h| (h[0].as_i64().unwrap() - r).abs() + (h[1].as_i64().unwrap() - c).abs() <= 1)
}

fn cell(v: &Value) -> usize {
    let w = v["view"]["width"].as_u64().unwrap() as usize;
    let a = &v["view"]["agent"];
    a[0].as_u64().unwrap() as usize * w + a[1].as_u64().unwrap() as usize
}

pub struct Replay {
    pub episodes: usize,
    pub takeovers: usize,
    pub train_done: Value,
    pub progress: usize,
}

/// Scripted operator: takes over next to hazards and steers with the
/// expert's greedy action, hands back once clear. Plays `episodes`
/// episodes, then asks for one training round.
pub async fn scripted_round(ws: &mut Ws, q: &QTable, episodes: usize) -> Replay {
    let mut takeovers = 0;
    for _ in 0..episodes {
        send(ws, json!({"type": "start_episode"})).await;
        let mut human = false;
        loop {
            let (f, _) = recv_until(ws, "frame").await;
            if f["final"].as_bool().unwrap() {
                break;
            }
            let want = near_hazard(&f);
            if want != human {
                send(ws, json!({"type": "intervene", "on": want})).await;
                human = want;
                takeovers += usize::from(want);
            }
            if human {
                send(ws, json!({"type": "action", "key": KEYS[q.greedy(cell(&f))]})).await;
            }
        }
    }
    send(ws, json!({"type": "train", "iterations": 1})).await;
    let (done, skipped) = recv_until(ws, "train_done").await;
    Replay {
        episodes,
        takeovers,
        progress: skipped.iter().filter(|v| v["type"] == "train_progress").count(),
        train_done: done,
    }
}

pub fn gridnav_q() -> QTable {
    let g = GridNavSpec::default();
    value_iteration(&g, g.gamma, 1e-10).unwrap()
}

/// The offline pipeline on the session's recorded data: same start state,
/// same seed, same evaluation streams.
pub fn offline_eval(fx: &LiveFixture, dir: &Path, iteration: u64) -> (f64, Mlp) {
    let store = RunStore::open(dir.join("store")).unwrap();
    let data = store.load_dataset(&DatasetFilter::default()).unwrap();
    let mut state = TrainState::new(fx.policy.clone(), fx.mental.clone());
    for it in 1..=iteration {
        state.iteration = it;
        learn(&mut state, &data, &fx.cfg.loss, &fx.cfg.train, fx.cfg.seed, &mut |_, _| {}).unwrap();
    }
    let ev = evaluate_policy(
        &fx.cfg.env,
        &state.policy,
        fx.cfg.eval_episodes,
        eval_seed(fx.cfg.seed, iteration),
        fx.cfg.eval_mode,
    )
    .unwrap();
    (ev.success_rate, state.policy)
}
