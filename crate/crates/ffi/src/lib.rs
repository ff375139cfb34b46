//! C ABI over mile-lab: environments, policy checkpoints and the
//! intervention model. Handles are opaque; every call returns a
//! `MileStatus` and leaves a message for `mile_last_error_message` on
//! failure.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use mile_lab::diffnet::{load_net, DistOutput, Mlp};
use mile_lab::envs::{Env, EnvSpec, GridNavSpec, ReachGapSpec, StepResult};
use mile_lab::intervention::{
    intervene_prob_discrete, joint_action_distribution, probit_gate, q_form_intervene_prob, InterventionParams,
};
use mile_lab::{Action, Error};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MileStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Io = 4,
    BufferTooSmall = 5,
    Internal = 6,
}

/// An environment instance.
pub struct MileEnv {
    env: Env,
}

/// A policy network loaded from a checkpoint.
pub struct MilePolicy {
    net: Mlp,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).expect("nul bytes removed"));
}

fn fail(status: MileStatus, msg: impl Into<String>) -> MileStatus {
    set_error(msg);
    status
}

fn from_err(e: Error) -> MileStatus {
    let status = match &e {
        Error::Dim { .. } => MileStatus::DimensionMismatch,
        Error::Io(_) | Error::Json(_) | Error::Corrupt { .. } | Error::LayoutVersion { .. } => MileStatus::Io,
        Error::Invalid(_) | Error::NonFinite { .. } | Error::Record { .. } => MileStatus::InvalidArgument,
        _ => MileStatus::Internal,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> MileStatus) -> MileStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(MileStatus::Internal, "internal panic"),
    }
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize) -> Option<&'a [T]> {
    if ptr.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(ptr, len))
    }
}

unsafe fn slice_mut<'a, T>(ptr: *mut T, len: usize) -> Option<&'a mut [T]> {
    if ptr.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts_mut(ptr, len))
    }
}

unsafe fn c_str<'a>(ptr: *const c_char) -> Result<&'a str, MileStatus> {
    if ptr.is_null() {
        return Err(fail(MileStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| fail(MileStatus::InvalidArgument, "string is not UTF-8"))
}

fn params(c: f64, sigma: f64) -> Result<InterventionParams, MileStatus> {
    InterventionParams::new(c, sigma).map_err(from_err)
}

macro_rules! try_status {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(MileStatus::NullPointer, concat!("`", stringify!($p), "` is null"));
        })+
    };
}

/// Message of the last failed call on this thread; empty if none. Valid
/// until the next call on the same thread.
#[no_mangle]
pub extern "C" fn mile_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

fn new_env(spec: EnvSpec, out: *mut *mut MileEnv) -> MileStatus {
    non_null!(out);
    let env = try_status!(Env::new(spec).map_err(from_err));
    unsafe { *out = Box::into_raw(Box::new(MileEnv { env })) };
    MileStatus::Ok
}

/// GridNav with the built-in 8x8 map.
#[no_mangle]
pub extern "C" fn mile_env_new_gridnav(out: *mut *mut MileEnv) -> MileStatus {
    guard(|| new_env(EnvSpec::GridNav(GridNavSpec::default()), out))
}

/// ReachGap2D with default geometry.
#[no_mangle]
pub extern "C" fn mile_env_new_reachgap(out: *mut *mut MileEnv) -> MileStatus {
    guard(|| new_env(EnvSpec::ReachGap(ReachGapSpec::default()), out))
}

/// An environment from its JSON spec, e.g. `{"kind":"gridnav","map":"..."}`.
///
/// # Safety
/// `json` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mile_env_new_from_json(json: *const c_char, out: *mut *mut MileEnv) -> MileStatus {
    guard(|| {
        let text = try_status!(c_str(json));
        let spec: EnvSpec = try_status!(serde_json::from_str(text)
            .map_err(|e| fail(MileStatus::InvalidArgument, format!("env spec: {e}"))));
        new_env(spec, out)
    })
}

/// # Safety
/// `env` must come from a `mile_env_new_*` call and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mile_env_free(env: *mut MileEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Stacked observation length, number of discrete actions (0 if
/// continuous) and continuous action dimension (0 if discrete).
///
/// # Safety
/// `env` must be a live handle; outputs may be null.
#[no_mangle]
pub unsafe extern "C" fn mile_env_dims(
    env: *const MileEnv,
    obs_dim: *mut usize,
    n_actions: *mut usize,
    action_dim: *mut usize,
) -> MileStatus {
    guard(|| {
        non_null!(env);
        let spec = (*env).env.spec();
        let (n, d) = match spec.action_space() {
            mile_lab::envs::ActionSpace::Discrete(n) => (n, 0),
            mile_lab::envs::ActionSpace::Box { dim, .. } => (0, dim),
        };
        for (p, v) in [(obs_dim, spec.obs_dim()), (n_actions, n), (action_dim, d)] {
            if !p.is_null() {
                *p = v;
            }
        }
        MileStatus::Ok
    })
}

unsafe fn write_obs(obs: &[f64], out: *mut f64, len: usize) -> MileStatus {
    let dst = match slice_mut(out, len) {
        Some(d) => d,
        None => return fail(MileStatus::NullPointer, "`obs_out` is null"),
    };
    if len < obs.len() {
        return fail(
            MileStatus::BufferTooSmall,
            format!("observation needs {} slots, buffer has {len}", obs.len()),
        );
    }
    dst[..obs.len()].copy_from_slice(obs);
    MileStatus::Ok
}

/// Starts an episode; writes the first stacked observation.
///
/// # Safety
/// `env` must be a live handle and `obs_out` point to `obs_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mile_env_reset(env: *mut MileEnv, seed: u64, obs_out: *mut f64, obs_len: usize) -> MileStatus {
    guard(|| {
        non_null!(env);
        let obs = (*env).env.reset(seed);
        write_obs(&obs, obs_out, obs_len)
    })
}

unsafe fn step(
    env: *mut MileEnv,
    action: Action,
    obs_out: *mut f64,
    obs_len: usize,
    reward: *mut f64,
    done: *mut bool,
    success: *mut bool,
) -> MileStatus {
    non_null!(env);
    if !obs_out.is_null() && obs_len < (*env).env.spec().obs_dim() {
        return fail(MileStatus::BufferTooSmall, "observation buffer too small");
    }
    let r: StepResult = try_status!((*env).env.step(&action).map_err(from_err));
    if !obs_out.is_null() {
        try_status!(match write_obs(&r.obs, obs_out, obs_len) {
            MileStatus::Ok => Ok(()),
            s => Err(s),
        });
    }
    if !reward.is_null() {
        *reward = r.reward;
    }
    if !done.is_null() {
        *done = r.done;
    }
    if !success.is_null() {
        *success = r.success;
    }
    MileStatus::Ok
}

/// One step with a discrete action. Output pointers may be null.
///
/// # Safety
/// `env` must be a live handle; `obs_out`, if not null, must hold `obs_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mile_env_step_discrete(
    env: *mut MileEnv,
    action: usize,
    obs_out: *mut f64,
    obs_len: usize,
    reward: *mut f64,
    done: *mut bool,
    success: *mut bool,
) -> MileStatus {
    guard(|| step(env, Action::Discrete(action), obs_out, obs_len, reward, done, success))
}

/// One step with a continuous action of `action_len` components.
///
/// # Safety
/// As `mile_env_step_discrete`; `action` must hold `action_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mile_env_step_continuous(
    env: *mut MileEnv,
    action: *const f64,
    action_len: usize,
    obs_out: *mut f64,
    obs_len: usize,
    reward: *mut f64,
    done: *mut bool,
    success: *mut bool,
) -> MileStatus {
    guard(|| {
        let a = match slice(action, action_len) {
            Some(a) => a.to_vec(),
            None => return fail(MileStatus::NullPointer, "`action` is null"),
        };
        step(env, Action::Continuous(a), obs_out, obs_len, reward, done, success)
    })
}

/// Loads `<dir>/<stem>.bin` + `<stem>.json`, as written by checkpoints
/// (stem `policy` or `mental`).
///
/// # Safety
/// `dir` and `stem` must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn mile_policy_load(
    dir: *const c_char,
    stem: *const c_char,
    out: *mut *mut MilePolicy,
) -> MileStatus {
    guard(|| {
        non_null!(out);
        let dir = try_status!(c_str(dir));
        let stem = try_status!(c_str(stem));
        let net = try_status!(load_net(Path::new(dir), stem).map_err(from_err));
        *out = Box::into_raw(Box::new(MilePolicy { net }));
        MileStatus::Ok
    })
}

/// # Safety
/// `policy` must come from `mile_policy_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mile_policy_free(policy: *mut MilePolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Input length and output length of `mile_policy_forward`.
///
/// # Safety
/// `policy` must be a live handle; outputs may be null.
#[no_mangle]
pub unsafe extern "C" fn mile_policy_dims(policy: *const MilePolicy, input_dim: *mut usize, output_dim: *mut usize) -> MileStatus {
    guard(|| {
        non_null!(policy);
        let spec = (*policy).net.spec();
        let out = match spec.head {
            mile_lab::diffnet::Head::Categorical { n_actions } => n_actions,
            mile_lab::diffnet::Head::DiagonalGaussian { action_dim, .. } => 2 * action_dim,
        };
        if !input_dim.is_null() {
            *input_dim = spec.input_dim;
        }
        if !output_dim.is_null() {
            *output_dim = out;
        }
        MileStatus::Ok
    })
}

/// Categorical heads write action probabilities; gaussian heads write the
/// mean followed by the variance.
///
/// # Safety
/// `obs` must hold `obs_len` doubles and `out` `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mile_policy_forward(
    policy: *const MilePolicy,
    obs: *const f64,
    obs_len: usize,
    out: *mut f64,
    out_len: usize,
) -> MileStatus {
    guard(|| {
        non_null!(policy, obs, out);
        let x = slice(obs, obs_len).expect("checked");
        let d = try_status!((*policy).net.forward(x).map_err(from_err));
        let vals: Vec<f64> = match d {
            DistOutput::Categorical { probs, .. } => probs,
            DistOutput::Gaussian { mut mean, var } => {
                mean.extend(var);
                mean
            }
        };
        if out_len < vals.len() {
            return fail(
                MileStatus::BufferTooSmall,
                format!("output needs {} slots, buffer has {out_len}", vals.len()),
            );
        }
        slice_mut(out, out_len).expect("checked")[..vals.len()].copy_from_slice(&vals);
        MileStatus::Ok
    })
}

/// Φ((delta − c)/sigma).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mile_probit_gate(delta: f64, c: f64, sigma: f64, out: *mut f64) -> MileStatus {
    guard(|| {
        non_null!(out);
        let p = try_status!(params(c, sigma));
        if !delta.is_finite() {
            return fail(MileStatus::InvalidArgument, "delta must be finite");
        }
        *out = probit_gate(delta, &p);
        MileStatus::Ok
    })
}

/// Exact p(ν=1|s) for the human policy `pi_h` and mental model `pi_hat`,
/// both of length `n`.
///
/// # Safety
/// `pi_h` and `pi_hat` must hold `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mile_intervene_prob_discrete(
    pi_h: *const f64,
    pi_hat: *const f64,
    n: usize,
    c: f64,
    sigma: f64,
    out: *mut f64,
) -> MileStatus {
    guard(|| {
        non_null!(pi_h, pi_hat, out);
        let p = try_status!(params(c, sigma));
        let est = try_status!(
            intervene_prob_discrete(slice(pi_h, n).unwrap(), slice(pi_hat, n).unwrap(), &p).map_err(from_err)
        );
        *out = est.p_intervene;
        MileStatus::Ok
    })
}

/// p(ν=1|s) with the human written as softmax(`q`).
///
/// # Safety
/// `q` and `pi_hat` must hold `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mile_q_form_intervene_prob(
    q: *const f64,
    pi_hat: *const f64,
    n: usize,
    c: f64,
    sigma: f64,
    out: *mut f64,
) -> MileStatus {
    guard(|| {
        non_null!(q, pi_hat, out);
        let p = try_status!(params(c, sigma));
        *out = try_status!(
            q_form_intervene_prob(slice(q, n).unwrap(), slice(pi_hat, n).unwrap(), &p).map_err(from_err)
        );
        MileStatus::Ok
    })
}

/// The `n + 1` class probabilities: P(a_h = a, ν=1) per action, then P(ν=0).
///
/// # Safety
/// `pi_h` and `pi_hat` must hold `n` doubles, `out` `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mile_joint_action_distribution(
    pi_h: *const f64,
    pi_hat: *const f64,
    n: usize,
    c: f64,
    sigma: f64,
    out: *mut f64,
    out_len: usize,
) -> MileStatus {
    guard(|| {
        non_null!(pi_h, pi_hat, out);
        if out_len < n + 1 {
            return fail(MileStatus::BufferTooSmall, format!("need {} slots, buffer has {out_len}", n + 1));
        }
        let p = try_status!(params(c, sigma));
        let joint = try_status!(
            joint_action_distribution(slice(pi_h, n).unwrap(), slice(pi_hat, n).unwrap(), &p).map_err(from_err)
        );
        slice_mut(out, out_len).unwrap()[..joint.len()].copy_from_slice(&joint);
        MileStatus::Ok
    })
}
