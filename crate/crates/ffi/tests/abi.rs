use std::ffi::{CStr, CString};
use std::ptr;

use mile_ffi::*;
use mile_lab::diffnet::{save_net, Mlp, NetSpec};
use mile_lab::envs::EnvSpec;
use mile_lab::intervention::{intervene_prob_discrete, InterventionParams};

fn last_error() -> String {
    unsafe { CStr::from_ptr(mile_last_error_message()) }.to_string_lossy().into_owned()
}

#[test]
fn gridnav_episode_through_handles() {
    let mut env = ptr::null_mut();
    assert_eq!(mile_env_new_gridnav(&mut env), MileStatus::Ok);
    let (mut obs_dim, mut n, mut d) = (0usize, 0usize, 0usize);
    unsafe {
        assert_eq!(mile_env_dims(env, &mut obs_dim, &mut n, &mut d), MileStatus::Ok);
        assert_eq!((obs_dim, n, d), (256, 5, 0));
        let mut obs = vec![0.0; obs_dim];
        assert_eq!(mile_env_reset(env, 3, obs.as_mut_ptr(), obs.len()), MileStatus::Ok);
        assert_eq!(obs[..64].iter().sum::<f64>(), 1.0);
        let (mut r, mut done, mut ok) = (0.0, false, false);
        let mut steps = 0;
        while !done {
            let s = mile_env_step_discrete(env, 4, obs.as_mut_ptr(), obs.len(), &mut r, &mut done, &mut ok);
            assert_eq!(s, MileStatus::Ok);
            steps += 1;
        }
        assert_eq!(steps, 50);
        assert!(!ok);
        assert_eq!(
            mile_env_step_discrete(env, 4, ptr::null_mut(), 0, ptr::null_mut(), ptr::null_mut(), ptr::null_mut()),
            MileStatus::InvalidArgument
        );
        assert!(last_error().contains("finished"), "{}", last_error());
        mile_env_free(env);
    }
}

#[test]
fn small_buffers_and_nulls_are_reported() {
    let mut env = ptr::null_mut();
    assert_eq!(mile_env_new_reachgap(&mut env), MileStatus::Ok);
    unsafe {
        let mut obs = vec![0.0; 3];
        assert_eq!(mile_env_reset(env, 0, obs.as_mut_ptr(), obs.len()), MileStatus::BufferTooSmall);
        assert!(last_error().contains("buffer"));
        assert_eq!(mile_env_reset(ptr::null_mut(), 0, obs.as_mut_ptr(), 3), MileStatus::NullPointer);
        let a = [0.01, 0.0, 0.0];
        let mut full = vec![0.0; 8];
        mile_env_reset(env, 0, full.as_mut_ptr(), full.len());
        let s = mile_env_step_continuous(env, a.as_ptr(), 3, full.as_mut_ptr(), 8, ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
        assert_eq!(s, MileStatus::DimensionMismatch);
        mile_env_free(env);
    }
    assert_eq!(mile_env_new_gridnav(ptr::null_mut()), MileStatus::NullPointer);
}

#[test]
fn env_from_json_rejects_bad_specs() {
    let good = CString::new(r#"{"kind":"gridnav","map":"S.\n.G","horizon":10}"#).unwrap();
    let bad = CString::new(r#"{"kind":"gridnav","mapp":"S.G"}"#).unwrap();
    let mut env = ptr::null_mut();
    unsafe {
        assert_eq!(mile_env_new_from_json(good.as_ptr(), &mut env), MileStatus::Ok);
        let mut obs_dim = 0;
        mile_env_dims(env, &mut obs_dim, ptr::null_mut(), ptr::null_mut());
        assert_eq!(obs_dim, 16);
        mile_env_free(env);
        assert_eq!(mile_env_new_from_json(bad.as_ptr(), &mut env), MileStatus::InvalidArgument);
        assert!(last_error().contains("mapp"));
    }
}

#[test]
fn gate_and_discrete_model_match_the_library() {
    let mut p = 0.0;
    unsafe {
        assert_eq!(mile_probit_gate(1.5, 1.5, 2.0, &mut p), MileStatus::Ok);
        assert!((p - 0.5).abs() < 1e-15);
        assert_eq!(mile_probit_gate(0.0, 0.0, -1.0, &mut p), MileStatus::InvalidArgument);
    }
    let pi_h = [0.7, 0.2, 0.1];
    let pi_hat = [0.1, 0.3, 0.6];
    let lib = intervene_prob_discrete(&pi_h, &pi_hat, &InterventionParams::new(0.5, 1.2).unwrap())
        .unwrap()
        .p_intervene;
    let mut joint = [0.0; 4];
    unsafe {
        assert_eq!(
            mile_intervene_prob_discrete(pi_h.as_ptr(), pi_hat.as_ptr(), 3, 0.5, 1.2, &mut p),
            MileStatus::Ok
        );
        assert_eq!(p, lib);
        let q: Vec<f64> = pi_h.iter().map(|x: &f64| x.ln()).collect();
        let mut pq = 0.0;
        assert_eq!(mile_q_form_intervene_prob(q.as_ptr(), pi_hat.as_ptr(), 3, 0.5, 1.2, &mut pq), MileStatus::Ok);
        assert!((pq - lib).abs() < 1e-12);
        assert_eq!(
            mile_joint_action_distribution(pi_h.as_ptr(), pi_hat.as_ptr(), 3, 0.5, 1.2, joint.as_mut_ptr(), 4),
            MileStatus::Ok
        );
        assert!((joint.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(
            mile_joint_action_distribution(pi_h.as_ptr(), pi_hat.as_ptr(), 3, 0.5, 1.2, joint.as_mut_ptr(), 3),
            MileStatus::BufferTooSmall
        );
        let unnormalized = [0.5, 0.2, 0.1];
        assert_eq!(
            mile_intervene_prob_discrete(unnormalized.as_ptr(), pi_hat.as_ptr(), 3, 0.5, 1.2, &mut p),
            MileStatus::InvalidArgument
        );
    }
}

#[test]
fn policy_checkpoint_forward() {
    let dir = tempfile::tempdir().unwrap();
    let spec = EnvSpec::ReachGap(Default::default());
    let net = Mlp::new(NetSpec::new(spec.obs_dim(), vec![16], spec.policy_head()), 5).unwrap();
    save_net(&net, dir.path(), "policy").unwrap();
    let d = CString::new(dir.path().to_str().unwrap()).unwrap();
    let stem = CString::new("policy").unwrap();
    let missing = CString::new("mental").unwrap();
    let mut pol = ptr::null_mut();
    unsafe {
        assert_eq!(mile_policy_load(d.as_ptr(), missing.as_ptr(), &mut pol), MileStatus::Io);
        assert_eq!(mile_policy_load(d.as_ptr(), stem.as_ptr(), &mut pol), MileStatus::Ok);
        let (mut i, mut o) = (0, 0);
        mile_policy_dims(pol, &mut i, &mut o);
        assert_eq!((i, o), (8, 4));
        let x = vec![0.25; 8];
        let mut out = vec![0.0; 4];
        assert_eq!(mile_policy_forward(pol, x.as_ptr(), 8, out.as_mut_ptr(), 4), MileStatus::Ok);
        match net.forward(&x).unwrap() {
            mile_lab::diffnet::DistOutput::Gaussian { mean, var } => {
                assert_eq!(&out[..2], &mean[..]);
                assert_eq!(&out[2..], &var[..]);
            }
            _ => unreachable!(),
        }
        assert_eq!(mile_policy_forward(pol, x.as_ptr(), 7, out.as_mut_ptr(), 4), MileStatus::DimensionMismatch);
        mile_policy_free(pol);
    }
}

#[test]
fn header_declares_every_export() {
    let h = include_str!("../include/mile.h");
    for f in [
        "mile_last_error_message",
        "mile_env_new_gridnav",
        "mile_env_new_reachgap",
        "mile_env_new_from_json",
        "mile_env_free",
        "mile_env_dims",
        "mile_env_reset",
        "mile_env_step_discrete",
        "mile_env_step_continuous",
        "mile_policy_load",
        "mile_policy_free",
        "mile_policy_dims",
        "mile_policy_forward",
        "mile_probit_gate",
        "mile_intervene_prob_discrete",
        "mile_q_form_intervene_prob",
        "mile_joint_action_distribution",
    ] {
        assert!(h.contains(&format!("{f}(")), "{f} missing from header");
    }
}
