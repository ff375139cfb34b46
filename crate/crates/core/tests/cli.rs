use std::path::Path;
use std::process::{Command, Output};

fn mile(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mile-lab"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn small(env: &str, name: &str) -> String {
    let (initial, sigma) = match env {
        "gridnav" => ("corruption = 0.6\nband = [0.0, 1.0]", 1.0),
        _ => ("corruption = 0.3\nrollouts = 10\nband = [0.0, 1.0]", 20.0),
    };
    format!(
        r#"
name = "{name}"
method = "hg_dagger"
seeds = [0]
eval_episodes = 10
[env]
kind = "{env}"
[initial]
{initial}
[net]
hidden_dims = [16]
[mental_model]
rollouts = 10
[intervention]
sigma = {sigma}
calibrate_episodes = 4
tol = 0.1
[train]
N = 1
k = 2
m = 5
"#
    )
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn config_errors_exit_with_2_and_name_the_field() {
    let d = tempfile::tempdir().unwrap();
    let bad = small("gridnav", "x").replace("m = 5", "m = 5\nepochs = 3");
    let p = write(d.path(), "bad.toml", &bad);
    let o = mile(&["calibrate-c", &p]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("train") && err.contains("epochs"), "{err}");

    let o = mile(&["run", "/nonexistent/config.toml"]);
    assert_eq!(o.status.code(), Some(2));

    let p = write(d.path(), "ok.toml", &small("gridnav", "x"));
    let o = mile(&["run", &p, "--set", "train.k=oops"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_1() {
    let d = tempfile::tempdir().unwrap();
    let o = mile(&["eval", "--checkpoint", d.path().to_str().unwrap(), "--env", "gridnav"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn run_then_compare() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("runs");
    let out = out.to_str().unwrap();
    let mut dirs = Vec::new();
    for (env, name) in [("gridnav", "g1"), ("gridnav", "g2"), ("reachgap", "r1")] {
        let p = write(d.path(), &format!("{name}.toml"), &small(env, name));
        let o = mile(&["run", &p, "--out", out]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let dir = String::from_utf8(o.stdout).unwrap().trim().to_string();
        for f in ["config.json", "metrics.csv", "summary.csv", "seed_0/setup.json"] {
            assert!(Path::new(&dir).join(f).exists(), "{dir}/{f} missing");
        }
        dirs.push(dir);
    }
    let metrics = std::fs::read_to_string(Path::new(&dirs[0]).join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("iter,episodes,interventions,intervention_rate,loss,success_rate,seed,method"));
    assert_eq!(metrics.lines().count(), 3);

    let csv = d.path().join("cmp.csv");
    let o = mile(&["compare", &dirs[0], &dirs[1], "--csv", csv.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("hg_dagger"));
    assert!(std::fs::read_to_string(&csv).unwrap().lines().count() == 3);

    let o = mile(&["compare", &dirs[0], &dirs[2]]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("env"));

    let ckpt = Path::new(&dirs[0]).join("seed_0/ckpt");
    let o = mile(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--env", "gridnav", "--episodes", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["episodes"], 5);
}

#[test]
fn expert_tools() {
    let o = mile(&["eval", "--expert", "--env", "reachgap", "--episodes", "20", "--mode", "mode"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["success_rate"], 1.0);

    let d = tempfile::tempdir().unwrap();
    let p = write(d.path(), "g.toml", &small("gridnav", "g"));
    let o = mile(&["solve-expert", &p, "--episodes", "20"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8_lossy(&o.stdout).to_string() + &String::from_utf8_lossy(&o.stderr);
    assert!(text.contains("residual"), "{text}");

    let out = d.path().join("init");
    let o = mile(&["init-policy", &p, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("policy.json").exists());
}
