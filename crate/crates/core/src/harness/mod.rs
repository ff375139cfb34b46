//! Experiment orchestration: config, setup construction, multi-seed runs,
//! metrics CSVs and run comparison.

mod config;

pub use config::{
    ConfigError, ExperimentConfig, ExpertSection, InterventionSection, MentalSection, NetSection, TrainSection,
};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datastore::{write_json_atomic, RunManifest, RunStore};
use crate::diffnet::Mlp;
use crate::envs::{make_initial_policy, EnvSpec, Expert};
use crate::error::{invalid, Error, Result};
use crate::intervention::InterventionParams;
use crate::learning::{run_interactive, IterMetrics, Setup};
use crate::rng::{self, tag};
use crate::sim_human::{calibrate_c, fit_mental_model, Calibration, MentalFit, SimulatedHuman};

pub const METRICS_HEADER: [&str; 8] = [
    "iter",
    "episodes",
    "interventions",
    "intervention_rate",
    "loss",
    "success_rate",
    "seed",
    "method",
];

/// What went into a seed's setup, saved as `setup.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetupReport {
    pub seed: u64,
    pub initial_success: f64,
    pub mental_fit: MentalFit,
    pub c: f64,
    pub sigma: f64,
    pub calibration: Option<Calibration>,
}

/// Expert, initial policy, mental model and calibrated human for one seed.
pub fn build_setup(cfg: &ExperimentConfig, seed: u64) -> Result<(Setup, SetupReport)> {
    let expert = Expert::for_env(&cfg.env, cfg.expert.temperature, cfg.expert.noise_std)?;
    let net = cfg.net_spec();
    let (initial, initial_success) = make_initial_policy(&cfg.env, &expert, net.clone(), &cfg.initial, seed)?;
    let (mental, mental_fit) = fit_mental_model(
        &cfg.env,
        &initial,
        Mlp::new(net, rng::mix(seed, &[tag::INIT, 4]))?,
        cfg.mental_model.rollouts,
        &cfg.mental_model.bc,
        seed,
    )?;
    let iv = &cfg.intervention;
    let mut human = SimulatedHuman::new(expert, mental.clone(), InterventionParams::new(iv.c, iv.sigma)?)?;
    human.sticky_steps = iv.sticky_steps;
    human.mc_samples = iv.mc_samples;
    let calibration = match iv.calibrate_target {
        Some(target) => {
            let cal = calibrate_c(&cfg.env, &initial, &human, target, iv.tol, iv.calibrate_episodes, seed)?;
            human = human.with_c(cal.c);
            Some(cal)
        }
        None => None,
    };
    let mut loss = cfg.loss_config();
    if iv.train_c.is_none() {
        loss.params.c = human.params.c;
    }
    let report = SetupReport {
        seed,
        initial_success,
        mental_fit,
        c: human.params.c,
        sigma: human.params.sigma,
        calibration,
    };
    let setup = Setup {
        env: cfg.env.clone(),
        human,
        initial,
        // the learner's mental model starts from the human's own π_ζ
        mental_init: mental,
        loss,
        train: cfg.train_config(),
        baselines: cfg.baselines.clone(),
        eval_episodes: cfg.eval_episodes,
        eval_mode: cfg.eval_mode,
    };
    Ok((setup, report))
}

/// Output root: `MILE_RUNS_DIR`, else `./runs`.
pub fn runs_root() -> PathBuf {
    std::env::var_os("MILE_RUNS_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

pub fn run_dir_name(cfg: &ExperimentConfig) -> String {
    format!("{}-{}", cfg.name, &cfg.hash()[..8])
}

#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub report: SetupReport,
    pub metrics: Vec<IterMetrics>,
}

/// One seed end to end, with its store, checkpoint and setup under `dir`.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> Result<SeedRun> {
    let (setup, report) = build_setup(cfg, seed)?;
    if dir.exists() {
        std::fs::remove_dir_all(dir)?;
    }
    std::fs::create_dir_all(dir)?;
    write_json_atomic(&dir.join("setup.json"), &report)?;
    let manifest = RunManifest::new(
        cfg.hash(),
        cfg.env.clone(),
        vec![seed],
        setup.human.params.c,
        setup.human.params.sigma,
        setup.loss.lambda,
    );
    let mut store = RunStore::create(dir.join("store"), manifest)?;
    let ckpt = dir.join("ckpt");
    let out = run_interactive(&setup, cfg.method, seed, Some(&mut store), Some(&ckpt), None)?;
    Ok(SeedRun {
        seed,
        report,
        metrics: out.metrics,
    })
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub dir: PathBuf,
    pub seeds: Vec<SeedRun>,
    pub summary: Vec<SummaryRow>,
}

/// Runs every seed in parallel and writes `metrics.csv`, `summary.csv`
/// and `config.json` into `out` (default: the runs root).
pub fn run_experiment(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let root = out.map(Path::to_path_buf).unwrap_or_else(runs_root);
    let dir = root.join(run_dir_name(cfg));
    std::fs::create_dir_all(&dir)?;
    for f in ["metrics.csv", "summary.csv"] {
        let p = dir.join(f);
        if p.exists() {
            std::fs::remove_file(p)?;
        }
    }
    write_json_atomic(&dir.join("config.json"), cfg)?;
    let seeds: Vec<SeedRun> = cfg
        .seeds
        .par_iter()
        .map(|&s| {
            run_seed(cfg, s, &dir.join(format!("seed_{s}"))).map_err(|e| match e {
                Error::Diverged(m) => Error::Diverged(format!("seed {s}: {m}")),
                Error::Invalid(m) => Error::Invalid(format!("seed {s}: {m}")),
                other => other,
            })
        })
        .collect::<Result<_>>()?;
    let rows: Vec<&IterMetrics> = seeds.iter().flat_map(|s| &s.metrics).collect();
    write_metrics_csv(&dir.join("metrics.csv"), rows.iter().copied())?;
    let summary = summarize(rows.iter().copied());
    write_summary_csv(&dir.join("summary.csv"), &summary)?;
    Ok(ExperimentOutcome { dir, seeds, summary })
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => invalid(format!("csv: {other:?}")),
    }
}

pub fn write_metrics_csv<'a>(path: &Path, rows: impl IntoIterator<Item = &'a IterMetrics>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(METRICS_HEADER).map_err(csv_err)?;
    for m in rows {
        w.write_record([
            m.iter.to_string(),
            m.episodes.to_string(),
            m.interventions.to_string(),
            m.intervention_rate.to_string(),
            m.loss.map(|l| l.to_string()).unwrap_or_default(),
            m.success_rate.to_string(),
            m.seed.to_string(),
            m.method.clone(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<IterMetrics>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let bad = |f: &str| invalid(format!("{}: row {}: bad `{f}`", path.display(), i + 1));
        let get = |k: usize| rec.get(k).unwrap_or("");
        out.push(IterMetrics {
            iter: get(0).parse().map_err(|_| bad("iter"))?,
            episodes: get(1).parse().map_err(|_| bad("episodes"))?,
            interventions: get(2).parse().map_err(|_| bad("interventions"))?,
            intervention_rate: get(3).parse().map_err(|_| bad("intervention_rate"))?,
            loss: match get(4) {
                "" => None,
                s => Some(s.parse().map_err(|_| bad("loss"))?),
            },
            success_rate: get(5).parse().map_err(|_| bad("success_rate"))?,
            seed: get(6).parse().map_err(|_| bad("seed"))?,
            method: get(7).to_string(),
        });
    }
    Ok(out)
}

/// Mean and standard error over seeds, per method and iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub iter: u64,
    pub seeds: usize,
    pub success_mean: f64,
    pub success_se: f64,
    pub interventions_mean: f64,
    pub intervention_rate_mean: f64,
}

pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

pub fn summarize<'a>(rows: impl IntoIterator<Item = &'a IterMetrics>) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, u64), Vec<&IterMetrics>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.method.clone(), r.iter)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((method, iter), g)| {
            let succ: Vec<f64> = g.iter().map(|r| r.success_rate).collect();
            let (success_mean, success_se) = mean_se(&succ);
            let n = g.len() as f64;
            SummaryRow {
                method,
                iter,
                seeds: g.len(),
                success_mean,
                success_se,
                interventions_mean: g.iter().map(|r| r.interventions as f64).sum::<f64>() / n,
                intervention_rate_mean: g.iter().map(|r| r.intervention_rate).sum::<f64>() / n,
            }
        })
        .collect()
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// One row of a cross-run comparison: the final iteration of each run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub run: String,
    pub method: String,
    pub iter: u64,
    pub seeds: usize,
    pub success_mean: f64,
    pub success_se: f64,
    pub interventions_mean: f64,
    pub budget_flag: bool,
}

/// Compares run directories; refuses runs on different environments and
/// flags intervention budgets more than 5% from the smallest.
pub fn compare_runs(dirs: &[PathBuf]) -> Result<Vec<CompareRow>> {
    if dirs.is_empty() {
        return Err(invalid("compare needs at least one run directory"));
    }
    let mut env: Option<(EnvSpec, &PathBuf)> = None;
    let mut rows = Vec::new();
    for d in dirs {
        let text = std::fs::read_to_string(d.join("config.json"))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        match &env {
            Some((e, first)) if *e != cfg.env => {
                return Err(invalid(format!(
                    "{} uses env `{}` but {} uses `{}`; refusing a cross-env comparison",
                    d.display(),
                    cfg.env.name(),
                    first.display(),
                    e.name()
                )));
            }
            Some(_) => {}
            None => env = Some((cfg.env.clone(), d)),
        }
        let metrics = read_metrics_csv(&d.join("metrics.csv"))?;
        let summary = summarize(&metrics);
        for s in summary.iter().filter(|s| Some(s.iter) == summary.iter().map(|r| r.iter).max()) {
            rows.push(CompareRow {
                run: d.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
                method: s.method.clone(),
                iter: s.iter,
                seeds: s.seeds,
                success_mean: s.success_mean,
                success_se: s.success_se,
                interventions_mean: s.interventions_mean,
                budget_flag: false,
            });
        }
    }
    let min = rows.iter().map(|r| r.interventions_mean).fold(f64::INFINITY, f64::min);
    for r in &mut rows {
        r.budget_flag = r.interventions_mean > min * 1.05;
    }
    Ok(rows)
}

pub fn write_compare_csv(w: impl std::io::Write, rows: &[CompareRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn format_compare_table(rows: &[CompareRow]) -> String {
    let mut out = format!(
        "{:<28} {:<18} {:>5} {:>6} {:>16} {:>14}\n",
        "run", "method", "iter", "seeds", "success", "interventions"
    );
    for r in rows {
        let flag = if r.budget_flag { "  budget>5%" } else { "" };
        out += &format!(
            "{:<28} {:<18} {:>5} {:>6} {:>8.3} ± {:<5.3} {:>14.1}{flag}\n",
            r.run, r.method, r.iter, r.seeds, r.success_mean, r.success_se, r.interventions_mean
        );
    }
    out
}
