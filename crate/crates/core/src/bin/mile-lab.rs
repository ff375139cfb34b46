use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use mile_lab::diffnet::{load_net, save_net, Mlp};
use mile_lab::envs::{make_initial_policy, EnvSpec, Expert, GridNavSpec, ReachGapSpec};
use mile_lab::harness::{self, ConfigError, ExperimentConfig};
use mile_lab::rollout::{evaluate_expert, evaluate_policy, ActMode};

#[derive(Parser)]
#[command(name = "mile-lab", version, about = "Intervention-model imitation learning lab")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum EnvKind {
    Gridnav,
    Reachgap,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Sample,
    Mode,
}

impl From<Mode> for ActMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Sample => ActMode::Sample,
            Mode::Mode => ActMode::Mode,
        }
    }
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Experiment config (TOML).
    config: PathBuf,
    /// Override a config key, e.g. `--set train.k=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve (GridNav) or check (ReachGap) the expert and report its success.
    SolveExpert {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train the corrupted-expert initial policy and save it.
    InitPolicy {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the mental model and calibrate the effort cost c.
    CalibrateC {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run an experiment for every configured seed.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Run a single seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
        /// Output root (default: $MILE_RUNS_DIR or ./runs).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint or the expert with interventions disabled.
    Eval {
        /// Checkpoint directory holding `policy.bin` / `policy.json`.
        #[arg(long, conflicts_with = "expert", required_unless_present = "expert")]
        checkpoint: Option<PathBuf>,
        /// Evaluate the expert instead of a checkpoint.
        #[arg(long)]
        expert: bool,
        /// Environment from an experiment config.
        #[arg(long, conflicts_with = "env")]
        config: Option<PathBuf>,
        /// Default environment of this kind.
        #[arg(long)]
        env: Option<EnvKind>,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "sample")]
        mode: Mode,
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
        #[arg(long, default_value_t = 0.0)]
        noise_std: f64,
    },
    /// Compare finished runs (same environment required).
    Compare {
        runs: Vec<PathBuf>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Serve a live intervention session over WebSocket.
    Serve {
        #[arg(long, value_enum, conflicts_with = "config")]
        env: Option<EnvKind>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 8700)]
        port: u16,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 10.0)]
        tick_hz: f64,
        /// Where live sessions are recorded (default: runs root).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Fail {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for Fail {
    fn from(e: ConfigError) -> Self {
        Fail::Config(format!("config error at {e}"))
    }
}

impl From<mile_lab::Error> for Fail {
    fn from(e: mile_lab::Error) -> Self {
        Fail::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for Fail {
    fn from(e: std::io::Error) -> Self {
        Fail::Runtime(e.to_string())
    }
}

fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig, Fail> {
    let mut text = std::fs::read_to_string(&args.config)
        .map_err(|e| Fail::Config(format!("{}: {e}", args.config.display())))?;
    for s in &args.set {
        text = ExperimentConfig::apply_override(&text, s)?;
    }
    Ok(ExperimentConfig::from_toml_str(&text)?)
}

fn default_env(kind: EnvKind) -> EnvSpec {
    match kind {
        EnvKind::Gridnav => EnvSpec::GridNav(GridNavSpec::default()),
        EnvKind::Reachgap => EnvSpec::ReachGap(ReachGapSpec::default()),
    }
}

fn env_from(config: Option<&Path>, env: Option<EnvKind>) -> Result<(EnvSpec, Option<ExperimentConfig>), Fail> {
    match (config, env) {
        (Some(p), _) => {
            let cfg = ExperimentConfig::load(p)?;
            Ok((cfg.env.clone(), Some(cfg)))
        }
        (None, Some(k)) => Ok((default_env(k), None)),
        (None, None) => Err(Fail::Config("pass --config or --env".into())),
    }
}

fn print_json<T: serde::Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn run(cli: Cli) -> Result<(), Fail> {
    match cli.cmd {
        Cmd::SolveExpert { cfg, episodes, seed } => {
            let cfg = load_config(&cfg)?;
            let expert = Expert::for_env(&cfg.env, cfg.expert.temperature, cfg.expert.noise_std)?;
            if let (EnvSpec::GridNav(g), Expert::Grid { q, .. }) = (&cfg.env, &expert) {
                println!("bellman residual {:.3e}", q.bellman_residual(g));
                let arrows = ['^', 'v', '<', '>', 'o'];
                let map: Vec<char> = g.to_ascii().chars().filter(|c| *c != '\n').collect();
                for r in 0..g.height {
                    let line: String = (0..g.width)
                        .map(|c| {
                            let cell = r * g.width + c;
                            match map[cell] {
                                '.' => arrows[q.greedy(cell)],
                                other => other,
                            }
                        })
                        .collect();
                    println!("{line}");
                }
            }
            for mode in [ActMode::Sample, ActMode::Mode] {
                let ev = evaluate_expert(&cfg.env, &expert, episodes, seed, mode)?;
                println!("expert {mode:?}: success {:.3} over {episodes} episodes", ev.success_rate);
            }
        }
        Cmd::InitPolicy { cfg, seed, out } => {
            let cfg = load_config(&cfg)?;
            let expert = Expert::for_env(&cfg.env, cfg.expert.temperature, cfg.expert.noise_std)?;
            let (net, rate) = make_initial_policy(&cfg.env, &expert, cfg.net_spec(), &cfg.initial, seed)?;
            save_net(&net, &out, "policy")?;
            println!("initial policy success {rate:.3}; saved to {}", out.display());
        }
        Cmd::CalibrateC { cfg, seed } => {
            let cfg = load_config(&cfg)?;
            let (_, report) = harness::build_setup(&cfg, seed)?;
            print_json(&report);
        }
        Cmd::Run { cfg, seed, out } => {
            let mut cfg = load_config(&cfg)?;
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            let res = harness::run_experiment(&cfg, out.as_deref())?;
            for s in &res.seeds {
                let last = s.metrics.last().expect("row 0 always present");
                eprintln!(
                    "seed {}: c={:.3} initial {:.3} -> final {:.3} ({} interventions)",
                    s.seed, s.report.c, s.report.initial_success, last.success_rate, last.interventions
                );
            }
            if let Some(last) = res.summary.last() {
                eprintln!(
                    "{} iter {}: success {:.3} ± {:.3} over {} seeds",
                    last.method, last.iter, last.success_mean, last.success_se, last.seeds
                );
            }
            println!("{}", res.dir.display());
        }
        Cmd::Eval {
            checkpoint,
            expert,
            config,
            env,
            episodes,
            seed,
            mode,
            temperature,
            noise_std,
        } => {
            let (spec, cfg) = env_from(config.as_deref(), env)?;
            let ev = if expert {
                let (t, n) = cfg
                    .as_ref()
                    .map(|c| (c.expert.temperature, c.expert.noise_std))
                    .unwrap_or((temperature, noise_std));
                evaluate_expert(&spec, &Expert::for_env(&spec, t, n)?, episodes, seed, mode.into())?
            } else {
                let dir = checkpoint.expect("clap enforces one of checkpoint/expert");
                let net: Mlp = load_net(&dir, "policy")?;
                evaluate_policy(&spec, &net, episodes, seed, mode.into())?
            };
            print_json(&ev);
        }
        Cmd::Compare { runs, csv } => {
            let rows = harness::compare_runs(&runs).map_err(|e| Fail::Runtime(e.to_string()))?;
            print!("{}", harness::format_compare_table(&rows));
            if let Some(p) = csv {
                harness::write_compare_csv(std::fs::File::create(p)?, &rows)?;
            }
        }
        Cmd::Serve {
            env,
            config,
            port,
            checkpoint,
            tick_hz,
            out,
        } => {
            let (spec, cfg) = env_from(config.as_deref(), env.or(Some(EnvKind::Gridnav)))?;
            let opts = mile_lab::live::ServeOptions {
                env: spec,
                config: cfg,
                checkpoint,
                tick_hz,
                out: out.unwrap_or_else(harness::runs_root),
            };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(mile_lab::live::serve(opts, port))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Fail::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
