use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bc::BcConfig;
use crate::diffnet::{Activation, NetSpec};
use crate::envs::{EnvSpec, InitialConfig};
use crate::error::{invalid, Result};
use crate::learning::{BaselineConfig, LabelMode, LossConfig, Method, TrainConfig};
use crate::intervention::InterventionParams;
use crate::rollout::ActMode;

fn d_eval() -> usize {
    100
}
fn d_temperature() -> f64 {
    1.0
}
fn d_noise() -> f64 {
    0.005
}
fn d_hidden() -> Vec<usize> {
    vec![64, 64]
}
fn d_rollouts() -> usize {
    100
}
fn d_sigma() -> f64 {
    1.0
}
fn d_tol() -> f64 {
    0.05
}
fn d_cal_eps() -> usize {
    10
}
fn d_mc_human() -> usize {
    256
}
fn d_lambda() -> f64 {
    0.5
}
fn d_mc() -> usize {
    16
}
fn d_b() -> usize {
    64
}
fn d_m() -> usize {
    300
}
fn d_lr() -> f64 {
    1e-3
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpertSection {
    /// Boltzmann temperature over Q* (GridNav).
    #[serde(default = "d_temperature")]
    pub temperature: f64,
    /// Action noise std of the scripted expert (ReachGap).
    #[serde(default = "d_noise")]
    pub noise_std: f64,
}

impl Default for ExpertSection {
    fn default() -> Self {
        Self {
            temperature: d_temperature(),
            noise_std: d_noise(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSection {
    #[serde(default = "d_hidden")]
    pub hidden_dims: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
}

impl Default for NetSection {
    fn default() -> Self {
        Self {
            hidden_dims: d_hidden(),
            activation: Activation::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MentalSection {
    #[serde(default = "d_rollouts")]
    pub rollouts: usize,
    #[serde(default)]
    pub bc: BcConfig,
}

impl Default for MentalSection {
    fn default() -> Self {
        Self {
            rollouts: d_rollouts(),
            bc: BcConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterventionSection {
    /// Effort cost; ignored when `calibrate_target` is set.
    #[serde(default)]
    pub c: f64,
    #[serde(default = "d_sigma")]
    pub sigma: f64,
    pub calibrate_target: Option<f64>,
    #[serde(default = "d_tol")]
    pub tol: f64,
    #[serde(default = "d_cal_eps")]
    pub calibrate_episodes: usize,
    /// Samples for reporting p(ν=1|s) on continuous tasks.
    #[serde(default = "d_mc_human")]
    pub mc_samples: usize,
    #[serde(default)]
    pub sticky_steps: usize,
    /// Gate parameters assumed by the learner, when they differ from the
    /// simulated human's.
    pub train_c: Option<f64>,
    pub train_sigma: Option<f64>,
}

impl Default for InterventionSection {
    fn default() -> Self {
        Self {
            c: 0.0,
            sigma: d_sigma(),
            calibrate_target: Some(0.25),
            tol: d_tol(),
            calibrate_episodes: d_cal_eps(),
            mc_samples: d_mc_human(),
            sticky_steps: 0,
            train_c: None,
            train_sigma: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(rename = "N")]
    pub n: usize,
    pub k: usize,
    #[serde(default = "d_b")]
    pub b: usize,
    pub l: Option<usize>,
    #[serde(default = "d_m")]
    pub m: usize,
    #[serde(default = "d_lr", alias = "alpha")]
    pub lr: f64,
    #[serde(default = "d_lambda")]
    pub lambda: f64,
    #[serde(default = "d_mc")]
    pub mc_samples: usize,
    #[serde(default)]
    pub label: LabelMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub method: Method,
    pub seeds: Vec<u64>,
    #[serde(default = "d_eval")]
    pub eval_episodes: usize,
    #[serde(default)]
    pub eval_mode: ActMode,
    pub env: EnvSpec,
    #[serde(default)]
    pub expert: ExpertSection,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub net: NetSection,
    #[serde(default)]
    pub mental_model: MentalSection,
    #[serde(default)]
    pub intervention: InterventionSection,
    pub train: TrainSection,
    #[serde(default)]
    pub baselines: BaselineConfig,
}

/// A config error with the dotted path of the offending field.
#[derive(Debug, thiserror::Error)]
#[error("{path}: {msg}")]
pub struct ConfigError {
    pub path: String,
    pub msg: String,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> std::result::Result<Self, ConfigError> {
        let de = toml::Deserializer::new(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            ConfigError {
                path,
                msg: inner.message().trim().to_string(),
            }
        })?;
        cfg.validate().map_err(|e| ConfigError {
            path: "(config)".into(),
            msg: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> std::result::Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(invalid("seeds must not be empty"));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(invalid("name must be a non-empty plain file name"));
        }
        self.env.validate()?;
        self.train_config().validate()?;
        self.loss_config().validate()?;
        InterventionParams::new(self.intervention.c, self.intervention.sigma)?;
        Ok(())
    }

    pub fn net_spec(&self) -> NetSpec {
        NetSpec {
            input_dim: self.env.obs_dim(),
            hidden_dims: self.net.hidden_dims.clone(),
            head: self.env.policy_head(),
            activation: self.net.activation,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            n_iters: self.train.n,
            k: self.train.k,
            b: self.train.b,
            l: self.train.l,
            m: self.train.m,
            lr: self.train.lr,
        }
    }

    /// Learner-side loss settings; `c` is filled in after calibration.
    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            lambda: self.train.lambda,
            params: InterventionParams {
                c: self.intervention.train_c.unwrap_or(self.intervention.c),
                sigma: self.intervention.train_sigma.unwrap_or(self.intervention.sigma),
            },
            mc_samples: self.train.mc_samples,
            label: self.train.label,
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canon = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&canon);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Applies a `dotted.key=value` override, the value parsed as TOML.
    pub fn apply_override(text: &str, spec: &str) -> std::result::Result<String, ConfigError> {
        let (key, value) = spec.split_once('=').ok_or_else(|| ConfigError {
            path: spec.into(),
            msg: "override must look like key=value".into(),
        })?;
        let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError {
            path: "(config)".into(),
            msg: e.message().to_string(),
        })?;
        let parsed: toml::Value = format!("v = {value}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.to_string()));
        let parts: Vec<&str> = key.trim().split('.').collect();
        let mut cur = &mut doc;
        for p in &parts[..parts.len() - 1] {
            cur = cur
                .entry(p.to_string())
                .or_insert_with(|| toml::Value::Table(Default::default()))
                .as_table_mut()
                .ok_or_else(|| ConfigError {
                    path: key.into(),
                    msg: format!("`{p}` is not a table"),
                })?;
        }
        cur.insert(parts[parts.len() - 1].to_string(), parsed);
        Ok(toml::to_string(&doc).expect("table serializes"))
    }
}
