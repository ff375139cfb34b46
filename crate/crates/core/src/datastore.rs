//! JSONL transition logs, run manifests and per-run directory layout.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::envs::EnvSpec;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    SimHuman,
    Live,
}

/// One timestep: state, robot proposal, optional human action and flag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub ep: u64,
    pub t: u64,
    pub obs: Vec<f64>,
    pub a_r: Action,
    pub a_h: Option<Action>,
    pub nu: u8,
    pub next_obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub success: bool,
    pub iter: u64,
    pub source: Source,
}

impl TransitionRecord {
    pub fn intervened(&self) -> bool {
        self.nu == 1
    }

    /// The action that was executed.
    pub fn executed(&self) -> &Action {
        self.a_h.as_ref().unwrap_or(&self.a_r)
    }
}

/// Checks the per-episode record invariants; errors carry the record index.
pub fn validate_episode(records: &[TransitionRecord]) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Record {
            index: 0,
            msg: "episode has no records".into(),
        });
    }
    let bad = |index: usize, msg: &str| Err(Error::Record {
        index,
        msg: msg.to_string(),
    });
    let ep = records[0].ep;
    let last = records.len() - 1;
    for (i, r) in records.iter().enumerate() {
        match (r.nu, &r.a_h) {
            (0, None) | (1, Some(_)) => {}
            (0, Some(_)) => return bad(i, "nu=0 but a_h is present"),
            (1, None) => return bad(i, "nu=1 but a_h is absent"),
            _ => return bad(i, "nu must be 0 or 1"),
        }
        if r.ep != ep {
            return bad(i, "episode index changes within an episode");
        }
        if i > 0 && r.t <= records[i - 1].t {
            return bad(i, "t is not strictly increasing");
        }
        if r.done != (i == last) {
            return bad(i, "done must be set on the last record only");
        }
        if r.success && !r.done {
            return bad(i, "success on a non-terminal record");
        }
        if r.obs.len() != r.next_obs.len() {
            return bad(i, "obs and next_obs differ in length");
        }
        if r.obs.iter().chain(&r.next_obs).any(|v| !v.is_finite()) || !r.reward.is_finite() {
            return bad(i, "non-finite value");
        }
    }
    Ok(())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IterEntry {
    pub file: String,
    /// Byte offset of each appended episode.
    pub offsets: Vec<u64>,
    pub records: u64,
    pub interventions: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub env: EnvSpec,
    pub seeds: Vec<u64>,
    pub c: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub code_version: String,
    #[serde(default)]
    pub iters: BTreeMap<u64, IterEntry>,
}

impl RunManifest {
    pub fn new(config_hash: String, env: EnvSpec, seeds: Vec<u64>, c: f64, sigma: f64, lambda: f64) -> Self {
        Self {
            config_hash,
            env,
            seeds,
            c,
            sigma,
            lambda,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            iters: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetFilter {
    pub max_iter: Option<u64>,
    pub env: Option<String>,
    pub source: Option<Source>,
}

/// A run directory: `manifest.json` plus one `iter_<i>.jsonl` per iteration.
#[derive(Debug)]
pub struct RunStore {
    dir: PathBuf,
    manifest: RunManifest,
}

pub(crate) fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    {
        let mut f = BufWriter::new(File::create(&tmp)?);
        serde_json::to_writer_pretty(&mut f, value)?;
        f.write_all(b"\n")?;
        f.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

impl RunStore {
    pub fn create(dir: impl Into<PathBuf>, manifest: RunManifest) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let store = Self { dir, manifest };
        store.save_manifest()?;
        Ok(store)
    }

    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        let text = fs::read_to_string(dir.join("manifest.json"))?;
        let manifest = serde_json::from_str(&text)?;
        Ok(Self { dir, manifest })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    fn save_manifest(&self) -> Result<()> {
        write_json_atomic(&self.dir.join("manifest.json"), &self.manifest)
    }

    pub fn iter_file(&self, iter: u64) -> PathBuf {
        self.dir.join(format!("iter_{iter}.jsonl"))
    }

    /// Validates and appends one episode; returns its byte offset in the
    /// iteration file.
    pub fn append_episode(&mut self, records: &[TransitionRecord]) -> Result<u64> {
        validate_episode(records)?;
        let iter = records[0].iter;
        if let Some(i) = records.iter().position(|r| r.iter != iter) {
            return Err(Error::Record {
                index: i,
                msg: "iteration changes within an episode".into(),
            });
        }
        let path = self.iter_file(iter);
        let mut f = OpenOptions::new().create(true).append(true).open(&path)?;
        let offset = f.metadata()?.len();
        let mut buf = Vec::new();
        for r in records {
            serde_json::to_writer(&mut buf, r)?;
            buf.push(b'\n');
        }
        f.write_all(&buf)?;
        f.sync_data()?;
        let entry = self.manifest.iters.entry(iter).or_insert_with(|| IterEntry {
            file: format!("iter_{iter}.jsonl"),
            ..Default::default()
        });
        entry.offsets.push(offset);
        entry.records += records.len() as u64;
        entry.interventions += records.iter().filter(|r| r.intervened()).count() as u64;
        self.save_manifest()?;
        Ok(offset)
    }

    /// Records of all listed iterations passing `filter`, in iteration then
    /// file order.
    pub fn load_dataset(&self, filter: &DatasetFilter) -> Result<Vec<TransitionRecord>> {
        if let Some(env) = &filter.env {
            if env != self.manifest.env.name() {
                return Ok(Vec::new());
            }
        }
        let mut out = Vec::new();
        for (iter, entry) in &self.manifest.iters {
            if filter.max_iter.is_some_and(|m| *iter > m) {
                continue;
            }
            for r in read_jsonl(&self.dir.join(&entry.file))? {
                if filter.source.is_none_or(|s| s == r.source) {
                    out.push(r);
                }
            }
        }
        Ok(out)
    }
}

pub fn read_jsonl(path: &Path) -> Result<Vec<TransitionRecord>> {
    let f = File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r = serde_json::from_str(&line).map_err(|e| Error::Record {
            index: i,
            msg: format!("{}: {e}", path.display()),
        })?;
        out.push(r);
    }
    Ok(out)
}

/// Splits a flat record list back into episodes (by `(iter, ep)` runs).
pub fn episodes(records: &[TransitionRecord]) -> Vec<&[TransitionRecord]> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=records.len() {
        if i == records.len() || (records[i].ep, records[i].iter) != (records[start].ep, records[start].iter) {
            if start < i {
                out.push(&records[start..i]);
            }
            start = i;
        }
    }
    out
}

pub fn intervention_ratio(records: &[TransitionRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().filter(|r| r.intervened()).count() as f64 / records.len() as f64
}
