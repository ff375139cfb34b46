//! Parameter blobs: flat little-endian f64 with a JSON sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Adam, Mlp, NetSpec};
use crate::error::{Error, Result};

pub const LAYOUT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NetSidecar {
    pub layout_version: u32,
    pub spec: NetSpec,
    pub n_params: usize,
}

fn paths(dir: &Path, stem: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{stem}.bin")), dir.join(format!("{stem}.json")))
}

pub(crate) fn write_f64s(path: &Path, xs: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(xs.len() * 8);
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}

pub(crate) fn read_f64s(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path)?;
    if bytes.len() != expected * 8 {
        return Err(Error::Corrupt {
            path: path.display().to_string(),
            msg: format!("expected {} bytes, found {}", expected * 8, bytes.len()),
        });
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn save_net(net: &Mlp, dir: &Path, stem: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let (bin, json) = paths(dir, stem);
    write_f64s(&bin, &net.params)?;
    let side = NetSidecar {
        layout_version: LAYOUT_VERSION,
        spec: net.spec().clone(),
        n_params: net.n_params(),
    };
    fs::write(json, serde_json::to_string_pretty(&side)?)?;
    Ok(())
}

pub fn load_net(dir: &Path, stem: &str) -> Result<Mlp> {
    let (bin, json) = paths(dir, stem);
    let side: NetSidecar = serde_json::from_slice(&fs::read(&json)?)?;
    if side.layout_version != LAYOUT_VERSION {
        return Err(Error::LayoutVersion {
            found: side.layout_version,
            expected: LAYOUT_VERSION,
        });
    }
    if side.spec.n_params() != side.n_params {
        return Err(Error::Corrupt {
            path: json.display().to_string(),
            msg: "n_params disagrees with spec".into(),
        });
    }
    Mlp::from_params(side.spec, read_f64s(&bin, side.n_params)?)
}

pub fn save_adam(adam: &Adam, dir: &Path, stem: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut flat = adam.m.clone();
    flat.extend_from_slice(&adam.v);
    write_f64s(&dir.join(format!("{stem}.bin")), &flat)?;
    fs::write(
        dir.join(format!("{stem}.json")),
        serde_json::to_string_pretty(&adam)?,
    )?;
    Ok(())
}

pub fn load_adam(dir: &Path, stem: &str, n_params: usize) -> Result<Adam> {
    let mut adam: Adam = serde_json::from_slice(&fs::read(dir.join(format!("{stem}.json")))?)?;
    let flat = read_f64s(&dir.join(format!("{stem}.bin")), 2 * n_params)?;
    adam.m = flat[..n_params].to_vec();
    adam.v = flat[n_params..].to_vec();
    Ok(adam)
}
