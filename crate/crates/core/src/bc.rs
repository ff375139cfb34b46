//! Weighted behavioural cloning (negative log-likelihood) on a fixed dataset.

use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::diffnet::{Adam, Mlp};
use crate::error::{Error, Result};
use crate::rng::{self, tag};
use rand::seq::SliceRandom;

fn d_epochs() -> usize {
    100
}
fn d_batch() -> usize {
    64
}
fn d_lr() -> f64 {
    1e-3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BcConfig {
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_lr")]
    pub lr: f64,
}

impl Default for BcConfig {
    fn default() -> Self {
        Self {
            epochs: d_epochs(),
            batch_size: d_batch(),
            lr: d_lr(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub obs: Vec<f64>,
    pub action: Action,
    pub weight: f64,
}

impl Sample {
    pub fn new(obs: Vec<f64>, action: Action) -> Self {
        Self {
            obs,
            action,
            weight: 1.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BcReport {
    /// Weighted mean NLL per epoch, measured during the pass.
    pub epoch_loss: Vec<f64>,
    pub steps: usize,
}

/// Shuffled minibatch index lists for one epoch.
pub fn epoch_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut r = rng::stream(seed, &[tag::BATCH, epoch as u64]);
    idx.shuffle(&mut r);
    idx.chunks(batch_size.max(1)).map(|c| c.to_vec()).collect()
}

/// Weighted NLL of one batch and its parameter gradient (mean over the batch).
pub fn batch_nll(net: &Mlp, data: &[Sample], batch: &[usize]) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; net.n_params()];
    let mut loss = 0.0;
    let inv = 1.0 / batch.len() as f64;
    for &i in batch {
        let s = &data[i];
        let (dist, tape) = net.forward_tape(&s.obs)?;
        let (nll, adj) = dist.nll(&s.action)?;
        let w = s.weight * inv;
        loss += w * nll;
        let d_raw = net.head_adjoint(&tape, &adj.scaled(w))?;
        net.backward_sample(&tape, &d_raw, &mut grad);
    }
    Ok((loss, grad))
}

/// Trains `net` in place. Weights are used as given.
pub fn train_bc(net: &mut Mlp, data: &[Sample], cfg: &BcConfig, seed: u64) -> Result<BcReport> {
    if data.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut adam = Adam::new(net.n_params());
    let mut report = BcReport::default();
    for epoch in 0..cfg.epochs {
        let mut total = 0.0;
        let batches = epoch_batches(data.len(), cfg.batch_size, seed, epoch);
        for b in &batches {
            let (loss, grad) = batch_nll(net, data, b)?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!("bc loss {loss} at epoch {epoch}")));
            }
            total += loss * b.len() as f64;
            adam.step(&mut net.params, &grad, cfg.lr)?;
            report.steps += 1;
        }
        report.epoch_loss.push(total / data.len() as f64);
    }
    Ok(report)
}

/// Unweighted mean NLL.
pub fn mean_nll(net: &Mlp, data: &[Sample]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut s = 0.0;
    for d in data {
        s += net.forward(&d.obs)?.nll(&d.action)?.0;
    }
    Ok(s / data.len() as f64)
}

/// Fraction of samples whose label is the net's most likely action.
pub fn top1_agreement(net: &Mlp, data: &[Sample]) -> Result<f64> {
    let mut hit = 0usize;
    for d in data {
        if net.forward(&d.obs)?.mode() == d.action {
            hit += 1;
        }
    }
    Ok(hit as f64 / data.len().max(1) as f64)
}
