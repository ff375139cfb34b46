//! Comparison methods: HG-DAgger, weighted BC (IWR / Sirius presets),
//! interventions-only BC, and intervention predictors.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::bc::{train_bc, BcConfig, BcReport, Sample};
use crate::datastore::{episodes, TransitionRecord};
use crate::diffnet::{Head, Mlp, NetSpec};
use crate::error::{invalid, Result};
use crate::rng::{self, tag};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobotWeight {
    /// Robot records share the intervention records' total weight.
    Balanced,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightingScheme {
    pub w_intervention: f64,
    pub w_robot: RobotWeight,
    pub w_pre_intervention: f64,
    pub pre_window: usize,
}

impl WeightingScheme {
    /// Class-balanced intervention / robot weights.
    pub fn iwr() -> Self {
        Self {
            w_intervention: 1.0,
            w_robot: RobotWeight::Balanced,
            w_pre_intervention: 0.0,
            pre_window: 0,
        }
    }

    /// Interventions up-weighted, the steps just before them down-weighted.
    pub fn sirius() -> Self {
        Self {
            w_intervention: 2.0,
            w_robot: RobotWeight::Fixed(1.0),
            w_pre_intervention: 0.1,
            pre_window: 5,
        }
    }

    pub fn uniform() -> Self {
        Self {
            w_intervention: 1.0,
            w_robot: RobotWeight::Fixed(1.0),
            w_pre_intervention: 1.0,
            pre_window: 0,
        }
    }
}

/// Per-record weights, normalized to mean 1. Equal raw weights map to
/// exactly 1.0.
pub fn scheme_weights(records: &[TransitionRecord], scheme: &WeightingScheme) -> Result<Vec<f64>> {
    if records.is_empty() {
        return Err(invalid("weighted BC needs a nonempty dataset"));
    }
    let finite = scheme.w_intervention.is_finite()
        && scheme.w_pre_intervention.is_finite()
        && match scheme.w_robot {
            RobotWeight::Fixed(w) => w.is_finite() && w >= 0.0,
            RobotWeight::Balanced => true,
        };
    if !finite || scheme.w_intervention < 0.0 || scheme.w_pre_intervention < 0.0 {
        return Err(invalid("weights must be finite and non-negative"));
    }
    // mark ν=0 records within `pre_window` steps before a ν=1 record
    let mut pre = vec![false; records.len()];
    let mut base = 0;
    for ep in episodes(records) {
        let mut next_hit: Option<usize> = None;
        for j in (0..ep.len()).rev() {
            if ep[j].nu == 1 {
                next_hit = Some(j);
            } else if let Some(h) = next_hit {
                pre[base + j] = h - j <= scheme.pre_window;
            }
        }
        base += ep.len();
    }
    let n_int = records.iter().filter(|r| r.nu == 1).count();
    let n_rob = records.len() - n_int;
    let w_robot = match scheme.w_robot {
        RobotWeight::Fixed(w) => w,
        RobotWeight::Balanced if n_rob > 0 => scheme.w_intervention * n_int as f64 / n_rob as f64,
        RobotWeight::Balanced => 0.0,
    };
    let raw: Vec<f64> = records
        .iter()
        .zip(&pre)
        .map(|(r, &p)| {
            if r.nu == 1 {
                scheme.w_intervention
            } else if p {
                scheme.w_pre_intervention
            } else {
                w_robot
            }
        })
        .collect();
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) {
        return Err(invalid("all sample weights are zero"));
    }
    if raw.iter().all(|w| *w == raw[0]) {
        return Ok(vec![1.0; raw.len()]);
    }
    let k = raw.len() as f64 / total;
    Ok(raw.into_iter().map(|w| w * k).collect())
}

fn label(r: &TransitionRecord) -> Action {
    r.executed().clone()
}

/// Weighted BC over all records (label a_h on takeovers, a_r otherwise),
/// warm-started from `policy`.
pub fn train_weighted_bc(
    records: &[TransitionRecord],
    policy: &Mlp,
    scheme: &WeightingScheme,
    cfg: &BcConfig,
    seed: u64,
) -> Result<(Mlp, BcReport)> {
    let w = scheme_weights(records, scheme)?;
    let data: Vec<Sample> = records
        .iter()
        .zip(w)
        .map(|(r, weight)| Sample {
            obs: r.obs.clone(),
            action: label(r),
            weight,
        })
        .collect();
    let mut net = policy.clone();
    let report = train_bc(&mut net, &data, cfg, seed)?;
    Ok((net, report))
}

fn intervention_samples(records: &[TransitionRecord]) -> Vec<Sample> {
    records
        .iter()
        .filter_map(|r| match (r.nu, &r.a_h) {
            (1, Some(a)) => Some(Sample::new(r.obs.clone(), a.clone())),
            _ => None,
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct HgDaggerReport {
    pub bc: BcReport,
    /// Records trained on; only takeovers are ever consumed.
    pub consumed: usize,
}

/// BC on the takeover records only, warm-started from the current policy.
pub fn train_hg_dagger(
    records: &[TransitionRecord],
    policy: &Mlp,
    cfg: &BcConfig,
    seed: u64,
) -> Result<(Mlp, HgDaggerReport)> {
    if records.is_empty() {
        return Err(invalid("HG-DAgger needs a nonempty dataset"));
    }
    let data = intervention_samples(records);
    if data.is_empty() {
        return Err(invalid("HG-DAgger needs at least one intervention record"));
    }
    let mut net = policy.clone();
    let bc = train_bc(&mut net, &data, cfg, seed)?;
    Ok((
        net,
        HgDaggerReport {
            bc,
            consumed: data.len(),
        },
    ))
}

/// BC on the takeover records only, from a fresh net.
pub fn train_bc_interventions(records: &[TransitionRecord], fresh: Mlp, cfg: &BcConfig, seed: u64) -> Result<Mlp> {
    let data = intervention_samples(records);
    if data.is_empty() {
        return Err(invalid("interventions-only BC needs at least one intervention record"));
    }
    let mut net = fresh;
    train_bc(&mut net, &data, cfg, seed)?;
    Ok(net)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub n: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub balanced_accuracy: f64,
}

/// Metrics with ν=1 as the positive class.
pub fn binary_metrics(pred: &[bool], truth: &[bool]) -> BinaryMetrics {
    let (mut tp, mut tn, mut fp, mut fneg) = (0.0, 0.0, 0.0, 0.0);
    for (p, t) in pred.iter().zip(truth) {
        match (p, t) {
            (true, true) => tp += 1.0,
            (false, false) => tn += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fneg += 1.0,
        }
    }
    let div = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
    let precision = div(tp, tp + fp);
    let recall = div(tp, tp + fneg);
    let specificity = div(tn, tn + fp);
    let pos = tp + fneg > 0.0;
    let neg = tn + fp > 0.0;
    BinaryMetrics {
        n: pred.len(),
        accuracy: div(tp + tn, pred.len() as f64),
        precision,
        recall,
        f1: div(2.0 * precision * recall, precision + recall),
        balanced_accuracy: match (pos, neg) {
            (true, true) => 0.5 * (recall + specificity),
            (true, false) => recall,
            (false, true) => specificity,
            (false, false) => 0.0,
        },
    }
}

fn truths(records: &[TransitionRecord]) -> Vec<bool> {
    records.iter().map(|r| r.nu == 1).collect()
}

/// Always predicts the more frequent ν (ties to "no intervention").
pub fn majority_predictor(records: &[TransitionRecord]) -> Result<(bool, BinaryMetrics)> {
    if records.is_empty() {
        return Err(invalid("majority predictor needs a nonempty dataset"));
    }
    let t = truths(records);
    let ones = t.iter().filter(|x| **x).count();
    let majority = ones * 2 > t.len();
    Ok((majority, binary_metrics(&vec![majority; t.len()], &t)))
}

pub fn classifier_spec(input_dim: usize, hidden: Vec<usize>) -> NetSpec {
    NetSpec::new(input_dim, hidden, Head::Categorical { n_actions: 2 })
}

/// Fits a 2-class (cross-entropy) state → ν classifier on all of `records`.
pub fn fit_intervention_classifier(
    records: &[TransitionRecord],
    spec: NetSpec,
    cfg: &BcConfig,
    seed: u64,
) -> Result<Mlp> {
    let t = truths(records);
    if t.iter().all(|x| *x) || t.iter().all(|x| !*x) {
        return Err(invalid("intervention classifier needs both classes in the data"));
    }
    let data: Vec<Sample> = records
        .iter()
        .map(|r| Sample::new(r.obs.clone(), Action::Discrete(usize::from(r.nu == 1))))
        .collect();
    let mut net = Mlp::new(spec, rng::mix(seed, &[tag::INIT, 2]))?;
    train_bc(&mut net, &data, cfg, rng::mix(seed, &[tag::BATCH, 2]))?;
    Ok(net)
}

pub fn evaluate_classifier(net: &Mlp, records: &[TransitionRecord]) -> Result<BinaryMetrics> {
    let mut pred = Vec::with_capacity(records.len());
    for r in records {
        let p = net.forward(&r.obs)?;
        pred.push(p.probs().map_or(false, |p| p[1] > 0.5));
    }
    Ok(binary_metrics(&pred, &truths(records)))
}

/// Shuffles `records` (seeded), fits on 80% and reports metrics on the rest.
pub fn train_intervention_classifier(
    records: &[TransitionRecord],
    spec: NetSpec,
    cfg: &BcConfig,
    seed: u64,
) -> Result<(Mlp, BinaryMetrics)> {
    let mut idx: Vec<usize> = (0..records.len()).collect();
    idx.shuffle(&mut rng::stream(seed, &[tag::SPLIT, 2]));
    let cut = records.len() * 4 / 5;
    let train: Vec<TransitionRecord> = idx[..cut].iter().map(|&i| records[i].clone()).collect();
    let test: Vec<TransitionRecord> = idx[cut..].iter().map(|&i| records[i].clone()).collect();
    if test.is_empty() {
        return Err(invalid("dataset too small to hold out a test split"));
    }
    let net = fit_intervention_classifier(&train, spec, cfg, seed)?;
    let m = evaluate_classifier(&net, &test)?;
    Ok((net, m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastore::Source;

    fn ep(nus: &[u8]) -> Vec<TransitionRecord> {
        nus.iter()
            .enumerate()
            .map(|(t, &nu)| TransitionRecord {
                ep: 0,
                t: t as u64,
                obs: vec![t as f64 / 10.0, 1.0],
                a_r: Action::Discrete(0),
                a_h: (nu == 1).then_some(Action::Discrete(1)),
                nu,
                next_obs: vec![0.0, 1.0],
                reward: 0.0,
                done: t + 1 == nus.len(),
                success: false,
                iter: 1,
                source: Source::SimHuman,
            })
            .collect()
    }

    #[test]
    fn iwr_balances_the_classes() {
        let r = ep(&[0, 0, 0, 0, 0, 0, 1, 1]);
        let w = scheme_weights(&r, &WeightingScheme::iwr()).unwrap();
        let int: f64 = w[6..].iter().sum();
        let rob: f64 = w[..6].iter().sum();
        assert!((int - rob).abs() < 1e-12);
        assert!((w.iter().sum::<f64>() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn sirius_downweights_the_lead_in() {
        let r = ep(&[0, 0, 0, 0, 0, 0, 0, 0, 1, 0]);
        let w = scheme_weights(&r, &WeightingScheme::sirius()).unwrap();
        assert!(w[2] > w[3]);
        assert!((w[3] - w[7]).abs() < 1e-12);
        assert!((w[8] / w[0] - 2.0).abs() < 1e-12);
        assert!((w[9] - w[0]).abs() < 1e-12);
    }

    #[test]
    fn uniform_weights_are_exactly_one() {
        let r = ep(&[0, 1, 0, 1]);
        assert_eq!(scheme_weights(&r, &WeightingScheme::uniform()).unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn metrics_on_a_known_confusion() {
        let m = binary_metrics(&[true, true, false, false], &[true, false, false, false]);
        assert_eq!(m.accuracy, 0.75);
        assert_eq!(m.precision, 0.5);
        assert_eq!(m.recall, 1.0);
        assert!((m.balanced_accuracy - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        let (maj, mm) = majority_predictor(&ep(&[0, 0, 1])).unwrap();
        assert!(!maj);
        assert_eq!(mm.balanced_accuracy, 0.5);
    }

    #[test]
    fn hg_dagger_reads_only_takeovers() {
        let spec = NetSpec::new(2, vec![4], Head::Categorical { n_actions: 2 });
        let net = Mlp::new(spec, 0).unwrap();
        let cfg = BcConfig { epochs: 2, ..Default::default() };
        let (_, rep) = train_hg_dagger(&ep(&[0, 1, 0, 1, 1]), &net, &cfg, 0).unwrap();
        assert_eq!(rep.consumed, 3);
        assert!(train_hg_dagger(&ep(&[0, 0]), &net, &cfg, 0).is_err());
        assert!(train_bc_interventions(&ep(&[0, 0]), net, &cfg, 0).is_err());
    }
}
