use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::error::{invalid, Error, Result};
use crate::math::{argmax, ln_2pi, log_softmax, softmax};
use crate::rng::{self, Rng};

/// Lower bound applied to every Gaussian-head variance.
pub const VAR_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

fn unit() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Head {
    Categorical {
        n_actions: usize,
    },
    /// Mean and log-variance per action dimension. `scale` maps the unit
    /// output range onto the action range: mean = scale * out, var = scale² * exp(out).
    DiagonalGaussian {
        action_dim: usize,
        #[serde(default = "unit")]
        scale: f64,
    },
}

impl Head {
    pub fn raw_dim(&self) -> usize {
        match *self {
            Head::Categorical { n_actions } => n_actions,
            Head::DiagonalGaussian { action_dim, .. } => 2 * action_dim,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub head: Head,
    #[serde(default)]
    pub activation: Activation,
}

/// Offsets of one dense layer inside the flat parameter vector. Weights are
/// stored input-major: `w[i * fan_out + o]` connects input `i` to output `o`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerLayout {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: usize,
    pub biases: usize,
}

impl NetSpec {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, head: Head) -> Self {
        Self {
            input_dim,
            hidden_dims,
            head,
            activation: Activation::Tanh,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(invalid("net input_dim must be >= 1"));
        }
        if self.hidden_dims.iter().any(|&h| h == 0) {
            return Err(invalid("net hidden dims must be >= 1"));
        }
        match self.head {
            Head::Categorical { n_actions } if n_actions == 0 => {
                Err(invalid("categorical head needs n_actions >= 1"))
            }
            Head::DiagonalGaussian { action_dim, scale } if action_dim == 0 || !(scale > 0.0) => {
                Err(invalid("gaussian head needs action_dim >= 1 and scale > 0"))
            }
            _ => Ok(()),
        }
    }

    pub fn layout(&self) -> Vec<LayerLayout> {
        let mut dims = vec![self.input_dim];
        dims.extend(&self.hidden_dims);
        dims.push(self.head.raw_dim());
        let mut offset = 0;
        dims.windows(2)
            .map(|w| {
                let l = LayerLayout {
                    fan_in: w[0],
                    fan_out: w[1],
                    weights: offset,
                    biases: offset + w[0] * w[1],
                };
                offset += w[0] * w[1] + w[1];
                l
            })
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.layout()
            .iter()
            .map(|l| l.fan_in * l.fan_out + l.fan_out)
            .sum()
    }
}

/// A policy-style distribution over actions.
#[derive(Clone, Debug, PartialEq)]
pub enum DistOutput {
    Categorical { probs: Vec<f64>, log_probs: Vec<f64> },
    Gaussian { mean: Vec<f64>, var: Vec<f64> },
}

impl DistOutput {
    pub fn categorical(probs: Vec<f64>) -> Self {
        let log_probs = probs.iter().map(|p| p.ln()).collect();
        DistOutput::Categorical { probs, log_probs }
    }

    pub fn probs(&self) -> Option<&[f64]> {
        match self {
            DistOutput::Categorical { probs, .. } => Some(probs),
            _ => None,
        }
    }

    pub fn log_prob(&self, action: &Action) -> Result<f64> {
        match (self, action) {
            (DistOutput::Categorical { log_probs, .. }, Action::Discrete(a)) => log_probs
                .get(*a)
                .copied()
                .ok_or_else(|| invalid(format!("action {a} out of range"))),
            (DistOutput::Gaussian { mean, var }, Action::Continuous(a)) => {
                if a.len() != mean.len() {
                    return Err(Error::Dim {
                        what: "gaussian action",
                        expected: mean.len(),
                        got: a.len(),
                    });
                }
                Ok(-0.5
                    * mean
                        .iter()
                        .zip(var)
                        .zip(a)
                        .map(|((m, v), x)| ln_2pi() + v.ln() + (x - m).powi(2) / v)
                        .sum::<f64>())
            }
            _ => Err(invalid("action kind does not match distribution kind")),
        }
    }

    /// Negative log-likelihood of `action` and its adjoint with respect to
    /// the distribution parameters.
    pub fn nll(&self, action: &Action) -> Result<(f64, DistAdjoint)> {
        let value = -self.log_prob(action)?;
        let adj = match (self, action) {
            (DistOutput::Categorical { probs, .. }, Action::Discrete(a)) => {
                let mut g = vec![0.0; probs.len()];
                g[*a] = -1.0;
                DistAdjoint::LogProbs(g)
            }
            (DistOutput::Gaussian { mean, var }, Action::Continuous(a)) => {
                let d_mean = mean
                    .iter()
                    .zip(var)
                    .zip(a)
                    .map(|((m, v), x)| -(x - m) / v)
                    .collect();
                let d_var = mean
                    .iter()
                    .zip(var)
                    .zip(a)
                    .map(|((m, v), x)| 0.5 * (1.0 / v - (x - m).powi(2) / (v * v)))
                    .collect();
                DistAdjoint::Gaussian { d_mean, d_var }
            }
            _ => unreachable!("checked by log_prob"),
        };
        Ok((value, adj))
    }

    pub fn sample(&self, rng: &mut Rng) -> Action {
        match self {
            DistOutput::Categorical { probs, .. } => {
                Action::Discrete(sample_index(probs, rng.random::<f64>()))
            }
            DistOutput::Gaussian { mean, var } => Action::Continuous(
                mean.iter()
                    .zip(var)
                    .map(|(m, v)| m + v.sqrt() * rng.sample::<f64, _>(rand_distr::StandardNormal))
                    .collect(),
            ),
        }
    }

    /// Most likely action (argmax, ties to the lowest index; or the mean).
    pub fn mode(&self) -> Action {
        match self {
            DistOutput::Categorical { probs, .. } => Action::Discrete(argmax(probs)),
            DistOutput::Gaussian { mean, .. } => Action::Continuous(mean.clone()),
        }
    }
}

/// Inverse-CDF draw from a probability vector given a uniform `u`.
pub(crate) fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}


/// Loss adjoints with respect to distribution parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum DistAdjoint {
    /// dL/d(log p) for a categorical head, log-probs treated as free coordinates.
    LogProbs(Vec<f64>),
    Gaussian { d_mean: Vec<f64>, d_var: Vec<f64> },
}

impl DistAdjoint {
    pub fn zeros_like(dist: &DistOutput) -> Self {
        match dist {
            DistOutput::Categorical { probs, .. } => DistAdjoint::LogProbs(vec![0.0; probs.len()]),
            DistOutput::Gaussian { mean, .. } => DistAdjoint::Gaussian {
                d_mean: vec![0.0; mean.len()],
                d_var: vec![0.0; mean.len()],
            },
        }
    }

    pub fn scaled(mut self, k: f64) -> Self {
        match &mut self {
            DistAdjoint::LogProbs(g) => g.iter_mut().for_each(|x| *x *= k),
            DistAdjoint::Gaussian { d_mean, d_var } => {
                d_mean.iter_mut().for_each(|x| *x *= k);
                d_var.iter_mut().for_each(|x| *x *= k);
            }
        }
        self
    }

    pub fn is_finite(&self) -> bool {
        match self {
            DistAdjoint::LogProbs(g) => g.iter().all(|x| x.is_finite()),
            DistAdjoint::Gaussian { d_mean, d_var } => {
                d_mean.iter().chain(d_var).all(|x| x.is_finite())
            }
        }
    }
}

/// Activations recorded by a forward pass, consumed by backward.
#[derive(Clone, Debug)]
pub struct Tape {
    /// `acts[0]` is the input; `acts[l]` the post-activation of hidden layer `l`.
    pub acts: Vec<Vec<f64>>,
    pub raw: Vec<f64>,
}

/// A multilayer perceptron with a distribution head.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    spec: NetSpec,
    layout: Vec<LayerLayout>,
    pub params: Vec<f64>,
}

impl Mlp {
    /// Glorot-uniform weights from a seeded stream, zero biases; the output
    /// layer is shrunk so fresh heads start near uniform / unit variance.
    pub fn new(spec: NetSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let layout = spec.layout();
        let mut params = vec![0.0; spec.n_params()];
        let mut rng = rng::stream(seed, &[rng::tag::INIT]);
        let last = layout.len() - 1;
        for (li, l) in layout.iter().enumerate() {
            let bound = (6.0 / (l.fan_in + l.fan_out) as f64).sqrt();
            let shrink = if li == last { 0.1 } else { 1.0 };
            for w in &mut params[l.weights..l.biases] {
                *w = shrink * rng.random_range(-bound..bound);
            }
        }
        Ok(Self {
            spec,
            layout,
            params,
        })
    }

    pub fn zeros(spec: NetSpec) -> Result<Self> {
        Self::from_params(spec.clone(), vec![0.0; spec.n_params()])
    }

    pub fn from_params(spec: NetSpec, params: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        let n = spec.n_params();
        if params.len() != n {
            return Err(Error::Dim {
                what: "parameter vector",
                expected: n,
                got: params.len(),
            });
        }
        Ok(Self {
            layout: spec.layout(),
            spec,
            params,
        })
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn layout(&self) -> &[LayerLayout] {
        &self.layout
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn with_params(&self, params: Vec<f64>) -> Result<Self> {
        Self::from_params(self.spec.clone(), params)
    }

    pub fn forward(&self, obs: &[f64]) -> Result<DistOutput> {
        Ok(self.forward_tape(obs)?.0)
    }

    pub fn forward_tape(&self, obs: &[f64]) -> Result<(DistOutput, Tape)> {
        if obs.len() != self.spec.input_dim {
            return Err(Error::Dim {
                what: "observation",
                expected: self.spec.input_dim,
                got: obs.len(),
            });
        }
        let mut acts = Vec::with_capacity(self.layout.len());
        acts.push(obs.to_vec());
        let last = self.layout.len() - 1;
        let mut raw = Vec::new();
        for (li, l) in self.layout.iter().enumerate() {
            let x = &acts[li];
            let mut y = self.params[l.biases..l.biases + l.fan_out].to_vec();
            for (i, &xi) in x.iter().enumerate() {
                // one-hot style inputs are mostly zeros
                if xi == 0.0 {
                    continue;
                }
                let row = &self.params[l.weights + i * l.fan_out..l.weights + (i + 1) * l.fan_out];
                for (yo, w) in y.iter_mut().zip(row) {
                    *yo += xi * w;
                }
            }
            if li == last {
                raw = y;
            } else {
                match self.spec.activation {
                    Activation::Tanh => y.iter_mut().for_each(|v| *v = v.tanh()),
                    Activation::Relu => y.iter_mut().for_each(|v| *v = v.max(0.0)),
                }
                acts.push(y);
            }
        }
        let dist = self.dist_from_raw(&raw);
        Ok((dist, Tape { acts, raw }))
    }

    fn dist_from_raw(&self, raw: &[f64]) -> DistOutput {
        match self.spec.head {
            Head::Categorical { .. } => DistOutput::Categorical {
                probs: softmax(raw),
                log_probs: log_softmax(raw),
            },
            Head::DiagonalGaussian { action_dim, scale } => DistOutput::Gaussian {
                mean: raw[..action_dim].iter().map(|m| scale * m).collect(),
                var: raw[action_dim..]
                    .iter()
                    .map(|lv| (scale * scale * lv.exp()).max(VAR_FLOOR))
                    .collect(),
            },
        }
    }

    /// Maps distribution-parameter adjoints onto raw head outputs.
    pub fn head_adjoint(&self, tape: &Tape, adj: &DistAdjoint) -> Result<Vec<f64>> {
        match (self.spec.head, adj) {
            (Head::Categorical { n_actions }, DistAdjoint::LogProbs(g)) => {
                if g.len() != n_actions {
                    return Err(Error::Dim {
                        what: "categorical adjoint",
                        expected: n_actions,
                        got: g.len(),
                    });
                }
                let probs = softmax(&tape.raw);
                let total: f64 = g.iter().sum();
                Ok(g.iter().zip(&probs).map(|(gi, p)| gi - p * total).collect())
            }
            (Head::DiagonalGaussian { action_dim, scale }, DistAdjoint::Gaussian { d_mean, d_var }) => {
                if d_mean.len() != action_dim || d_var.len() != action_dim {
                    return Err(Error::Dim {
                        what: "gaussian adjoint",
                        expected: action_dim,
                        got: d_mean.len(),
                    });
                }
                let mut out: Vec<f64> = d_mean.iter().map(|d| scale * d).collect();
                for (lv, dv) in tape.raw[action_dim..].iter().zip(d_var) {
                    let v = scale * scale * lv.exp();
                    out.push(if v > VAR_FLOOR { dv * v } else { 0.0 });
                }
                Ok(out)
            }
            _ => Err(invalid("adjoint kind does not match head kind")),
        }
    }

    /// Accumulates the parameter gradient of one sample into `grad`, given
    /// the loss adjoint of the raw head outputs.
    pub fn backward_sample(&self, tape: &Tape, d_raw: &[f64], grad: &mut [f64]) {
        let mut delta = d_raw.to_vec();
        for li in (0..self.layout.len()).rev() {
            let l = self.layout[li];
            let x = &tape.acts[li];
            for (g, d) in grad[l.biases..l.biases + l.fan_out].iter_mut().zip(&delta) {
                *g += d;
            }
            let mut d_in = vec![0.0; if li > 0 { l.fan_in } else { 0 }];
            for i in 0..l.fan_in {
                let xi = x[i];
                let wrow = l.weights + i * l.fan_out;
                if xi != 0.0 {
                    for (g, d) in grad[wrow..wrow + l.fan_out].iter_mut().zip(&delta) {
                        *g += xi * d;
                    }
                }
                if li > 0 {
                    d_in[i] = self.params[wrow..wrow + l.fan_out]
                        .iter()
                        .zip(&delta)
                        .map(|(w, d)| w * d)
                        .sum();
                }
            }
            if li > 0 {
                match self.spec.activation {
                    Activation::Tanh => {
                        for (d, h) in d_in.iter_mut().zip(x) {
                            *d *= 1.0 - h * h;
                        }
                    }
                    Activation::Relu => {
                        for (d, h) in d_in.iter_mut().zip(x) {
                            if *h <= 0.0 {
                                *d = 0.0;
                            }
                        }
                    }
                }
                delta = d_in;
            }
        }
    }

    /// Gradient of a batch loss given per-sample adjoints of the raw head
    /// outputs. Contributions are summed; fold any 1/B into the adjoints.
    pub fn backward(&self, obs_batch: &[Vec<f64>], adjoints: &[Vec<f64>]) -> Result<Vec<f64>> {
        if obs_batch.len() != adjoints.len() {
            return Err(Error::Dim {
                what: "adjoint batch",
                expected: obs_batch.len(),
                got: adjoints.len(),
            });
        }
        let mut grad = vec![0.0; self.n_params()];
        for (index, (obs, adj)) in obs_batch.iter().zip(adjoints).enumerate() {
            if adj.iter().any(|a| !a.is_finite()) {
                return Err(Error::NonFinite {
                    what: "adjoint",
                    index,
                });
            }
            if adj.len() != self.spec.head.raw_dim() {
                return Err(Error::Dim {
                    what: "adjoint",
                    expected: self.spec.head.raw_dim(),
                    got: adj.len(),
                });
            }
            let (_, tape) = self.forward_tape(obs)?;
            self.backward_sample(&tape, adj, &mut grad);
        }
        Ok(grad)
    }
}
