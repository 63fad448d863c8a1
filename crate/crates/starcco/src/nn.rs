//! Minimal feedforward policy and two-head value network with exact
//! reverse-mode gradients.
//!
//! The network is a shared tanh trunk feeding categorical heads (one per
//! discrete action dimension), a Gaussian mean head for the continuous
//! dimensions with a state-independent learnable log-std, and a two-output
//! value head. Parameters live in one flat vector so gradient steps,
//! checkpoints, and the min-norm combination all work on plain slices.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 1.0;
const CHECKPOINT_VERSION: u32 = 1;

/// Network shape: trunk sizes and head dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetArch {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    /// Category count per discrete head.
    pub categorical_heads: Vec<usize>,
    /// Number of continuous outputs.
    pub gaussian_dims: usize,
    /// Initial value of the shared log-std parameters.
    pub init_log_std: f64,
}

impl NetArch {
    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Config("input_dim must be positive".into()));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config("hidden sizes must be positive".into()));
        }
        if self.categorical_heads.iter().any(|&c| c == 0) {
            return Err(Error::Config("categorical heads need at least one category".into()));
        }
        if !(LOG_STD_MIN < self.init_log_std && self.init_log_std < LOG_STD_MAX) {
            return Err(Error::Config(format!(
                "init_log_std must lie strictly inside [{LOG_STD_MIN}, {LOG_STD_MAX}]"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct LinearSlot {
    w: usize,
    b: usize,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Clone)]
struct Layout {
    trunk: Vec<LinearSlot>,
    cats: Vec<LinearSlot>,
    gauss: LinearSlot,
    value: LinearSlot,
    log_std: usize,
    total: usize,
}

impl Layout {
    fn new(arch: &NetArch) -> Layout {
        let mut cursor = 0;
        let mut slot = |rows: usize, cols: usize| {
            let s = LinearSlot { w: cursor, b: cursor + rows * cols, rows, cols };
            cursor += rows * cols + rows;
            s
        };
        let mut trunk = Vec::new();
        let mut width = arch.input_dim;
        for &h in &arch.hidden {
            trunk.push(slot(h, width));
            width = h;
        }
        let cats = arch.categorical_heads.iter().map(|&c| slot(c, width)).collect();
        let gauss = slot(arch.gaussian_dims, width);
        let value = slot(2, width);
        let log_std = cursor;
        cursor += arch.gaussian_dims;
        Layout { trunk, cats, gauss, value, log_std, total: cursor }
    }
}

/// Everything the distributions need from one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutputs {
    pub logits: Vec<Vec<f64>>,
    pub gauss_mean: Vec<f64>,
    /// Clamped to `[LOG_STD_MIN, LOG_STD_MAX]`.
    pub log_std: Vec<f64>,
    pub values: [f64; 2],
}

/// Gradients of a scalar loss with respect to the head outputs.
#[derive(Debug, Clone)]
pub struct HeadGrads {
    pub logits: Vec<Vec<f64>>,
    pub gauss_mean: Vec<f64>,
    pub log_std: Vec<f64>,
    pub values: [f64; 2],
}

impl HeadGrads {
    pub fn zeros(arch: &NetArch) -> HeadGrads {
        HeadGrads {
            logits: arch.categorical_heads.iter().map(|&c| vec![0.0; c]).collect(),
            gauss_mean: vec![0.0; arch.gaussian_dims],
            log_std: vec![0.0; arch.gaussian_dims],
            values: [0.0; 2],
        }
    }
}

/// Cached activations from [`PolicyValueNet::forward`].
#[derive(Debug, Clone)]
pub struct ForwardPass {
    input: Vec<f64>,
    /// Post-tanh activation of each trunk layer.
    activations: Vec<Vec<f64>>,
    pub out: HeadOutputs,
}

/// One sampled (or greedy) action across all heads.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDraw {
    pub categorical: Vec<usize>,
    pub gaussian: Vec<f64>,
}

pub struct PolicyValueNet {
    arch: NetArch,
    layout: Layout,
    params: Vec<f64>,
}

fn linear_forward(params: &[f64], slot: &LinearSlot, x: &[f64]) -> Vec<f64> {
    (0..slot.rows)
        .map(|r| {
            let row = &params[slot.w + r * slot.cols..slot.w + (r + 1) * slot.cols];
            params[slot.b + r] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
        })
        .collect()
}

/// Accumulates dW and db for one linear layer and adds the input gradient
/// into `dx`.
fn linear_backward(
    params: &[f64],
    slot: &LinearSlot,
    x: &[f64],
    dy: &[f64],
    acc: &mut [f64],
    dx: &mut [f64],
) {
    for r in 0..slot.rows {
        let g = dy[r];
        if g == 0.0 {
            continue;
        }
        acc[slot.b + r] += g;
        let row = slot.w + r * slot.cols;
        for c in 0..slot.cols {
            acc[row + c] += g * x[c];
            dx[c] += params[row + c] * g;
        }
    }
}

impl PolicyValueNet {
    /// Fresh network: weights drawn `N(0, 1)/√fan_in`, biases zero, log-std
    /// at its configured initial value.
    pub fn new(arch: NetArch, rng: &mut impl Rng) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::new(&arch);
        let mut params = vec![0.0; layout.total];
        let mut init_slot = |slot: &LinearSlot, params: &mut Vec<f64>, rng: &mut dyn rand::RngCore| {
            let scale = 1.0 / (slot.cols as f64).sqrt();
            for w in &mut params[slot.w..slot.w + slot.rows * slot.cols] {
                let n: f64 = rng.sample(StandardNormal);
                *w = n * scale;
            }
        };
        for slot in layout.trunk.iter().chain(&layout.cats) {
            init_slot(slot, &mut params, rng);
        }
        init_slot(&layout.gauss, &mut params, rng);
        init_slot(&layout.value, &mut params, rng);
        for v in &mut params[layout.log_std..layout.log_std + arch.gaussian_dims] {
            *v = arch.init_log_std;
        }
        Ok(PolicyValueNet { arch, layout, params })
    }

    /// All-zero parameters (uniform policy, zero values).
    pub fn zeros(arch: NetArch) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::new(&arch);
        let params = vec![0.0; layout.total];
        Ok(PolicyValueNet { arch, layout, params })
    }

    pub fn arch(&self) -> &NetArch {
        &self.arch
    }

    pub fn num_params(&self) -> usize {
        self.layout.total
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.layout.total {
            return Err(Error::DimensionMismatch(format!(
                "{} parameters for a network of {}",
                params.len(),
                self.layout.total
            )));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    pub fn forward(&self, features: &[f64]) -> Result<ForwardPass> {
        if features.len() != self.arch.input_dim {
            return Err(Error::DimensionMismatch(format!(
                "{} features for input_dim {}",
                features.len(),
                self.arch.input_dim
            )));
        }
        let mut activations = Vec::with_capacity(self.layout.trunk.len());
        let mut x = features.to_vec();
        for slot in &self.layout.trunk {
            let mut z = linear_forward(&self.params, slot, &x);
            for v in &mut z {
                *v = v.tanh();
            }
            activations.push(z.clone());
            x = z;
        }
        let logits = self
            .layout
            .cats
            .iter()
            .map(|slot| linear_forward(&self.params, slot, &x))
            .collect();
        let gauss_mean = linear_forward(&self.params, &self.layout.gauss, &x);
        let value_out = linear_forward(&self.params, &self.layout.value, &x);
        let log_std = self.params
            [self.layout.log_std..self.layout.log_std + self.arch.gaussian_dims]
            .iter()
            .map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX))
            .collect();
        Ok(ForwardPass {
            input: features.to_vec(),
            activations,
            out: HeadOutputs {
                logits,
                gauss_mean,
                log_std,
                values: [value_out[0], value_out[1]],
            },
        })
    }

    /// Accumulates the parameter gradient of a scalar loss whose head-output
    /// gradients are `grads`, for the pass that produced them.
    pub fn backward(&self, pass: &ForwardPass, grads: &HeadGrads, acc: &mut [f64]) {
        debug_assert_eq!(acc.len(), self.layout.total);
        let h: &[f64] = pass.activations.last().map_or(&pass.input, Vec::as_slice);
        let mut dh = vec![0.0; h.len()];
        for (slot, dy) in self.layout.cats.iter().zip(&grads.logits) {
            linear_backward(&self.params, slot, h, dy, acc, &mut dh);
        }
        linear_backward(&self.params, &self.layout.gauss, h, &grads.gauss_mean, acc, &mut dh);
        linear_backward(&self.params, &self.layout.value, h, &grads.values, acc, &mut dh);
        for d in 0..self.arch.gaussian_dims {
            let raw = self.params[self.layout.log_std + d];
            // The clamp gates the gradient.
            if LOG_STD_MIN < raw && raw < LOG_STD_MAX {
                acc[self.layout.log_std + d] += grads.log_std[d];
            }
        }
        // Trunk, last layer first: dz = dh ⊙ (1 − tanh²).
        for (idx, slot) in self.layout.trunk.iter().enumerate().rev() {
            let a = &pass.activations[idx];
            let dz: Vec<f64> = dh.iter().zip(a).map(|(g, v)| g * (1.0 - v * v)).collect();
            let x: &[f64] = if idx == 0 {
                &pass.input
            } else {
                &pass.activations[idx - 1]
            };
            let mut dx = vec![0.0; x.len()];
            linear_backward(&self.params, slot, x, &dz, acc, &mut dx);
            dh = dx;
        }
    }
}

/// Numerically stable log-softmax (max subtraction).
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|&l| l - log_sum).collect()
}

fn gaussian_log_density(x: f64, mean: f64, log_std: f64) -> f64 {
    let std = log_std.exp();
    let z = (x - mean) / std;
    -0.5 * z * z - log_std - 0.5 * (2.0 * PI).ln()
}

/// Samples every head; returns the draw and its joint log-probability.
pub fn sample_action(out: &HeadOutputs, rng: &mut impl Rng) -> (ActionDraw, f64) {
    let mut log_prob = 0.0;
    let mut categorical = Vec::with_capacity(out.logits.len());
    for logits in &out.logits {
        let logp = log_softmax(logits);
        let u: f64 = rng.gen();
        let mut cum = 0.0;
        let mut chosen = logits.len() - 1;
        for (j, lp) in logp.iter().enumerate() {
            cum += lp.exp();
            if u < cum {
                chosen = j;
                break;
            }
        }
        log_prob += logp[chosen];
        categorical.push(chosen);
    }
    let mut gaussian = Vec::with_capacity(out.gauss_mean.len());
    for d in 0..out.gauss_mean.len() {
        let n: f64 = rng.sample(StandardNormal);
        let x = out.gauss_mean[d] + out.log_std[d].exp() * n;
        log_prob += gaussian_log_density(x, out.gauss_mean[d], out.log_std[d]);
        gaussian.push(x);
    }
    (ActionDraw { categorical, gaussian }, log_prob)
}

/// Exploration-free action: argmax categories and Gaussian means.
pub fn greedy_action(out: &HeadOutputs) -> ActionDraw {
    let categorical = out
        .logits
        .iter()
        .map(|logits| {
            logits
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(j, _)| j)
                .unwrap_or(0)
        })
        .collect();
    ActionDraw { categorical, gaussian: out.gauss_mean.clone() }
}

/// Joint log-probability of `action` under the distribution `out`.
pub fn log_prob(out: &HeadOutputs, action: &ActionDraw) -> f64 {
    let mut total = 0.0;
    for (logits, &chosen) in out.logits.iter().zip(&action.categorical) {
        total += log_softmax(logits)[chosen];
    }
    for d in 0..out.gauss_mean.len() {
        total += gaussian_log_density(action.gaussian[d], out.gauss_mean[d], out.log_std[d]);
    }
    total
}

/// Log-probability plus `scale · ∂logπ/∂heads` accumulated into `grads`.
pub fn log_prob_with_grads(
    out: &HeadOutputs,
    action: &ActionDraw,
    scale: f64,
    grads: &mut HeadGrads,
) -> f64 {
    let mut total = 0.0;
    for (i, (logits, &chosen)) in out.logits.iter().zip(&action.categorical).enumerate() {
        let logp = log_softmax(logits);
        total += logp[chosen];
        for (j, lp) in logp.iter().enumerate() {
            let indicator = if j == chosen { 1.0 } else { 0.0 };
            grads.logits[i][j] += scale * (indicator - lp.exp());
        }
    }
    for d in 0..out.gauss_mean.len() {
        let std = out.log_std[d].exp();
        let z = (action.gaussian[d] - out.gauss_mean[d]) / std;
        total += gaussian_log_density(action.gaussian[d], out.gauss_mean[d], out.log_std[d]);
        grads.gauss_mean[d] += scale * z / std;
        grads.log_std[d] += scale * (z * z - 1.0);
    }
    total
}

/// `KL(new ‖ old)` summed over every head, in closed form.
pub fn kl_divergence(new: &HeadOutputs, old: &HeadOutputs) -> f64 {
    let mut total = 0.0;
    for (ln, lo) in new.logits.iter().zip(&old.logits) {
        let pn = log_softmax(ln);
        let po = log_softmax(lo);
        total += pn
            .iter()
            .zip(&po)
            .map(|(&a, &b)| a.exp() * (a - b))
            .sum::<f64>();
    }
    for d in 0..new.gauss_mean.len() {
        let (sn, so) = (new.log_std[d].exp(), old.log_std[d].exp());
        let dm = new.gauss_mean[d] - old.gauss_mean[d];
        total += old.log_std[d] - new.log_std[d] + (sn * sn + dm * dm) / (2.0 * so * so) - 0.5;
    }
    total
}

/// KL plus `scale · ∂KL/∂(new heads)` accumulated into `grads`.
pub fn kl_with_grads(
    new: &HeadOutputs,
    old: &HeadOutputs,
    scale: f64,
    grads: &mut HeadGrads,
) -> f64 {
    let mut total = 0.0;
    for (i, (ln, lo)) in new.logits.iter().zip(&old.logits).enumerate() {
        let pn = log_softmax(ln);
        let po = log_softmax(lo);
        let head_kl: f64 = pn
            .iter()
            .zip(&po)
            .map(|(&a, &b)| a.exp() * (a - b))
            .sum();
        total += head_kl;
        for j in 0..pn.len() {
            grads.logits[i][j] += scale * pn[j].exp() * ((pn[j] - po[j]) - head_kl);
        }
    }
    for d in 0..new.gauss_mean.len() {
        let (sn, so) = (new.log_std[d].exp(), old.log_std[d].exp());
        let dm = new.gauss_mean[d] - old.gauss_mean[d];
        total += old.log_std[d] - new.log_std[d] + (sn * sn + dm * dm) / (2.0 * so * so) - 0.5;
        grads.gauss_mean[d] += scale * dm / (so * so);
        grads.log_std[d] += scale * (sn * sn / (so * so) - 1.0);
    }
    total
}

/// Versioned parameter checkpoint; the JSON round-trip is bit-exact.
#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub arch: NetArch,
    pub params: Vec<f64>,
}

pub fn save_checkpoint(net: &PolicyValueNet, path: &Path) -> Result<()> {
    let checkpoint = Checkpoint {
        version: CHECKPOINT_VERSION,
        arch: net.arch.clone(),
        params: net.params.clone(),
    };
    let file = std::fs::File::create(path)?;
    serde_json::to_writer(std::io::BufWriter::new(file), &checkpoint)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<PolicyValueNet> {
    let file = std::fs::File::open(path)?;
    let checkpoint: Checkpoint = serde_json::from_reader(std::io::BufReader::new(file))?;
    if checkpoint.version != CHECKPOINT_VERSION {
        return Err(Error::Config(format!(
            "checkpoint version {} (expected {CHECKPOINT_VERSION})",
            checkpoint.version
        )));
    }
    let mut net = PolicyValueNet::zeros(checkpoint.arch)?;
    net.set_params(&checkpoint.params)?;
    Ok(net)
}
