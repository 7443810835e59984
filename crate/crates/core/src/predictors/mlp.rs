//! A small fully connected network with hand-written backprop.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{PredictionKind, Predictor};
use crate::error::{argument, BfnError, Result};
use crate::forward::{softmax_in_place, OneHotBatch, StateBatch};
use crate::losses::{continuous_weight, discrete_weight, T_MIN};
use crate::rng::{chain_rng, fill_normal, Stream};
use crate::schedules::{ContinuousSchedule, DiscreteSchedule};
use crate::tensor::Matrix;

/// Number of sinusoidal time frequencies; each contributes a sin and a cos feature.
pub const TIME_FREQUENCIES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "modality", rename_all = "kebab-case")]
pub enum Modality {
    Continuous { dim: usize },
    Discrete { dim: usize, classes: usize },
}

impl Modality {
    /// Width of a flattened state row.
    pub fn width(&self) -> usize {
        match *self {
            Modality::Continuous { dim } => dim,
            Modality::Discrete { dim, classes } => dim * classes,
        }
    }

    pub fn kind(&self) -> PredictionKind {
        match self {
            Modality::Continuous { .. } => PredictionKind::NoiseEps,
            Modality::Discrete { .. } => PredictionKind::OnehotE,
        }
    }

    fn classes(&self) -> usize {
        match *self {
            Modality::Continuous { .. } => 0,
            Modality::Discrete { classes, .. } => classes,
        }
    }
}

/// Tanh MLP on `[state features, sin/cos(ω t)]`.
///
/// Continuous models read μ and emit ε̂. Discrete models read softmax(z)
/// and emit a softmax per position.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyMLP {
    modality: Modality,
    sizes: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl ToyMLP {
    pub fn new(modality: Modality, hidden: &[usize], seed: u64) -> Result<Self> {
        let sizes = layer_sizes(modality, hidden)?;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (l, pair) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let mut rng = chain_rng(seed, l, Stream::Init);
            let scale = (1.0 / fan_in as f64).sqrt();
            let w = (0..fan_in * fan_out).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
            weights.push(w);
            biases.push(vec![0.0; fan_out]);
        }
        Ok(Self { modality, sizes, weights, biases })
    }

    pub fn from_parts(modality: Modality, sizes: Vec<usize>, weights: Vec<Vec<f64>>, biases: Vec<Vec<f64>>) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(BfnError::Shape("an MLP needs at least an input and an output layer".into()));
        }
        let expect = layer_sizes(modality, &sizes[1..sizes.len() - 1])?;
        if expect != sizes {
            return Err(BfnError::Shape(format!("layer sizes {sizes:?} do not fit modality, expected {expect:?}")));
        }
        if weights.len() != sizes.len() - 1 || biases.len() != sizes.len() - 1 {
            return Err(BfnError::Shape("one weight and one bias tensor per layer".into()));
        }
        for (l, pair) in sizes.windows(2).enumerate() {
            if weights[l].len() != pair[0] * pair[1] || biases[l].len() != pair[1] {
                return Err(BfnError::Shape(format!("layer {l} tensors do not match {}x{}", pair[1], pair[0])));
            }
        }
        let m = Self { modality, sizes, weights, biases };
        if !m.is_finite() {
            return Err(BfnError::Data("non-finite parameters".into()));
        }
        Ok(m)
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn hidden(&self) -> &[usize] {
        &self.sizes[1..self.sizes.len() - 1]
    }

    /// Row-major `(out, in)` weight matrix of layer `l`.
    pub fn weights(&self, l: usize) -> &[f64] {
        &self.weights[l]
    }

    pub fn biases(&self, l: usize) -> &[f64] {
        &self.biases[l]
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(Vec::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.biases).flatten().all(|v| v.is_finite())
    }

    /// Parameters flattened as, per layer, weights then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(BfnError::Shape(format!("{} parameters for a model with {}", flat.len(), self.n_params())));
        }
        let mut off = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let (nw, nb) = (w.len(), b.len());
            w.copy_from_slice(&flat[off..off + nw]);
            off += nw;
            b.copy_from_slice(&flat[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    fn features(&self, row: &[f64], t: f64, out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(row);
        if let Modality::Discrete { classes, .. } = self.modality {
            for block in out.chunks_mut(classes) {
                softmax_in_place(block);
            }
        }
        for f in 0..TIME_FREQUENCIES {
            let w = (f + 1) as f64 * std::f64::consts::PI * t;
            out.push(w.sin());
            out.push(w.cos());
        }
    }

    /// Runs one row and returns the activations of every layer; the last
    /// entry is the network output after any output softmax.
    fn forward_trace(&self, row: &[f64], t: f64) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.sizes.len());
        let mut a0 = Vec::with_capacity(self.sizes[0]);
        self.features(row, t, &mut a0);
        acts.push(a0);
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let input = &acts[l];
            let n_in = input.len();
            let mut h: Vec<f64> = b
                .iter()
                .enumerate()
                .map(|(o, bias)| bias + w[o * n_in..(o + 1) * n_in].iter().zip(input).map(|(a, x)| a * x).sum::<f64>())
                .collect();
            if l < last {
                h.iter_mut().for_each(|v| *v = v.tanh());
            } else if let Modality::Discrete { classes, .. } = self.modality {
                for block in h.chunks_mut(classes) {
                    softmax_in_place(block);
                }
            }
            acts.push(h);
        }
        acts
    }

    pub fn forward_row(&self, row: &[f64], t: f64) -> Vec<f64> {
        self.forward_trace(row, t).pop().expect("at least one layer")
    }

    /// Adds the gradient of `scale · Σ_j (o_j − target_j)²` to `grad`.
    fn backward(&self, acts: &[Vec<f64>], target: &[f64], scale: f64, grad: &mut [f64]) {
        let out = acts.last().expect("trace");
        let mut delta: Vec<f64> = out.iter().zip(target).map(|(o, y)| 2.0 * scale * (o - y)).collect();
        if let Modality::Discrete { classes, .. } = self.modality {
            for (d, p) in delta.chunks_mut(classes).zip(out.chunks(classes)) {
                let dot: f64 = d.iter().zip(p).map(|(a, b)| a * b).sum();
                for (dv, pv) in d.iter_mut().zip(p) {
                    *dv = pv * (*dv - dot);
                }
            }
        }
        let offsets = self.offsets();
        for l in (0..self.weights.len()).rev() {
            let input = &acts[l];
            let n_in = input.len();
            let (wo, bo) = offsets[l];
            for (o, d) in delta.iter().enumerate() {
                for (i, x) in input.iter().enumerate() {
                    grad[wo + o * n_in + i] += d * x;
                }
                grad[bo + o] += d;
            }
            if l == 0 {
                break;
            }
            let w = &self.weights[l];
            let mut prev = vec![0.0; n_in];
            for (o, d) in delta.iter().enumerate() {
                for (i, p) in prev.iter_mut().enumerate() {
                    *p += w[o * n_in + i] * d;
                }
            }
            for (p, a) in prev.iter_mut().zip(input) {
                *p *= 1.0 - a * a;
            }
            delta = prev;
        }
    }

    fn offsets(&self) -> Vec<(usize, usize)> {
        let mut off = 0;
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| {
                let r = (off, off + w.len());
                off += w.len() + b.len();
                r
            })
            .collect()
    }

    fn batch_loss(&self, batch: &Batch) -> f64 {
        let n = batch.len() as f64;
        let mut acc = 0.0;
        for i in 0..batch.len() {
            let out = self.forward_row(batch.inputs.row(i), batch.ts[i]);
            let r: f64 = out.iter().zip(batch.targets.row(i)).map(|(o, y)| (o - y) * (o - y)).sum();
            acc += batch.weights[i] * r;
        }
        acc / n
    }

    fn batch_loss_grad(&self, batch: &Batch) -> (f64, Vec<f64>) {
        let n = batch.len() as f64;
        let mut grad = vec![0.0; self.n_params()];
        let mut acc = 0.0;
        for i in 0..batch.len() {
            let acts = self.forward_trace(batch.inputs.row(i), batch.ts[i]);
            let target = batch.targets.row(i);
            let r: f64 = acts.last().unwrap().iter().zip(target).map(|(o, y)| (o - y) * (o - y)).sum();
            acc += batch.weights[i] * r;
            self.backward(&acts, target, batch.weights[i] / n, &mut grad);
        }
        (acc / n, grad)
    }
}

fn layer_sizes(modality: Modality, hidden: &[usize]) -> Result<Vec<usize>> {
    let w = modality.width();
    if w == 0 {
        return argument("modality with zero width");
    }
    if let Modality::Discrete { classes, .. } = modality {
        if classes < 2 {
            return argument("discrete modality needs at least two classes");
        }
    }
    if hidden.contains(&0) {
        return argument("hidden layers must be non-empty");
    }
    let mut sizes = vec![w + 2 * TIME_FREQUENCIES];
    sizes.extend_from_slice(hidden);
    sizes.push(w);
    Ok(sizes)
}

impl Predictor for ToyMLP {
    fn kind(&self) -> PredictionKind {
        self.modality.kind()
    }

    fn predict(&self, state: &StateBatch) -> Result<Matrix> {
        mlp_forward(self, state)
    }
}

/// Evaluates the model on every chain of `state` at `state.t`.
pub fn mlp_forward(model: &ToyMLP, state: &StateBatch) -> Result<Matrix> {
    let w = model.modality.width();
    if state.values.cols() != w || state.classes != model.modality.classes() {
        return Err(BfnError::Shape(format!("model expects rows of width {w}, got {}", state.values.cols())));
    }
    if !state.values.is_finite() || !state.t.is_finite() {
        return argument("non-finite network input");
    }
    let mut out = Matrix::zeros(state.n_chains(), w);
    out.as_mut_slice()
        .par_chunks_mut(w)
        .zip(state.values.as_slice().par_chunks(w))
        .for_each(|(o, row)| o.copy_from_slice(&model.forward_row(row, state.t)));
    Ok(out)
}

/// Training data for either modality.
#[derive(Debug, Clone)]
pub enum TrainingSet {
    Continuous(Matrix),
    Discrete(OneHotBatch),
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        match self {
            TrainingSet::Continuous(x) => x.rows(),
            TrainingSet::Discrete(x) => x.n(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The objective a model is trained against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossSpec {
    ContinuousBfn(ContinuousSchedule),
    DiscreteBfn(DiscreteSchedule),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSpec {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        Self { kind: OptimizerKind::Adam, lr: 1e-3, batch_size: 64 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean minibatch loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
}

/// Inputs, targets, times and loss weights for a set of training draws.
struct Batch {
    inputs: Matrix,
    targets: Matrix,
    ts: Vec<f64>,
    weights: Vec<f64>,
}

impl Batch {
    fn len(&self) -> usize {
        self.ts.len()
    }
}

fn check_compat(model: &ToyMLP, set: &TrainingSet, loss: &LossSpec) -> Result<()> {
    match (model.modality, set, loss) {
        (Modality::Continuous { dim }, TrainingSet::Continuous(x), LossSpec::ContinuousBfn(_)) if x.cols() == dim => Ok(()),
        (Modality::Discrete { dim, classes }, TrainingSet::Discrete(x), LossSpec::DiscreteBfn(s))
            if x.dim() == dim && x.classes() == classes && s.classes() == classes =>
        {
            Ok(())
        }
        _ => argument("model, data and loss disagree on modality or shape"),
    }
}

/// Draws stratified times and noise for the rows `idx` of `set`.
fn draw_batch(set: &TrainingSet, loss: &LossSpec, idx: &[usize], seed: u64, salt: usize) -> Result<Batch> {
    let mut rng = chain_rng(seed, salt, Stream::Misc);
    let b = idx.len();
    let ts: Vec<f64> = (0..b)
        .map(|i| T_MIN + (1.0 - 2.0 * T_MIN) * (i as f64 + rng.random::<f64>()) / b as f64)
        .collect();
    match (set, loss) {
        (TrainingSet::Continuous(x), LossSpec::ContinuousBfn(s)) => {
            let d = x.cols();
            let mut eps = vec![0.0; b * d];
            fill_normal(&mut rng, &mut eps);
            let mut inputs = Matrix::zeros(b, d);
            let mut weights = Vec::with_capacity(b);
            for (i, &j) in idx.iter().enumerate() {
                let g = s.gamma(ts[i])?;
                let sd = (g * (1.0 - g)).sqrt();
                for (k, v) in inputs.row_mut(i).iter_mut().enumerate() {
                    *v = g * x.row(j)[k] + sd * eps[i * d + k];
                }
                weights.push(continuous_weight(s, ts[i])?);
            }
            Ok(Batch { inputs, targets: Matrix::from_vec(b, d, eps)?, ts, weights })
        }
        (TrainingSet::Discrete(x), LossSpec::DiscreteBfn(s)) => {
            let k = x.classes();
            let w = x.dim() * k;
            let kf = k as f64;
            let mut u = vec![0.0; b * w];
            fill_normal(&mut rng, &mut u);
            let mut inputs = Matrix::zeros(b, w);
            let mut targets = Matrix::zeros(b, w);
            let mut weights = Vec::with_capacity(b);
            for (i, &j) in idx.iter().enumerate() {
                let beta = s.beta(ts[i])?;
                let sd = (kf * beta).sqrt();
                for (pos, &c) in x.sequence(j).iter().enumerate() {
                    targets.row_mut(i)[pos * k + c] = 1.0;
                }
                for col in 0..w {
                    let e = targets.row(i)[col];
                    inputs.row_mut(i)[col] = beta * (kf * e - 1.0) + sd * u[i * w + col];
                }
                weights.push(discrete_weight(s, ts[i])?);
            }
            Ok(Batch { inputs, targets, ts, weights })
        }
        _ => argument("data and loss disagree on modality"),
    }
}

/// Average loss on one fixed draw of `(t, noise)` per sample of `set`.
pub fn heldout_loss(model: &ToyMLP, set: &TrainingSet, loss: &LossSpec, seed: u64) -> Result<f64> {
    check_compat(model, set, loss)?;
    if set.is_empty() {
        return argument("held-out set is empty");
    }
    let idx: Vec<usize> = (0..set.len()).collect();
    let batch = draw_batch(set, loss, &idx, seed, 0)?;
    Ok(model.batch_loss(&batch))
}

/// Result of comparing analytic and central-difference gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientAudit {
    /// `(parameter index, analytic, numeric, relative error)`.
    pub probes: Vec<(usize, f64, f64, f64)>,
    pub max_rel_error: f64,
}

impl GradientAudit {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error <= tol
    }
}

/// Compares backprop against central differences on `n_probes` random parameters.
pub fn gradient_check(model: &ToyMLP, set: &TrainingSet, loss: &LossSpec, n_probes: usize, seed: u64) -> Result<GradientAudit> {
    check_compat(model, set, loss)?;
    if set.is_empty() {
        return argument("gradient check needs data");
    }
    let idx: Vec<usize> = (0..set.len().min(32)).collect();
    let batch = draw_batch(set, loss, &idx, seed, 1)?;
    let (_, grad) = model.batch_loss_grad(&batch);
    let base = model.params();
    let mut rng = chain_rng(seed, 2, Stream::Misc);
    let mut probe_model = model.clone();
    let mut probes = Vec::with_capacity(n_probes);
    let mut max_rel: f64 = 0.0;
    for _ in 0..n_probes {
        let j = rng.random_range(0..base.len());
        let h = 1e-5 * base[j].abs().max(1.0);
        let mut p = base.clone();
        p[j] = base[j] + h;
        probe_model.set_params(&p)?;
        let up = probe_model.batch_loss(&batch);
        p[j] = base[j] - h;
        probe_model.set_params(&p)?;
        let down = probe_model.batch_loss(&batch);
        let numeric = (up - down) / (2.0 * h);
        let rel = (grad[j] - numeric).abs() / grad[j].abs().max(numeric.abs()).max(1e-6);
        max_rel = max_rel.max(rel);
        probes.push((j, grad[j], numeric, rel));
    }
    Ok(GradientAudit { probes, max_rel_error: max_rel })
}

/// Trains a copy of `model`; each epoch is one shuffled pass in minibatches.
pub fn mlp_train(
    model: &ToyMLP,
    set: &TrainingSet,
    loss: &LossSpec,
    opt: &OptimizerSpec,
    epochs: usize,
    seed: u64,
) -> Result<(ToyMLP, TrainHistory)> {
    check_compat(model, set, loss)?;
    if set.is_empty() {
        return argument("training set is empty");
    }
    if opt.batch_size == 0 || !(opt.lr > 0.0 && opt.lr.is_finite()) {
        return argument("optimizer needs a positive batch size and learning rate");
    }
    let mut m = model.clone();
    let mut params = m.params();
    let mut adam_m = vec![0.0; params.len()];
    let mut adam_v = vec![0.0; params.len()];
    let (b1, b2, adam_eps) = (0.9, 0.999, 1e-8);
    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..set.len()).collect();

    for epoch in 0..epochs {
        let mut shuffle = chain_rng(seed, epoch, Stream::Data);
        order.shuffle(&mut shuffle);
        let mut epoch_loss = 0.0;
        let mut n_batches = 0;
        for chunk in order.chunks(opt.batch_size) {
            let batch = draw_batch(set, loss, chunk, seed, history.steps + 1_000)?;
            let (l, grad) = m.batch_loss_grad(&batch);
            if !l.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(BfnError::Training(format!(
                    "non-finite loss {l} at epoch {epoch}, step {} (lr {}, batch {})",
                    history.steps, opt.lr, opt.batch_size
                )));
            }
            history.steps += 1;
            match opt.kind {
                OptimizerKind::Sgd => {
                    for (p, g) in params.iter_mut().zip(&grad) {
                        *p -= opt.lr * g;
                    }
                }
                OptimizerKind::Adam => {
                    let k = history.steps as i32;
                    let c1 = 1.0 - f64::powi(b1, k);
                    let c2 = 1.0 - f64::powi(b2, k);
                    for i in 0..params.len() {
                        adam_m[i] = b1 * adam_m[i] + (1.0 - b1) * grad[i];
                        adam_v[i] = b2 * adam_v[i] + (1.0 - b2) * grad[i] * grad[i];
                        params[i] -= opt.lr * (adam_m[i] / c1) / ((adam_v[i] / c2).sqrt() + adam_eps);
                    }
                }
            }
            m.set_params(&params)?;
            epoch_loss += l;
            n_batches += 1;
        }
        history.epoch_losses.push(epoch_loss / n_batches as f64);
    }
    if !m.is_finite() {
        return Err(BfnError::Training("parameters became non-finite".into()));
    }
    Ok((m, history))
}
