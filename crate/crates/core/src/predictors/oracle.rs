//! Exact Bayes-posterior predictors for tractable toy data.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{PredictionKind, Predictor};
use crate::error::{domain, BfnError, Result};
use crate::forward::{OneHotBatch, StateBatch};
use crate::rng::{chain_rng, Stream};
use crate::schedules::{ContinuousSchedule, DiscreteSchedule};
use crate::tensor::Matrix;

/// Largest support the discrete oracle will enumerate.
pub const ENUMERATION_CAP: usize = 100_000;

/// Diagonal Gaussian mixture over `R^D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureData {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
}

impl MixtureData {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() || weights.len() != variances.len() {
            return Err(BfnError::Shape("mixture needs matching weights, means and variances".into()));
        }
        let dim = means[0].len();
        if dim == 0 || means.iter().chain(&variances).any(|r| r.len() != dim) {
            return Err(BfnError::Shape("every component needs the same positive dimension".into()));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(BfnError::Data("mixture weights must be a probability vector".into()));
        }
        if variances.iter().flatten().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(BfnError::Data("mixture variances must be positive".into()));
        }
        Ok(Self { weights, means, variances })
    }

    /// Point mass at `x`, represented with a vanishing variance.
    pub fn dirac(x: Vec<f64>) -> Result<Self> {
        let v = vec![1e-12; x.len()];
        Self::new(vec![1.0], vec![x], vec![v])
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn variances(&self) -> &[Vec<f64>] {
        &self.variances
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for (w, mu) in self.weights.iter().zip(&self.means) {
            for (acc, v) in m.iter_mut().zip(mu) {
                *acc += w * v;
            }
        }
        m
    }

    /// Trace of the data covariance.
    pub fn trace_cov(&self) -> f64 {
        let m = self.mean();
        self.weights
            .iter()
            .zip(self.means.iter().zip(&self.variances))
            .map(|(w, (mu, var))| {
                w * mu.iter().zip(var).zip(&m).map(|((a, v), b)| v + (a - b) * (a - b)).sum::<f64>()
            })
            .sum()
    }

    pub fn sample(&self, n: usize, seed: u64) -> Matrix {
        let d = self.dim();
        let mut out = Matrix::zeros(n, d);
        for i in 0..n {
            let mut rng = chain_rng(seed, i, Stream::Data);
            let u: f64 = rng.random();
            let j = pick(&self.weights, u);
            let row = out.row_mut(i);
            for (k, v) in row.iter_mut().enumerate() {
                let z: f64 = rng.sample(StandardNormal);
                *v = self.means[j][k] + self.variances[j][k].sqrt() * z;
            }
        }
        out
    }
}

fn pick(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (j, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return j;
        }
    }
    weights.len() - 1
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// E[x | μ(t)] under a [`MixtureData`] prior.
#[derive(Debug, Clone)]
pub struct MixtureOracle {
    data: MixtureData,
    sched: ContinuousSchedule,
}

impl MixtureOracle {
    pub fn new(data: MixtureData, sched: ContinuousSchedule) -> Self {
        Self { data, sched }
    }

    pub fn data(&self) -> &MixtureData {
        &self.data
    }

    fn posterior_mean(&self, mu: &[f64], g: f64, out: &mut [f64]) {
        let noise = g * (1.0 - g);
        let m = self.data.components();
        let mut logw = vec![0.0; m];
        for (j, lw) in logw.iter_mut().enumerate() {
            let mut acc = self.data.weights[j].ln();
            for (k, &x) in mu.iter().enumerate() {
                let var = g * g * self.data.variances[j][k] + noise;
                let r = x - g * self.data.means[j][k];
                acc -= 0.5 * (r * r / var + var.ln());
            }
            *lw = acc;
        }
        let norm = log_sum_exp(&logw);
        out.iter_mut().for_each(|v| *v = 0.0);
        for (j, lw) in logw.iter().enumerate() {
            let r = (lw - norm).exp();
            if r == 0.0 {
                continue;
            }
            for (k, (o, &x)) in out.iter_mut().zip(mu).enumerate() {
                let v = self.data.variances[j][k];
                let mean = self.data.means[j][k];
                // conjugate update written as a gain on the innovation
                let gain = v / (g * v + (1.0 - g));
                *o += r * (mean + gain * (x - g * mean));
            }
        }
    }
}

impl Predictor for MixtureOracle {
    fn kind(&self) -> PredictionKind {
        PredictionKind::DataX
    }

    fn predict(&self, state: &StateBatch) -> Result<Matrix> {
        if state.is_discrete() || state.dim != self.data.dim() {
            return Err(BfnError::Shape(format!(
                "mixture oracle expects continuous states of width {}",
                self.data.dim()
            )));
        }
        if !(0.0..1.0).contains(&state.t) {
            return domain(format!("mixture oracle needs t in [0, 1), got {}", state.t));
        }
        let g = self.sched.gamma(state.t)?;
        let d = state.dim;
        let mut out = Matrix::zeros(state.n_chains(), d);
        out.as_mut_slice()
            .par_chunks_mut(d)
            .zip(state.values.as_slice().par_chunks(d))
            .for_each(|(o, mu)| self.posterior_mean(mu, g, o));
        Ok(out)
    }
}

/// Distribution over sequences in `{0..K}^D` given by an explicit support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalData {
    classes: usize,
    dim: usize,
    support: Vec<Vec<usize>>,
    probs: Vec<f64>,
}

impl CategoricalData {
    pub fn new(classes: usize, dim: usize, support: Vec<Vec<usize>>, probs: Vec<f64>) -> Result<Self> {
        if support.is_empty() || support.len() != probs.len() {
            return Err(BfnError::Shape("support and probabilities must match and be non-empty".into()));
        }
        if support.len() > ENUMERATION_CAP {
            return Err(BfnError::Capacity(format!(
                "support of {} sequences exceeds the cap of {ENUMERATION_CAP}",
                support.len()
            )));
        }
        for s in &support {
            if s.len() != dim {
                return Err(BfnError::Shape(format!("sequence of length {} in a D={dim} support", s.len())));
            }
            if s.iter().any(|&c| c >= classes) {
                return Err(BfnError::Data(format!("sequence {s:?} has a class outside 0..{classes}")));
            }
        }
        let mut sorted = support.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != support.len() {
            return Err(BfnError::Data("support sequences must be distinct".into()));
        }
        if probs.iter().any(|&p| !(p >= 0.0)) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(BfnError::Data("probabilities must sum to one".into()));
        }
        Ok(Self { classes, dim, support, probs })
    }

    /// Every sequence of `{0..K}^D` with the given probabilities, in lexicographic order.
    pub fn enumerated(classes: usize, dim: usize, probs: Vec<f64>) -> Result<Self> {
        let total = checked_pow(classes, dim)?;
        let support = (0..total).map(|i| index_to_sequence(i, classes, dim)).collect();
        Self::new(classes, dim, support, probs)
    }

    pub fn uniform(classes: usize, dim: usize) -> Result<Self> {
        let total = checked_pow(classes, dim)?;
        Self::enumerated(classes, dim, vec![1.0 / total as f64; total])
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support(&self) -> &[Vec<usize>] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob_of(&self, seq: &[usize]) -> f64 {
        self.support.iter().position(|s| s == seq).map_or(0.0, |i| self.probs[i])
    }

    pub fn sample(&self, n: usize, seed: u64) -> OneHotBatch {
        let mut labels = Vec::with_capacity(n * self.dim);
        for i in 0..n {
            let mut rng = chain_rng(seed, i, Stream::Data);
            let j = pick(&self.probs, rng.random());
            labels.extend_from_slice(&self.support[j]);
        }
        OneHotBatch::new(self.dim, self.classes, labels).expect("support sequences are valid")
    }
}

fn checked_pow(k: usize, d: usize) -> Result<usize> {
    let mut total: usize = 1;
    for _ in 0..d {
        total = total
            .checked_mul(k)
            .filter(|&v| v <= ENUMERATION_CAP)
            .ok_or_else(|| BfnError::Capacity(format!("K^D = {k}^{d} exceeds {ENUMERATION_CAP}")))?;
    }
    Ok(total)
}

/// Lexicographic index → sequence; position 0 is the most significant digit.
pub(crate) fn index_to_sequence(mut i: usize, k: usize, d: usize) -> Vec<usize> {
    let mut s = vec![0; d];
    for p in (0..d).rev() {
        s[p] = i % k;
        i /= k;
    }
    s
}

/// E[e_x | z(t)] by enumeration of the support.
///
/// The likelihood N(z; β(K e_x − 1), KβI) depends on the sequence only
/// through z·e_x, so each sequence's log weight is `ln p + Σ_d z[d, x_d]`.
#[derive(Debug, Clone)]
pub struct CategoricalOracle {
    data: CategoricalData,
    sched: DiscreteSchedule,
}

impl CategoricalOracle {
    pub fn new(data: CategoricalData, sched: DiscreteSchedule) -> Result<Self> {
        if data.classes() != sched.classes() {
            return Err(BfnError::Shape(format!(
                "data has {} classes but schedule has {}",
                data.classes(),
                sched.classes()
            )));
        }
        Ok(Self { data, sched })
    }

    pub fn data(&self) -> &CategoricalData {
        &self.data
    }

    pub fn schedule(&self) -> &DiscreteSchedule {
        &self.sched
    }

    fn posterior(&self, z: &[f64], logw: &mut [f64], out: &mut [f64]) {
        let k = self.data.classes;
        for ((lw, seq), p) in logw.iter_mut().zip(&self.data.support).zip(&self.data.probs) {
            *lw = p.ln() + seq.iter().enumerate().map(|(pos, &c)| z[pos * k + c]).sum::<f64>();
        }
        let norm = log_sum_exp(logw);
        out.iter_mut().for_each(|v| *v = 0.0);
        for (lw, seq) in logw.iter().zip(&self.data.support) {
            let r = (lw - norm).exp();
            for (pos, &c) in seq.iter().enumerate() {
                out[pos * k + c] += r;
            }
        }
    }
}

impl Predictor for CategoricalOracle {
    fn kind(&self) -> PredictionKind {
        PredictionKind::OnehotE
    }

    fn predict(&self, state: &StateBatch) -> Result<Matrix> {
        if state.classes != self.data.classes || state.dim != self.data.dim {
            return Err(BfnError::Shape(format!(
                "categorical oracle expects D={}, K={}, got D={}, K={}",
                self.data.dim, self.data.classes, state.dim, state.classes
            )));
        }
        let b = self.sched.beta(state.t)?;
        if !(b > 0.0) {
            return domain(format!("categorical oracle needs β(t) > 0, got t = {}", state.t));
        }
        let w = state.values.cols();
        let mut out = Matrix::zeros(state.n_chains(), w);
        let n_support = self.data.support.len();
        out.as_mut_slice()
            .par_chunks_mut(w)
            .zip(state.values.as_slice().par_chunks(w))
            .for_each_init(
                || vec![0.0; n_support],
                |logw, (o, z)| self.posterior(z, logw, o),
            );
        Ok(out)
    }
}
