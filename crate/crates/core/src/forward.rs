//! Exact forward marginals and Euler–Maruyama simulation of the forward SDEs.

use rayon::prelude::*;

use crate::error::{argument, domain, BfnError, Result};
use crate::rng::{chain_rng, fill_normal, Stream};
use crate::schedules::{ContinuousSchedule, DiscreteSchedule, LinearSde};
use crate::tensor::Matrix;

/// A batch of chain states: μ rows of width `D` for continuous data, or
/// z rows of width `D·K` for discrete data (`classes == 0` marks continuous).
#[derive(Debug, Clone, PartialEq)]
pub struct StateBatch {
    pub values: Matrix,
    pub dim: usize,
    pub classes: usize,
    pub t: f64,
}

impl StateBatch {
    pub fn continuous(values: Matrix, t: f64) -> Self {
        let dim = values.cols();
        Self { values, dim, classes: 0, t }
    }

    pub fn discrete(values: Matrix, dim: usize, classes: usize, t: f64) -> Result<Self> {
        if values.cols() != dim * classes {
            return Err(BfnError::Shape(format!(
                "discrete state needs {} columns for D={dim}, K={classes}, got {}",
                dim * classes,
                values.cols()
            )));
        }
        Ok(Self { values, dim, classes, t })
    }

    pub fn n_chains(&self) -> usize {
        self.values.rows()
    }

    pub fn is_discrete(&self) -> bool {
        self.classes > 0
    }

    /// Same state values, relabelled to time `t`.
    pub fn at(&self, t: f64) -> StateBatch {
        StateBatch { t, ..self.clone() }
    }

    pub fn with_values(&self, values: Matrix, t: f64) -> StateBatch {
        StateBatch { values, dim: self.dim, classes: self.classes, t }
    }
}

/// One class index per (chain, position).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OneHotBatch {
    n: usize,
    dim: usize,
    classes: usize,
    labels: Vec<usize>,
}

impl OneHotBatch {
    pub fn new(dim: usize, classes: usize, labels: Vec<usize>) -> Result<Self> {
        if dim == 0 || labels.len() % dim != 0 {
            return Err(BfnError::Shape(format!("{} labels do not split into rows of {dim}", labels.len())));
        }
        if let Some(bad) = labels.iter().find(|&&c| c >= classes) {
            return Err(BfnError::Data(format!("class {bad} outside 0..{classes}")));
        }
        Ok(Self { n: labels.len() / dim, dim, classes, labels })
    }

    pub fn from_sequences(classes: usize, seqs: &[Vec<usize>]) -> Result<Self> {
        let dim = seqs.first().map_or(0, Vec::len);
        if seqs.iter().any(|s| s.len() != dim) {
            return Err(BfnError::Shape("sequences differ in length".into()));
        }
        Self::new(dim, classes, seqs.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sequence(&self, i: usize) -> &[usize] {
        &self.labels[i * self.dim..(i + 1) * self.dim]
    }

    /// Dense `(n, D·K)` one-hot matrix.
    pub fn to_matrix(&self) -> Matrix {
        let k = self.classes;
        let mut m = Matrix::zeros(self.n, self.dim * k);
        for i in 0..self.n {
            let row = m.row_mut(i);
            for (pos, &c) in self.sequence(i).iter().enumerate() {
                row[pos * k + c] = 1.0;
            }
        }
        m
    }
}

/// Draws μ(t) ~ N(γ(t)x, γ(t)(1−γ(t))I) for every row of `x`.
pub fn sample_mu_marginal(sched: &ContinuousSchedule, x: &Matrix, t: f64, seed: u64) -> Result<StateBatch> {
    let g = sched.gamma(t)?;
    let sd = (g * (1.0 - g)).sqrt();
    let mut out = Matrix::zeros(x.rows(), x.cols());
    out.as_mut_slice()
        .par_chunks_mut(x.cols().max(1))
        .enumerate()
        .for_each(|(i, row)| {
            let mut rng = chain_rng(seed, i, Stream::Init);
            fill_normal(&mut rng, row);
            for (v, xv) in row.iter_mut().zip(x.row(i)) {
                *v = g * xv + sd * *v;
            }
        });
    Ok(StateBatch::continuous(out, t))
}

/// Draws z(t) ~ N(β(t)(K e_x − 1), Kβ(t)I) for every sequence.
pub fn sample_z_marginal(sched: &DiscreteSchedule, x: &OneHotBatch, t: f64, seed: u64) -> Result<StateBatch> {
    if x.classes() != sched.classes() {
        return Err(BfnError::Shape(format!(
            "data has {} classes, schedule has {}",
            x.classes(),
            sched.classes()
        )));
    }
    let b = sched.beta(t)?;
    let k = sched.classes() as f64;
    let sd = (k * b).sqrt();
    let onehot = x.to_matrix();
    let width = onehot.cols();
    let mut out = Matrix::zeros(x.n(), width);
    out.as_mut_slice()
        .par_chunks_mut(width.max(1))
        .enumerate()
        .for_each(|(i, row)| {
            let mut rng = chain_rng(seed, i, Stream::Init);
            fill_normal(&mut rng, row);
            for (v, e) in row.iter_mut().zip(onehot.row(i)) {
                *v = b * (k * e - 1.0) + sd * *v;
            }
        });
    StateBatch::discrete(out, x.dim(), x.classes(), t)
}

/// Explicit Euler–Maruyama integration of a forward linear SDE.
#[derive(Debug, Clone, Copy)]
pub struct EulerMaruyama {
    pub n_steps: usize,
    /// Truncation: integration may not pass `1 - eta`.
    pub eta: f64,
    /// Forces every Gaussian increment to zero.
    pub noiseless: bool,
}

impl EulerMaruyama {
    pub fn new(n_steps: usize) -> Self {
        Self { n_steps, eta: crate::schedules::DEFAULT_ETA, noiseless: false }
    }

    pub fn noiseless(mut self) -> Self {
        self.noiseless = true;
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    /// Advances every chain from `start.t` to `t_end`.
    pub fn run<S: LinearSde + Sync>(&self, sde: &S, start: &StateBatch, t_end: f64, seed: u64) -> Result<StateBatch> {
        if self.n_steps == 0 {
            return argument("n_steps must be at least 1");
        }
        if t_end > 1.0 - self.eta {
            return domain(format!("t_end = {t_end} exceeds 1 - eta = {}", 1.0 - self.eta));
        }
        if t_end < start.t {
            return argument(format!("forward simulation cannot go back from {} to {t_end}", start.t));
        }
        let dt = (t_end - start.t) / self.n_steps as f64;
        let coeffs: Vec<(f64, f64)> = (0..self.n_steps)
            .map(|k| sde.coefficients(start.t + k as f64 * dt))
            .collect::<Result<_>>()?;
        let width = start.values.cols();
        let mut values = start.values.clone();
        let noiseless = self.noiseless;
        values
            .as_mut_slice()
            .par_chunks_mut(width.max(1))
            .enumerate()
            .for_each(|(i, row)| {
                let mut rng = chain_rng(seed, i, Stream::Gaussian);
                let mut u = vec![0.0; width];
                for &(drift, diff2) in &coeffs {
                    let scale = (diff2 * dt).sqrt();
                    if !noiseless {
                        fill_normal(&mut rng, &mut u);
                    }
                    for (s, n) in row.iter_mut().zip(&u) {
                        *s += drift * *s * dt + scale * n;
                    }
                }
            });
        Ok(start.with_values(values, t_end))
    }
}

/// θ = softmax(z) per (chain, position); output has the layout of `z`.
pub fn softmax_theta(z: &StateBatch) -> Result<Matrix> {
    if !z.is_discrete() {
        return argument("softmax_theta needs a discrete state");
    }
    let mut out = z.values.clone();
    for i in 0..out.rows() {
        for block in out.row_mut(i).chunks_exact_mut(z.classes) {
            softmax_in_place(block);
        }
    }
    Ok(out)
}

pub(crate) fn softmax_in_place(block: &mut [f64]) {
    let max = block.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in block.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in block.iter_mut() {
        *v /= sum;
    }
}
