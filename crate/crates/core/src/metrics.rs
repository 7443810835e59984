//! Sample-quality and convergence metrics.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{argument, BfnError, Result};
use crate::forward::OneHotBatch;
use crate::predictors::CategoricalData;
use crate::rng::{chain_rng, fill_normal, Stream};
use crate::tensor::Matrix;

pub const DEFAULT_PROJECTIONS: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub name: String,
    pub value: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub auxiliary: Vec<(String, f64)>,
}

impl MetricReport {
    pub fn new(name: impl Into<String>, value: f64, n_samples: usize, seed: u64) -> Result<Self> {
        if !value.is_finite() || n_samples == 0 {
            return argument("a metric report needs a finite value and at least one sample");
        }
        Ok(Self { name: name.into(), value, n_samples, seed, auxiliary: Vec::new() })
    }

    pub fn with(mut self, key: impl Into<String>, value: f64) -> Self {
        self.auxiliary.push((key.into(), value));
        self
    }
}

/// 1-D squared W₂ between two equal-size samples by quantile matching.
fn w2_sq_sorted(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// Exact 1-D W₂ between two equal-size samples.
pub fn wasserstein2_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || a.len() != b.len() {
        return argument("1-D W2 needs two non-empty samples of equal size");
    }
    Ok(w2_sq_sorted(a.to_vec(), b.to_vec()).sqrt())
}

/// Mean over random unit directions of the 1-D W₂ of the projections.
pub fn sliced_wasserstein2(a: &Matrix, b: &Matrix, n_projections: usize, seed: u64) -> Result<f64> {
    if a.rows() == 0 || b.rows() == 0 {
        return argument("sliced W2 of an empty sample");
    }
    if a.cols() != b.cols() || a.cols() == 0 {
        return Err(BfnError::Shape(format!("sample widths {} and {} differ", a.cols(), b.cols())));
    }
    if a.rows() != b.rows() {
        return argument(format!("sliced W2 needs equal sample sizes, got {} and {}", a.rows(), b.rows()));
    }
    if n_projections == 0 {
        return argument("at least one projection");
    }
    let d = a.cols();
    let dists: Vec<f64> = (0..n_projections)
        .into_par_iter()
        .map(|p| {
            let mut rng = chain_rng(seed, p, Stream::Misc);
            let mut dir = vec![0.0; d];
            fill_normal(&mut rng, &mut dir);
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            dir.iter_mut().for_each(|v| *v /= norm);
            let proj = |m: &Matrix| m.iter_rows().map(|r| r.iter().zip(&dir).map(|(x, w)| x * w).sum()).collect();
            w2_sq_sorted(proj(a), proj(b)).sqrt()
        })
        .collect();
    Ok(dists.iter().sum::<f64>() / n_projections as f64)
}

/// Half the L1 distance between the empirical sequence law and `data`.
pub fn tv_enumerated(samples: &OneHotBatch, data: &CategoricalData) -> Result<f64> {
    if samples.dim() != data.dim() || samples.classes() != data.classes() {
        return Err(BfnError::Data(format!(
            "samples over {}^{} against data over {}^{}",
            samples.classes(),
            samples.dim(),
            data.classes(),
            data.dim()
        )));
    }
    if samples.n() == 0 {
        return argument("total variation of an empty sample");
    }
    let mut counts: HashMap<&[usize], usize> = HashMap::new();
    for i in 0..samples.n() {
        *counts.entry(samples.sequence(i)).or_default() += 1;
    }
    let n = samples.n() as f64;
    let mut tv = 0.0;
    let mut unmatched = n;
    for (seq, &p) in data.support().iter().zip(data.probs()) {
        let c = counts.get(seq.as_slice()).copied().unwrap_or(0) as f64;
        unmatched -= c;
        tv += (c / n - p).abs();
    }
    // mass on sequences outside the support
    tv += unmatched / n;
    Ok(0.5 * tv)
}

/// Mean over replicas of `Σ_t ‖a(t) − b(t)‖₁`.
///
/// Each run is a list of per-time matrices with one row per replica.
pub fn trajectory_l1_diff(run_a: &[Matrix], run_b: &[Matrix]) -> Result<f64> {
    if run_a.len() != run_b.len() || run_a.is_empty() {
        return argument(format!("trajectories of {} and {} time points", run_a.len(), run_b.len()));
    }
    let reps = run_a[0].rows();
    if reps == 0 {
        return argument("trajectories without replicas");
    }
    let mut total = 0.0;
    for (a, b) in run_a.iter().zip(run_b) {
        if a.shape() != b.shape() || a.rows() != reps {
            return argument("trajectories differ in shape");
        }
        total += a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).abs()).sum::<f64>();
    }
    Ok(total / reps as f64)
}

/// Mean Euclidean distance between matching rows.
pub fn mean_endpoint_error(a: &Matrix, b: &Matrix) -> Result<f64> {
    a.check_same_shape(b)?;
    if a.rows() == 0 {
        return argument("endpoint error of an empty sample");
    }
    let total: f64 = a
        .iter_rows()
        .zip(b.iter_rows())
        .map(|(r, s)| r.iter().zip(s).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
        .sum();
    Ok(total / a.rows() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least-squares fit of `ln(error)` against `ln(1/NFE)`.
pub fn convergence_slope(points: &[(usize, f64)]) -> Result<SlopeFit> {
    if points.len() < 3 {
        return argument("a slope fit needs at least three points");
    }
    if points.iter().any(|&(n, e)| n == 0 || !(e > 0.0) || !e.is_finite()) {
        return argument("slope fit needs positive NFE and positive finite errors");
    }
    let xs: Vec<f64> = points.iter().map(|&(n, _)| -(n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, e)| e.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return argument("slope fit needs at least two distinct NFE values");
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(SlopeFit { slope, intercept: my - slope * mx, r_squared })
}

/// Median of a non-empty slice.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return argument("median of nothing");
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Ok(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}
