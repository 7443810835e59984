//! Samplers for discrete data.
//!
//! The latent `z` lives in `R^{D·K}` and time runs from `t₀ = 1 − η` down to
//! `t_M = 0`, so `β(t) = β₁(1−t)²` grows along a run. Drivers take all `M`
//! steps and then read out `ê` at the final state.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{argument, domain, BfnError, Result};
use crate::forward::{softmax_theta, OneHotBatch, StateBatch};
use crate::predictors::{PredictionKind, Predictor};
use crate::rng::{chain_rng, fill_normal, Stream};
use crate::samplers_cont::NoiseSource;
use crate::schedules::{DiscreteSchedule, TimeGrid};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscreteSolver {
    BfnAncestralCs,
    SdeSolver1,
    SdeSolver2,
    OdeSolver1,
    OdeSolver2,
}

impl DiscreteSolver {
    pub const ALL: [DiscreteSolver; 5] =
        [Self::BfnAncestralCs, Self::SdeSolver1, Self::SdeSolver2, Self::OdeSolver1, Self::OdeSolver2];

    pub fn name(&self) -> &'static str {
        match self {
            Self::BfnAncestralCs => "bfn-ancestral-cs",
            Self::SdeSolver1 => "sde-solver1",
            Self::SdeSolver2 => "sde-solver2",
            Self::OdeSolver1 => "ode-solver1",
            Self::OdeSolver2 => "ode-solver2",
        }
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(self, Self::BfnAncestralCs | Self::SdeSolver1 | Self::SdeSolver2)
    }

    pub fn calls_per_step(&self) -> usize {
        match self {
            Self::OdeSolver2 => 2,
            _ => 1,
        }
    }

    /// Grid intervals that spend `nfe` predictor calls, at least one.
    pub fn steps_for_nfe(&self, nfe: usize) -> usize {
        (nfe / self.calls_per_step()).max(1)
    }
}

impl fmt::Display for DiscreteSolver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DiscreteSolver {
    type Err = BfnError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| BfnError::Argument(format!("unknown discrete solver '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Readout {
    #[default]
    Argmax,
    SoftmaxTheta,
    Categorical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSolverConfig {
    pub kind: DiscreteSolver,
    pub grid: TimeGrid,
    pub seed: u64,
    pub readout: Readout,
    pub record_trajectory: bool,
}

impl DiscreteSolverConfig {
    pub fn new(kind: DiscreteSolver, grid: TimeGrid, seed: u64) -> Self {
        Self { kind, grid, seed, readout: Readout::Argmax, record_trajectory: false }
    }
}

/// Draws `n` chains of `z₀ ~ N(0, Kβ(t₀) I)`.
pub fn init_z(sched: &DiscreteSchedule, t0: f64, n: usize, dim: usize, seed: u64) -> Result<StateBatch> {
    let k = sched.classes();
    let sd = (k as f64 * sched.beta(t0)?).sqrt();
    let w = dim * k;
    let mut m = Matrix::zeros(n, w);
    if w > 0 {
        m.as_mut_slice().par_chunks_mut(w).enumerate().for_each(|(i, row)| {
            let mut rng = chain_rng(seed, i, Stream::Init);
            fill_normal(&mut rng, row);
            row.iter_mut().for_each(|v| *v *= sd);
        });
    }
    StateBatch::discrete(m, dim, k, t0)
}

fn check_reverse(t_prev: f64, t_next: f64) -> Result<()> {
    if !(t_prev < 1.0) {
        return domain(format!("discrete step needs t_prev < 1, got {t_prev}"));
    }
    if !(t_prev > t_next && t_next >= 0.0) {
        return argument(format!("reverse-time step needs t_prev > t_next ≥ 0, got {t_prev} -> {t_next}"));
    }
    Ok(())
}

fn alpha(sched: &DiscreteSchedule, t_prev: f64, t_next: f64) -> Result<f64> {
    let a = sched.beta(t_next)? - sched.beta(t_prev)?;
    if !(a > 0.0) {
        return argument(format!("accuracy increment must be positive, got {a} for {t_prev} -> {t_next}"));
    }
    Ok(a)
}

fn e_hat(pred: &dyn Predictor, z: &StateBatch) -> Result<Matrix> {
    if pred.kind() != PredictionKind::OnehotE {
        return argument("discrete samplers need a onehot-e predictor");
    }
    pred.predict(z)
}

/// One categorical draw per position; `u01` holds one uniform per position.
pub fn categorical_onehot(probs: &Matrix, classes: usize, u01: &[f64]) -> Result<Matrix> {
    if probs.cols() % classes != 0 || u01.len() * classes != probs.rows() * probs.cols() {
        return Err(BfnError::Shape("one uniform per position is needed".into()));
    }
    let mut out = Matrix::zeros(probs.rows(), probs.cols());
    for ((o, p), u) in out.as_mut_slice().chunks_mut(classes).zip(probs.as_slice().chunks(classes)).zip(u01) {
        o[sample_index(p, *u)] = 1.0;
    }
    Ok(out)
}

fn sample_index(p: &[f64], u: f64) -> usize {
    let total: f64 = p.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    for (j, v) in p.iter().enumerate() {
        acc += v;
        if target < acc {
            return j;
        }
    }
    // round-off can leave target at the top; take the last class with mass
    p.iter().rposition(|&v| v > 0.0).unwrap_or(p.len() - 1)
}

/// `z ← z + α(K e − 1) + √(Kα) u` for a given per-position vector `e`.
pub fn increment_update(z: &Matrix, e: &Matrix, u: &Matrix, a: f64, classes: usize) -> Result<Matrix> {
    e.check_same_shape(z)?;
    u.check_same_shape(z)?;
    let k = classes as f64;
    let sd = (k * a).sqrt();
    let mut out = z.zip_map(e, |zv, ev| zv + a * (k * ev - 1.0))?;
    for (o, n) in out.as_mut_slice().iter_mut().zip(u.as_slice()) {
        *o += sd * n;
    }
    Ok(out)
}

/// Ancestral step with a categorical draw; `u01` holds one uniform per position.
pub fn step_bfn_ancestral_cs(
    z: &StateBatch,
    t_next: f64,
    pred: &dyn Predictor,
    sched: &DiscreteSchedule,
    u: &Matrix,
    u01: &[f64],
) -> Result<StateBatch> {
    check_reverse(z.t, t_next)?;
    let a = alpha(sched, z.t, t_next)?;
    let probs = e_hat(pred, z)?;
    let e = categorical_onehot(&probs, z.classes, u01)?;
    Ok(z.with_values(increment_update(&z.values, &e, u, a, z.classes)?, t_next))
}

/// First-order step of the reverse SDE (the ancestral step without its draw).
pub fn step_sde_solver1(
    z: &StateBatch,
    t_next: f64,
    pred: &dyn Predictor,
    sched: &DiscreteSchedule,
    u: &Matrix,
) -> Result<StateBatch> {
    check_reverse(z.t, t_next)?;
    let a = alpha(sched, z.t, t_next)?;
    let e = e_hat(pred, z)?;
    Ok(z.with_values(increment_update(&z.values, &e, u, a, z.classes)?, t_next))
}

/// `∫_s^t L(τ)² (τ − s) dτ` in closed form, with `L² = 2Kβ₁(1−τ)`.
pub fn sde2_correction_coefficient(sched: &DiscreteSchedule, s: f64, t: f64) -> f64 {
    let k = sched.classes() as f64;
    -(1.0 / 3.0) * k * sched.beta1() * (t - s).powi(2) * (s + 2.0 * t - 3.0)
}

/// Second-order SDE step from current and previous `ê`.
///
/// `e_prev` is `ê(z, t_prev)`; `hist` is `(ê, t)` from the step before.
/// The linear model of `ê` in time is integrated against `L²`.
pub fn sde_solver2_update(
    z: &Matrix,
    e_prev: &Matrix,
    hist: (&Matrix, f64),
    u: &Matrix,
    t_prev: f64,
    t_next: f64,
    sched: &DiscreteSchedule,
) -> Result<Matrix> {
    check_reverse(t_prev, t_next)?;
    let (e_old, t_old) = hist;
    if !(t_old > t_prev) {
        return argument("history must come from an earlier (larger) time");
    }
    e_old.check_same_shape(e_prev)?;
    let a = alpha(sched, t_prev, t_next)?;
    let c = sde2_correction_coefficient(sched, t_prev, t_next);
    let first = increment_update(z, e_prev, u, a, sched.classes())?;
    let inv = 1.0 / (t_old - t_prev);
    let mut out = first;
    for ((o, eo), ep) in out.as_mut_slice().iter_mut().zip(e_old.as_slice()).zip(e_prev.as_slice()) {
        *o -= c * (eo - ep) * inv;
    }
    Ok(out)
}

pub fn step_sde_solver2(
    z: &StateBatch,
    hist: Option<(&Matrix, f64)>,
    t_next: f64,
    pred: &dyn Predictor,
    sched: &DiscreteSchedule,
    u: &Matrix,
) -> Result<(StateBatch, Matrix)> {
    let hist = hist.ok_or_else(|| BfnError::Argument("second-order step needs a history evaluation".into()))?;
    let e = e_hat(pred, z)?;
    let next = sde_solver2_update(&z.values, &e, hist, u, z.t, t_next, sched)?;
    Ok((z.with_values(next, t_next), e))
}

/// Exact-in-`z` first-order ODE step with `ê` frozen at `t_prev`.
pub fn ode_solver1_update(z: &Matrix, e: &Matrix, t_prev: f64, t_next: f64, sched: &DiscreteSchedule) -> Result<Matrix> {
    check_reverse(t_prev, t_next)?;
    e.check_same_shape(z)?;
    let k = sched.classes() as f64;
    let ratio = (1.0 - t_next) / (1.0 - t_prev);
    let c = sched.beta1() * (1.0 - t_next) * (t_next - t_prev);
    z.zip_map(e, |zv, ev| ratio * zv + c * (1.0 - k * ev))
}

pub fn step_ode_solver1(z: &StateBatch, t_next: f64, pred: &dyn Predictor, sched: &DiscreteSchedule) -> Result<StateBatch> {
    check_reverse(z.t, t_next)?;
    let e = e_hat(pred, z)?;
    Ok(z.with_values(ode_solver1_update(&z.values, &e, z.t, t_next, sched)?, t_next))
}

/// Second-order ODE step from `ê` at `t_prev` and at the midpoint `t_mid`.
pub fn ode_solver2_update(
    z: &Matrix,
    e_prev: &Matrix,
    e_mid: &Matrix,
    t_prev: f64,
    t_mid: f64,
    t_next: f64,
    sched: &DiscreteSchedule,
) -> Result<Matrix> {
    check_reverse(t_prev, t_next)?;
    let k = sched.classes() as f64;
    let dt = t_next - t_prev;
    let ratio = (1.0 - t_next) / (1.0 - t_prev);
    let c = k * sched.beta1() * (1.0 - t_next);
    let lin = sched.beta1() * (1.0 - t_next) * dt;
    let inv = 1.0 / (t_mid - t_prev);
    let mut out = Matrix::zeros(z.rows(), z.cols());
    e_prev.check_same_shape(z)?;
    e_mid.check_same_shape(z)?;
    for (((o, zv), ep), em) in out.as_mut_slice().iter_mut().zip(z.as_slice()).zip(e_prev.as_slice()).zip(e_mid.as_slice()) {
        let d1 = (em - ep) * inv;
        *o = ratio * zv + lin - c * dt * ep - 0.5 * c * dt * dt * d1;
    }
    Ok(out)
}

pub fn step_ode_solver2(z: &StateBatch, t_next: f64, pred: &dyn Predictor, sched: &DiscreteSchedule) -> Result<StateBatch> {
    check_reverse(z.t, t_next)?;
    let t_mid = 0.5 * (z.t + t_next);
    let e_prev = e_hat(pred, z)?;
    let z_mid = z.with_values(ode_solver1_update(&z.values, &e_prev, z.t, t_mid, sched)?, t_mid);
    let e_mid = e_hat(pred, &z_mid)?;
    Ok(z.with_values(ode_solver2_update(&z.values, &e_prev, &e_mid, z.t, t_mid, t_next, sched)?, t_next))
}

/// Final output of a discrete run.
#[derive(Debug, Clone, PartialEq)]
pub enum ReadoutValue {
    Sequences(OneHotBatch),
    Theta(Matrix),
}

impl ReadoutValue {
    pub fn sequences(&self) -> Option<&OneHotBatch> {
        match self {
            ReadoutValue::Sequences(s) => Some(s),
            ReadoutValue::Theta(_) => None,
        }
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax_lowest(v: &[f64]) -> usize {
    let mut best = 0;
    for (j, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = j;
        }
    }
    best
}

/// Maps the final state to sequences or to θ. Categorical readout draws
/// from per-chain readout streams keyed by `seed`.
pub fn readout(z: &StateBatch, pred: &dyn Predictor, mode: Readout, seed: u64) -> Result<ReadoutValue> {
    let k = z.classes;
    match mode {
        Readout::SoftmaxTheta => Ok(ReadoutValue::Theta(softmax_theta(z)?)),
        Readout::Argmax => {
            let e = e_hat(pred, z)?;
            let labels = e.as_slice().chunks(k).map(argmax_lowest).collect();
            Ok(ReadoutValue::Sequences(OneHotBatch::new(z.dim, k, labels)?))
        }
        Readout::Categorical => {
            let e = e_hat(pred, z)?;
            let mut labels = Vec::with_capacity(z.n_chains() * z.dim);
            for (i, row) in e.iter_rows().enumerate() {
                let mut rng = chain_rng(seed, i, Stream::Readout);
                for block in row.chunks(k) {
                    labels.push(sample_index(block, rng.random()));
                }
            }
            Ok(ReadoutValue::Sequences(OneHotBatch::new(z.dim, k, labels)?))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteRun {
    pub output: ReadoutValue,
    pub final_z: StateBatch,
    pub nfe: usize,
    pub trajectory: Vec<Matrix>,
}

struct UniformSource {
    rngs: Vec<ChaCha8Rng>,
    width: usize,
}

impl UniformSource {
    fn new(seed: u64, n: usize, width: usize) -> Self {
        Self { rngs: (0..n).map(|i| chain_rng(seed, i, Stream::Categorical)).collect(), width }
    }

    fn draw(&mut self) -> Vec<f64> {
        let w = self.width;
        let mut out = vec![0.0; self.rngs.len() * w];
        if w == 0 {
            return out;
        }
        out.par_chunks_mut(w).zip(self.rngs.par_iter_mut()).for_each(|(row, rng)| {
            row.iter_mut().for_each(|v| *v = rng.random());
        });
        out
    }
}

/// Runs any discrete solver from `init` (at `grid.steps()[0]`).
///
/// Gaussian and categorical draws come from separate per-chain streams so
/// that runs with and without the categorical step can share noise.
pub fn run_discrete(
    config: &DiscreteSolverConfig,
    pred: &dyn Predictor,
    sched: &DiscreteSchedule,
    init: &StateBatch,
) -> Result<DiscreteRun> {
    use DiscreteSolver::*;
    let grid = config.grid.steps();
    if !init.is_discrete() || init.classes != sched.classes() {
        return Err(BfnError::Shape("initial state does not match the schedule's classes".into()));
    }
    if (init.t - grid[0]).abs() > 1e-12 {
        return argument(format!("initial state at t = {} but grid starts at {}", init.t, grid[0]));
    }
    let n = init.n_chains();
    let w = init.values.cols();
    let mut gauss = NoiseSource::new(config.seed, n, w, Stream::Gaussian);
    let mut unif = UniformSource::new(config.seed, n, init.dim);
    let mut z = init.clone();
    let mut nfe = 0;
    let mut trajectory = Vec::new();
    if config.record_trajectory {
        trajectory.push(z.values.clone());
    }
    let mut hist: Option<(Matrix, f64)> = None;

    for &tn in &grid[1..] {
        z = match config.kind {
            BfnAncestralCs => {
                nfe += 1;
                let u = gauss.draw();
                step_bfn_ancestral_cs(&z, tn, pred, sched, &u, &unif.draw())?
            }
            SdeSolver1 => {
                nfe += 1;
                // keep the categorical stream aligned with the ancestral sampler
                let _ = unif.draw();
                step_sde_solver1(&z, tn, pred, sched, &gauss.draw())?
            }
            SdeSolver2 => {
                nfe += 1;
                let u = gauss.draw();
                let tp = z.t;
                let e = e_hat(pred, &z)?;
                let next = match &hist {
                    None => increment_update(&z.values, &e, &u, alpha(sched, tp, tn)?, z.classes)?,
                    Some((eo, to)) => sde_solver2_update(&z.values, &e, (eo, *to), &u, tp, tn, sched)?,
                };
                hist = Some((e, tp));
                z.with_values(next, tn)
            }
            OdeSolver1 => {
                nfe += 1;
                step_ode_solver1(&z, tn, pred, sched)?
            }
            OdeSolver2 => {
                nfe += 2;
                step_ode_solver2(&z, tn, pred, sched)?
            }
        };
        if config.record_trajectory {
            trajectory.push(z.values.clone());
        }
    }

    if config.readout != Readout::SoftmaxTheta {
        nfe += 1;
    }
    let output = readout(&z, pred, config.readout, config.seed)?;
    Ok(DiscreteRun { output, final_z: z, nfe, trajectory })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictors::{CategoricalData, CategoricalOracle};
    use crate::schedules::{make_grid, GridPolicy};

    struct Fixed(Vec<f64>);

    impl Predictor for Fixed {
        fn kind(&self) -> PredictionKind {
            PredictionKind::OnehotE
        }
        fn predict(&self, s: &StateBatch) -> Result<Matrix> {
            let w = self.0.len();
            let mut m = Matrix::zeros(s.n_chains(), w);
            for i in 0..s.n_chains() {
                m.row_mut(i).copy_from_slice(&self.0);
            }
            Ok(m)
        }
    }

    fn sched() -> DiscreteSchedule {
        DiscreteSchedule::new(2.0, 3).unwrap()
    }

    fn z0() -> StateBatch {
        StateBatch::discrete(Matrix::from_vec(2, 6, vec![0.1, -0.2, 0.05, 0.0, 0.3, -0.1, 0.2, 0.2, -0.4, 0.1, 0.0, 0.0]).unwrap(), 2, 3, 0.6)
            .unwrap()
    }

    #[test]
    fn names_and_nfe() {
        for k in DiscreteSolver::ALL {
            assert_eq!(k.name().parse::<DiscreteSolver>().unwrap(), k);
        }
        assert_eq!(DiscreteSolver::OdeSolver2.steps_for_nfe(20), 10);
        assert_eq!(DiscreteSolver::OdeSolver1.steps_for_nfe(20), 20);
    }

    #[test]
    fn concentrated_predictor_moves_deterministically() {
        let s = sched();
        let p = Fixed(vec![0.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
        let z = z0();
        let u = Matrix::zeros(2, 6);
        let out = step_bfn_ancestral_cs(&z, 0.5, &p, &s, &u, &[0.3, 0.9, 0.1, 0.5]).unwrap();
        let a = s.beta(0.5).unwrap() - s.beta(0.6).unwrap();
        for i in 0..2 {
            for j in 0..6 {
                let e = p.0[j];
                assert!((out.values.row(i)[j] - z.values.row(i)[j] - a * (3.0 * e - 1.0)).abs() < 1e-14);
            }
        }
        assert!(step_bfn_ancestral_cs(&z, 0.6, &p, &s, &u, &[0.0; 4]).is_err());
    }

    #[test]
    fn uniform_e_is_pure_diffusion_and_contraction() {
        let s = sched();
        let third = 1.0 / 3.0;
        let p = Fixed(vec![third; 6]);
        let z = z0();
        let u = Matrix::filled(2, 6, 1.0);
        let out = step_sde_solver1(&z, 0.4, &p, &s, &u).unwrap();
        let a = s.beta(0.4).unwrap() - s.beta(0.6).unwrap();
        let expect = z.values.map(|v| v + (3.0 * a).sqrt());
        assert!(out.values.max_abs_diff(&expect) < 1e-14);

        let out = step_ode_solver1(&z, 0.4, &p, &s).unwrap();
        assert!(out.values.max_abs_diff(&z.values.map(|v| v * 0.6 / 0.4)) < 1e-14);
    }

    #[test]
    fn constant_e_collapses_second_order() {
        let s = sched();
        let p = Fixed(vec![0.2, 0.5, 0.3, 0.6, 0.3, 0.1]);
        let z = z0();
        let a = step_ode_solver1(&z, 0.3, &p, &s).unwrap();
        let b = step_ode_solver2(&z, 0.3, &p, &s).unwrap();
        assert!(a.values.max_abs_diff(&b.values) < 1e-13);

        let u = Matrix::filled(2, 6, 0.5);
        let e = p.predict(&z).unwrap();
        let first = step_sde_solver1(&z, 0.3, &p, &s, &u).unwrap();
        let (second, _) = step_sde_solver2(&z, Some((&e, 0.7)), 0.3, &p, &s, &u).unwrap();
        assert!(first.values.max_abs_diff(&second.values) < 1e-13);
        assert!(step_sde_solver2(&z, None, 0.3, &p, &s, &u).is_err());
    }

    #[test]
    fn correction_coefficient_matches_quadrature() {
        let sch = sched();
        let (s, t) = (0.7, 0.45);
        let n = 20_000;
        let h = (t - s) / n as f64;
        // Simpson on a cubic is exact up to rounding
        let f = |tau: f64| 2.0 * 3.0 * sch.beta1() * (1.0 - tau) * (tau - s);
        let mut acc = f(s) + f(t);
        for i in 1..n {
            acc += f(s + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let quad = acc * h / 3.0;
        assert!((quad - sde2_correction_coefficient(&sch, s, t)).abs() < 1e-10);
    }

    #[test]
    fn ode_step_is_continuous_in_t() {
        let s = sched();
        let p = Fixed(vec![0.2, 0.5, 0.3, 0.6, 0.3, 0.1]);
        let z = z0();
        let out = step_ode_solver1(&z, 0.6 - 1e-12, &p, &s).unwrap();
        assert!(out.values.max_abs_diff(&z.values) < 1e-10);
        assert!(step_ode_solver1(&z.at(1.0), 0.5, &p, &s).is_err());
    }

    #[test]
    fn readout_rules() {
        let s = sched();
        let p = Fixed(vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        let z = z0();
        for mode in [Readout::Argmax, Readout::Categorical] {
            let r = readout(&z, &p, mode, 5).unwrap();
            let seqs = r.sequences().unwrap();
            assert_eq!(seqs.sequence(0), &[2, 0]);
            assert_eq!(seqs.sequence(1), &[2, 0]);
        }
        assert_eq!(argmax_lowest(&[0.3, 0.3, 0.1]), 0);
        assert_eq!(argmax_lowest(&[0.1, 0.4, 0.4]), 1);
        let scaled = [0.2 * 7.0, 0.5 * 7.0, 0.3 * 7.0];
        assert_eq!(argmax_lowest(&scaled), argmax_lowest(&[0.2, 0.5, 0.3]));
        match readout(&z, &p, Readout::SoftmaxTheta, 0).unwrap() {
            ReadoutValue::Theta(t) => assert_eq!(t.shape(), (2, 6)),
            _ => panic!("expected theta"),
        }
        let _ = s;
    }

    #[test]
    fn runs_are_seeded_and_count_calls() {
        let s = sched();
        let data = CategoricalData::uniform(3, 2).unwrap();
        let oracle = CategoricalOracle::new(data, s).unwrap();
        let grid = make_grid(1e-3, 6, GridPolicy::UniformT).unwrap();
        let init = init_z(&s, grid.steps()[0], 16, 2, 4).unwrap();
        for k in DiscreteSolver::ALL {
            let cfg = DiscreteSolverConfig::new(k, grid.clone(), 3);
            let a = run_discrete(&cfg, &oracle, &s, &init).unwrap();
            let b = run_discrete(&cfg, &oracle, &s, &init).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.nfe, 6 * k.calls_per_step() + 1);
        }
    }
}
