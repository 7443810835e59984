//! Samplers for continuous data.
//!
//! Time runs backwards from `t₀ = 1 − η` to `t_M = 0`, so `γ` increases
//! along a run. Every solver uses `ᾱ = γ`, `σ̄ = √(γ(1−γ))` and
//! `λ = log(ᾱ/σ̄)`.

use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{argument, domain, BfnError, Result};
use crate::forward::StateBatch;
use crate::predictors::{predict_as, PredictionKind, Predictor};
use crate::rng::{chain_rng, fill_normal, Stream};
use crate::schedules::{ContinuousSchedule, TimeGrid};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContinuousSolver {
    BfnAncestral,
    EulerSde,
    EulerOde,
    BfnSolver1Eps,
    BfnSolverpp1,
    BfnSolverpp2,
    SdeBfnSolverpp2,
}

impl ContinuousSolver {
    pub const ALL: [ContinuousSolver; 7] = [
        Self::BfnAncestral,
        Self::EulerSde,
        Self::EulerOde,
        Self::BfnSolver1Eps,
        Self::BfnSolverpp1,
        Self::BfnSolverpp2,
        Self::SdeBfnSolverpp2,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::BfnAncestral => "bfn-ancestral",
            Self::EulerSde => "euler-sde",
            Self::EulerOde => "euler-ode",
            Self::BfnSolver1Eps => "bfn-solver1-eps",
            Self::BfnSolverpp1 => "bfn-solverpp1",
            Self::BfnSolverpp2 => "bfn-solverpp2",
            Self::SdeBfnSolverpp2 => "sde-bfn-solverpp2",
        }
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(self, Self::BfnAncestral | Self::EulerSde | Self::SdeBfnSolverpp2)
    }

    pub fn min_steps(&self) -> usize {
        match self {
            Self::BfnSolverpp2 | Self::SdeBfnSolverpp2 => 2,
            _ => 1,
        }
    }

    /// Grid intervals that spend `nfe` predictor calls.
    pub fn steps_for_nfe(&self, nfe: usize) -> usize {
        nfe
    }
}

impl fmt::Display for ContinuousSolver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ContinuousSolver {
    type Err = BfnError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| BfnError::Argument(format!("unknown continuous solver '{s}'")))
    }
}

/// What a run returns after its last step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FinalStep {
    /// x̂ from one more predictor call at the final state.
    #[default]
    NetworkExtraCall,
    /// The final μ itself.
    RawMu,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub kind: ContinuousSolver,
    pub grid: TimeGrid,
    pub seed: u64,
    pub final_step: FinalStep,
    /// Keep every intermediate μ.
    pub record_trajectory: bool,
}

impl SolverConfig {
    pub fn new(kind: ContinuousSolver, grid: TimeGrid, seed: u64) -> Self {
        Self { kind, grid, seed, final_step: FinalStep::NetworkExtraCall, record_trajectory: false }
    }
}

/// Isotropic Gaussian for μ at `t₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitDistribution {
    pub mean: Vec<f64>,
    pub variance: f64,
}

impl InitDistribution {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Draws `n` chains from per-chain init streams.
    pub fn sample(&self, n: usize, seed: u64) -> Matrix {
        let d = self.dim();
        let sd = self.variance.sqrt();
        let mut out = Matrix::zeros(n, d);
        if d == 0 {
            return out;
        }
        out.as_mut_slice().par_chunks_mut(d).enumerate().for_each(|(i, row)| {
            let mut rng = chain_rng(seed, i, Stream::Init);
            fill_normal(&mut rng, row);
            for (v, m) in row.iter_mut().zip(&self.mean) {
                *v = m + sd * *v;
            }
        });
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    #[default]
    ZeroMean,
    Optimal,
}

/// Summary of the data distribution that the optimal init needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataStats {
    pub mean: Vec<f64>,
    pub trace_cov: f64,
}

impl DataStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Initial distribution for μ at `t0`.
///
/// `ZeroMean` gives `N(0, γ(1−γ) I)`; `Optimal` gives the moment-matched
/// Gaussian `N(γ m, (γ(1−γ) + γ² TrΣ/D) I)`.
pub fn init_mu(
    sched: &ContinuousSchedule,
    t0: f64,
    dim: usize,
    stats: Option<&DataStats>,
    mode: InitMode,
) -> Result<InitDistribution> {
    let g = sched.gamma(t0)?;
    let base = g * (1.0 - g);
    if !(base > 0.0) {
        return domain(format!("init needs 0 < γ(t0) < 1, got γ({t0}) = {g}"));
    }
    match mode {
        InitMode::ZeroMean => Ok(InitDistribution { mean: vec![0.0; dim], variance: base }),
        InitMode::Optimal => {
            let s = stats.ok_or_else(|| BfnError::Argument("optimal init needs data statistics".into()))?;
            if s.dim() != dim || dim == 0 {
                return Err(BfnError::Shape(format!("data statistics of width {} for D = {dim}", s.dim())));
            }
            if !(s.trace_cov >= 0.0) {
                return argument("trace of a covariance must be nonnegative");
            }
            Ok(InitDistribution {
                mean: s.mean.iter().map(|m| g * m).collect(),
                variance: base + g * g * s.trace_cov / dim as f64,
            })
        }
    }
}

fn check_reverse(t_prev: f64, t_next: f64) -> Result<()> {
    if !(t_prev > t_next) {
        return argument(format!("reverse-time step needs t_prev > t_next, got {t_prev} -> {t_next}"));
    }
    if !(t_prev < 1.0 && t_next >= 0.0) {
        return domain(format!("step {t_prev} -> {t_next} leaves [0, 1)"));
    }
    Ok(())
}

fn abar_sbar(sched: &ContinuousSchedule, t: f64) -> Result<(f64, f64)> {
    let (a, s) = sched.alpha_sigma(t)?;
    if !(a > 0.0 && s > 0.0) {
        return domain(format!("γ({t}) = {a} is outside (0, 1)"));
    }
    Ok((a, s))
}

fn eps_at(pred: &dyn Predictor, mu: &Matrix, t: f64, sched: &ContinuousSchedule) -> Result<Matrix> {
    predict_as(pred, PredictionKind::NoiseEps, &StateBatch::continuous(mu.clone(), t), sched)
}

fn x_at(pred: &dyn Predictor, mu: &Matrix, t: f64, sched: &ContinuousSchedule) -> Result<Matrix> {
    predict_as(pred, PredictionKind::DataX, &StateBatch::continuous(mu.clone(), t), sched)
}

/// Ancestral update from a given ε̂.
pub fn ancestral_update_eps(
    mu: &Matrix,
    eps_hat: &Matrix,
    u: &Matrix,
    t_prev: f64,
    t_next: f64,
    sched: &ContinuousSchedule,
) -> Result<Matrix> {
    check_reverse(t_prev, t_next)?;
    let gp = sched.gamma(t_prev)?;
    let gn = sched.gamma(t_next)?;
    if !(gp > 0.0) {
        return domain(format!("ancestral step needs γ(t_prev) > 0, got t = {t_prev}"));
    }
    let a = gn / gp;
    let b = (gn - gp) / (gp * (1.0 - gp)).sqrt();
    let c = ((1.0 - gn) / (1.0 - gp) * (gn - gp)).max(0.0).sqrt();
    let mut out = mu.zip_map(eps_hat, |m, e| a * m - b * e)?;
    u.check_same_shape(mu)?;
    for (o, z) in out.as_mut_slice().iter_mut().zip(u.as_slice()) {
        *o += c * z;
    }
    Ok(out)
}

/// The same update written in terms of x̂.
pub fn ancestral_update_x(
    mu: &Matrix,
    x_hat: &Matrix,
    u: &Matrix,
    t_prev: f64,
    t_next: f64,
    sched: &ContinuousSchedule,
) -> Result<Matrix> {
    check_reverse(t_prev, t_next)?;
    let gp = sched.gamma(t_prev)?;
    let gn = sched.gamma(t_next)?;
    let a = (1.0 - gn) / (1.0 - gp);
    let b = (gn - gp) / (1.0 - gp);
    let c = ((1.0 - gn) / (1.0 - gp) * (gn - gp)).max(0.0).sqrt();
    let mut out = mu.zip_map(x_hat, |m, x| a * m + b * x)?;
    u.check_same_shape(mu)?;
    for (o, z) in out.as_mut_slice().iter_mut().zip(u.as_slice()) {
        *o += c * z;
    }
    Ok(out)
}

pub fn step_bfn_ancestral(
    mu: &Matrix,
    t_prev: f64,
    t_next: f64,
    pred: &dyn Predictor,
    sched: &ContinuousSchedule,
    u: &Matrix,
) -> Result<Matrix> {
    check_reverse(t_prev, t_next)?;
    let eps = eps_at(pred, mu, t_prev, sched)?;
    ancestral_update_eps(mu, &eps, u, t_prev, t_next, sched)
}

/// Euler–Maruyama step of the reverse SDE `dμ = (Fμ − G² ŝ) dt + G dw̄`.
pub fn euler_sde_update(
    mu: &Matrix,
    eps_hat: &Matrix,
    u: &Matrix,
    t_prev: f64,
    t_next: f64,
    sched: &ContinuousSchedule,
) -> Result<Matrix> {
    check_reverse(t_prev, t_next)?;
    let (f, g2) = sched.drift_diffusion(t_prev)?;
    let (_, sbar) = abar_sbar(sched, t_prev)?;
    let dt = t_next - t_prev;
    let noise = (g2 * -dt).sqrt();
    let mut out = mu.zip_map(eps_hat, |m, e| m + (f * m + g2 * e / sbar) * dt)?;
    u.check_same_shape(mu)?;
    for (o, z) in out.as_mut_slice().iter_mut().zip(u.as_slice()) {
        *o += noise * z;
    }
    Ok(out)
}

/// Euler step of the probability-flow ODE `dμ/dt = Fμ − ½G² ŝ`.
pub fn euler_ode_update(
    mu: &Matrix,
    eps_hat: &Matrix,
    t_prev: f64,
    t_next: f64,
    sched: &ContinuousSchedule,
) -> Result<Matrix> {
    check_reverse(t_prev, t_next)?;
    let (f, g2) = sched.drift_diffusion(t_prev)?;
    let (_, sbar) = abar_sbar(sched, t_prev)?;
    let dt = t_next - t_prev;
    mu.zip_map(eps_hat, |m, e| m + (f * m + 0.5 * g2 * e / sbar) * dt)
}

pub fn step_euler_reverse_sde(
    mu: &Matrix,
    t_prev: f64,
    t_next: f64,
    pred: &dyn Predictor,
    sched: &ContinuousSchedule,
    u: &Matrix,
) -> Result<Matrix> {
    check_reverse(t_prev, t_next)?;
    let eps = eps_at(pred, mu, t_prev, sched)?;
    euler_sde_update(mu, &eps, u, t_prev, t_next, sched)
}

pub fn step_euler_reverse_ode(
    mu: &Matrix,
    t_prev: f64,
    t_next: f64,
    pred: &dyn Predictor,
    sched: &ContinuousSchedule,
) -> Result<Matrix> {
    check_reverse(t_prev, t_next)?;
    let eps = eps_at(pred, mu, t_prev, sched)?;
    euler_ode_update(mu, &eps, t_prev, t_next, sched)
}

/// Coefficients shared by the exponential-integrator steps.
struct Interval {
    a_next: f64,
    s_ratio: f64,
    a_ratio: f64,
    s_next: f64,
    h: f64,
}

fn interval(sched: &ContinuousSchedule, t_prev: f64, t_next: f64) -> Result<Interval> {
    check_reverse(t_prev, t_next)?;
    let (ap, sp) = abar_sbar(sched, t_prev)?;
    let (an, sn) = abar_sbar(sched, t_next)?;
    let h = sched.lambda(t_next)? - sched.lambda(t_prev)?;
    Ok(Interval { a_next: an, s_ratio: sn / sp, a_ratio: an / ap, s_next: sn, h })
}

/// First-order data-prediction step: `μ ← (σ̄ₙ/σ̄ₚ) μ − ᾱₙ (e^{−h} − 1) x̂`.
pub fn solverpp1_update(mu: &Matrix, x_hat: &Matrix, t_prev: f64, t_next: f64, sched: &ContinuousSchedule) -> Result<Matrix> {
    let iv = interval(sched, t_prev, t_next)?;
    let c = -iv.a_next * (-iv.h).exp_m1();
    mu.zip_map(x_hat, |m, x| iv.s_ratio * m + c * x)
}

/// First-order noise-prediction step: `μ ← (ᾱₙ/ᾱₚ) μ − σ̄ₙ (e^{h} − 1) ε̂`.
pub fn solver1_eps_update(mu: &Matrix, eps_hat: &Matrix, t_prev: f64, t_next: f64, sched: &ContinuousSchedule) -> Result<Matrix> {
    let iv = interval(sched, t_prev, t_next)?;
    let c = iv.s_next * iv.h.exp_m1();
    mu.zip_map(eps_hat, |m, e| iv.a_ratio * m - c * e)
}

/// Multistep second-order update from the two most recent x̂.
pub fn solverpp2_update(
    mu: &Matrix,
    x_prev: &Matrix,
    x_prev2: &Matrix,
    h_prev: f64,
    t_prev: f64,
    t_next: f64,
    sched: &ContinuousSchedule,
) -> Result<Matrix> {
    let iv = interval(sched, t_prev, t_next)?;
    if !(h_prev > 0.0) {
        return argument("previous log-SNR step must be positive");
    }
    let r = h_prev / iv.h;
    let (w1, w2) = (1.0 + 0.5 / r, -0.5 / r);
    let c = -iv.a_next * (-iv.h).exp_m1();
    let d = x_prev.zip_map(x_prev2, |a, b| w1 * a + w2 * b)?;
    mu.zip_map(&d, |m, dv| iv.s_ratio * m + c * dv)
}

/// Stochastic data-prediction step, first order when `x_prev2` is `None`.
#[allow(clippy::too_many_arguments)]
pub fn sde_solverpp_update(
    mu: &Matrix,
    x_prev: &Matrix,
    x_prev2: Option<(&Matrix, f64)>,
    u: &Matrix,
    t_prev: f64,
    t_next: f64,
    sched: &ContinuousSchedule,
) -> Result<Matrix> {
    let iv = interval(sched, t_prev, t_next)?;
    let decay = (-iv.h).exp();
    let one_m = -(-2.0 * iv.h).exp_m1();
    let c_mu = iv.s_ratio * decay;
    let c_x = iv.a_next * one_m;
    let c_u = iv.s_next * one_m.sqrt();
    let mut out = mu.zip_map(x_prev, |m, x| c_mu * m + c_x * x)?;
    if let Some((x2, h_prev)) = x_prev2 {
        if !(h_prev > 0.0) {
            return argument("previous log-SNR step must be positive");
        }
        let r = h_prev / iv.h;
        let c_d = 0.5 * c_x / r;
        for ((o, a), b) in out.as_mut_slice().iter_mut().zip(x_prev.as_slice()).zip(x2.as_slice()) {
            *o += c_d * (a - b);
        }
    }
    u.check_same_shape(mu)?;
    for (o, z) in out.as_mut_slice().iter_mut().zip(u.as_slice()) {
        *o += c_u * z;
    }
    Ok(out)
}

/// Output of a whole sampling run.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousRun {
    pub samples: Matrix,
    pub final_mu: Matrix,
    /// Predictor calls made, including any final extra call.
    pub nfe: usize,
    /// μ at every grid time when recording was requested.
    pub trajectory: Vec<Matrix>,
}

/// Per-chain Gaussian streams for the whole run.
pub(crate) struct NoiseSource {
    rngs: Vec<ChaCha8Rng>,
    width: usize,
}

impl NoiseSource {
    pub(crate) fn new(seed: u64, n: usize, width: usize, purpose: Stream) -> Self {
        Self { rngs: (0..n).map(|i| chain_rng(seed, i, purpose)).collect(), width }
    }

    pub(crate) fn draw(&mut self) -> Matrix {
        let w = self.width;
        let mut m = Matrix::zeros(self.rngs.len(), w);
        if w == 0 {
            return m;
        }
        m.as_mut_slice()
            .par_chunks_mut(w)
            .zip(self.rngs.par_iter_mut())
            .for_each(|(row, rng)| fill_normal(rng, row));
        m
    }
}

/// Runs any continuous solver from the initial states `init` (one row per chain).
pub fn run_continuous(
    config: &SolverConfig,
    pred: &dyn Predictor,
    sched: &ContinuousSchedule,
    init: &Matrix,
) -> Result<ContinuousRun> {
    use ContinuousSolver::*;
    let grid = config.grid.steps();
    let m_steps = config.grid.intervals();
    if m_steps < config.kind.min_steps() {
        return argument(format!("{} needs at least {} grid steps, got {m_steps}", config.kind, config.kind.min_steps()));
    }
    if grid[0] >= 1.0 {
        return domain("grid touches t = 1");
    }
    let n = init.rows();
    let d = init.cols();
    let mut noise = NoiseSource::new(config.seed, n, d, Stream::Gaussian);
    let mut mu = init.clone();
    let mut nfe = 0;
    let mut trajectory = Vec::new();
    if config.record_trajectory {
        trajectory.push(mu.clone());
    }
    let mut history: Vec<(Matrix, f64)> = Vec::new();
    let mut h_last = 0.0;

    for i in 1..=m_steps {
        let (tp, tn) = (grid[i - 1], grid[i]);
        let next = match config.kind {
            BfnAncestral => {
                let eps = eps_at(pred, &mu, tp, sched)?;
                nfe += 1;
                ancestral_update_eps(&mu, &eps, &noise.draw(), tp, tn, sched)?
            }
            EulerSde => {
                let eps = eps_at(pred, &mu, tp, sched)?;
                nfe += 1;
                euler_sde_update(&mu, &eps, &noise.draw(), tp, tn, sched)?
            }
            EulerOde => {
                let eps = eps_at(pred, &mu, tp, sched)?;
                nfe += 1;
                euler_ode_update(&mu, &eps, tp, tn, sched)?
            }
            BfnSolver1Eps => {
                let eps = eps_at(pred, &mu, tp, sched)?;
                nfe += 1;
                solver1_eps_update(&mu, &eps, tp, tn, sched)?
            }
            BfnSolverpp1 => {
                let x = x_at(pred, &mu, tp, sched)?;
                nfe += 1;
                solverpp1_update(&mu, &x, tp, tn, sched)?
            }
            BfnSolverpp2 | SdeBfnSolverpp2 => {
                let x = x_at(pred, &mu, tp, sched)?;
                nfe += 1;
                let h = sched.lambda(tn)? - sched.lambda(tp)?;
                let out = match (config.kind, history.last()) {
                    (BfnSolverpp2, None) => solverpp1_update(&mu, &x, tp, tn, sched)?,
                    (BfnSolverpp2, Some((x2, _))) => solverpp2_update(&mu, &x, x2, h_last, tp, tn, sched)?,
                    (_, None) => sde_solverpp_update(&mu, &x, None, &noise.draw(), tp, tn, sched)?,
                    (_, Some((x2, _))) => sde_solverpp_update(&mu, &x, Some((x2, h_last)), &noise.draw(), tp, tn, sched)?,
                };
                history.clear();
                history.push((x, tp));
                h_last = h;
                out
            }
        };
        mu = next;
        if config.record_trajectory {
            trajectory.push(mu.clone());
        }
    }

    let t_end = grid[m_steps];
    let samples = match config.final_step {
        FinalStep::RawMu => mu.clone(),
        FinalStep::NetworkExtraCall => {
            nfe += 1;
            x_at(pred, &mu, t_end, sched)?
        }
    };
    Ok(ContinuousRun { samples, final_mu: mu, nfe, trajectory })
}

fn run_kind(
    kind: ContinuousSolver,
    config: &SolverConfig,
    pred: &dyn Predictor,
    sched: &ContinuousSchedule,
    init: &Matrix,
) -> Result<ContinuousRun> {
    if config.kind != kind {
        return argument(format!("config is for {}, not {kind}", config.kind));
    }
    run_continuous(config, pred, sched, init)
}

pub fn run_bfn_solverpp1(config: &SolverConfig, pred: &dyn Predictor, sched: &ContinuousSchedule, init: &Matrix) -> Result<ContinuousRun> {
    run_kind(ContinuousSolver::BfnSolverpp1, config, pred, sched, init)
}

pub fn run_bfn_solverpp2(config: &SolverConfig, pred: &dyn Predictor, sched: &ContinuousSchedule, init: &Matrix) -> Result<ContinuousRun> {
    run_kind(ContinuousSolver::BfnSolverpp2, config, pred, sched, init)
}

pub fn run_sde_bfn_solverpp2(
    config: &SolverConfig,
    pred: &dyn Predictor,
    sched: &ContinuousSchedule,
    init: &Matrix,
) -> Result<ContinuousRun> {
    run_kind(ContinuousSolver::SdeBfnSolverpp2, config, pred, sched, init)
}
