//! The invariant suite behind `bfn-lab verify`.

use rand::Rng;
use rayon::prelude::*;

use super::config::Mutation;
use crate::error::Result;
use crate::forward::{sample_mu_marginal, sample_z_marginal, EulerMaruyama, OneHotBatch, StateBatch};
use crate::losses::{continuous_weight, discrete_weight, dsm_residual_continuous, loss_dsm, mu_from_noise};
use crate::metrics::{convergence_slope, mean_endpoint_error};
use crate::predictors::{
    conditional_score_discrete, convert_continuous, gradient_check, score_from_e_discrete, CategoricalData,
    CategoricalOracle, LossSpec, MixtureData, MixtureOracle, Modality, PredictionKind, Predictor, ToyMLP, TrainingSet,
};
use crate::rng::{chain_rng, fill_normal, Stream};
use crate::samplers_cont::{
    ancestral_update_eps, ancestral_update_x, init_mu, run_continuous, ContinuousSolver, DataStats, InitMode, SolverConfig,
};
use crate::samplers_disc::{
    categorical_onehot, increment_update, init_z, run_discrete, DiscreteSolver, DiscreteSolverConfig,
};
use crate::schedules::{make_grid, ContinuousSchedule, DiscreteSchedule, GridPolicy};
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub statistic: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl CheckOutcome {
    fn le(name: &'static str, statistic: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Self { name, passed: statistic <= tolerance, statistic, tolerance, detail: detail.into() }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct VerifySettings {
    pub sigma1: f64,
    pub beta1: f64,
    pub classes: usize,
    pub seed: u64,
    pub mutation: Mutation,
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self { sigma1: 0.02, beta1: 2.0, classes: 3, seed: 0, mutation: Mutation::None }
    }
}

type NamedCheck = (&'static str, fn(&VerifySettings) -> Result<CheckOutcome>);

pub const CHECKS: [NamedCheck; 13] = [
    ("forward-law-continuous", forward_law_continuous),
    ("forward-law-discrete", forward_law_discrete),
    ("discrete-loss-dsm-identity", discrete_loss_dsm_identity),
    ("dsm-continuous-identity", dsm_continuous_identity),
    ("ancestral-forms-identity", ancestral_forms_identity),
    ("categorical-step-expectation", categorical_step_expectation),
    ("dirac-exactness-continuous", dirac_continuous),
    ("dirac-exactness-discrete", dirac_discrete),
    ("init-optimality", init_optimality),
    ("oracle-optimality", oracle_optimality),
    ("gradient-audit", gradient_audit),
    ("order-continuous", order_continuous),
    ("order-discrete", order_discrete),
];

/// Runs every check; errors inside a check count as failures.
pub fn run_suite(settings: &VerifySettings) -> Vec<CheckOutcome> {
    CHECKS
        .iter()
        .map(|(name, f)| {
            f(settings).unwrap_or_else(|e| CheckOutcome {
                name,
                passed: false,
                statistic: f64::NAN,
                tolerance: f64::NAN,
                detail: format!("error: {e}"),
            })
        })
        .collect()
}

fn csched(s: &VerifySettings) -> Result<ContinuousSchedule> {
    ContinuousSchedule::new(s.sigma1)
}

fn dsched(s: &VerifySettings) -> Result<DiscreteSchedule> {
    DiscreteSchedule::new(s.beta1, s.classes)
}

fn toy_mixture() -> MixtureData {
    MixtureData::new(
        vec![0.3, 0.3, 0.4],
        vec![vec![1.0, 1.0], vec![-1.0, 0.5], vec![0.0, -1.0]],
        vec![vec![0.02, 0.02], vec![0.05, 0.02], vec![0.03, 0.04]],
    )
    .expect("valid mixture")
}

fn toy_categorical(k: usize, d: usize) -> Result<CategoricalData> {
    let total = k.pow(d as u32);
    let raw: Vec<f64> = (0..total).map(|i| ((i * 7) % 5 + 1) as f64).collect();
    let s: f64 = raw.iter().sum();
    CategoricalData::enumerated(k, d, raw.into_iter().map(|p| p / s).collect())
}

/// Worst normalized mean error and worst relative variance error.
fn moment_errors(sample: &Matrix, mean: &[f64], var: &[f64]) -> (f64, f64) {
    let n = sample.rows() as f64;
    let m = sample.column_means();
    let v = sample.column_variances();
    let mut z_max: f64 = 0.0;
    let mut rel_max: f64 = 0.0;
    for j in 0..mean.len() {
        z_max = z_max.max((m[j] - mean[j]).abs() / (var[j] / n).sqrt());
        rel_max = rel_max.max((v[j] - var[j]).abs() / var[j]);
    }
    (z_max, rel_max)
}

fn forward_law_continuous(s: &VerifySettings) -> Result<CheckOutcome> {
    let sched = csched(s)?;
    let n = 4096;
    let x = Matrix::from_vec(n, 2, (0..n).flat_map(|_| [0.8, -0.4]).collect())?;
    let start = sample_mu_marginal(&sched, &x, 0.0, s.seed)?;
    let end = EulerMaruyama::new(2000).run(&sched, &start, 0.9, s.seed + 1)?;
    let g = sched.gamma(0.9)?;
    let (z, rel) = moment_errors(&end.values, &[0.8 * g, -0.4 * g], &[g * (1.0 - g); 2]);
    let stat = (z / 4.0).max(rel / 0.05);
    Ok(CheckOutcome::le("forward-law-continuous", stat, 1.0, format!("max |mean err|/SE = {z:.2}, max rel var err = {rel:.4}")))
}

fn forward_law_discrete(s: &VerifySettings) -> Result<CheckOutcome> {
    let sched = DiscreteSchedule::new(s.beta1, s.classes)?;
    let n = 4096;
    let k = s.classes;
    let x = OneHotBatch::new(2, k, (0..n).flat_map(|_| [1 % k, 0]).collect())?;
    let start = sample_z_marginal(&sched, &x, 0.0, s.seed)?;
    let end = EulerMaruyama::new(2000).run(&sched, &start, 0.9, s.seed + 1)?;
    let b = sched.beta(0.9)?;
    let e = x.to_matrix();
    let mean: Vec<f64> = e.row(0).iter().map(|v| b * (k as f64 * v - 1.0)).collect();
    let var = vec![k as f64 * b; mean.len()];
    let (z, rel) = moment_errors(&end.values, &mean, &var);
    let stat = (z / 4.0).max(rel / 0.05);
    Ok(CheckOutcome::le("forward-law-discrete", stat, 1.0, format!("max |mean err|/SE = {z:.2}, max rel var err = {rel:.4}")))
}

fn score_conversion(mutation: Mutation, e: &Matrix, z: &Matrix, t: f64, sched: &DiscreteSchedule) -> Result<Matrix> {
    match mutation {
        Mutation::None => score_from_e_discrete(e, z, t, sched),
        Mutation::ScoreOffByK => {
            let b = sched.beta(t)?;
            let k = sched.classes() as f64;
            z.zip_map(e, |zv, ev| -zv / b + ev - 1.0 / k)
        }
    }
}

fn discrete_loss_dsm_identity(s: &VerifySettings) -> Result<CheckOutcome> {
    let sched = dsched(s)?;
    let k = s.classes;
    let d = 3;
    let mut rng = chain_rng(s.seed, 0, Stream::Misc);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let t: f64 = rng.random_range(0.01..0.99);
        let labels: Vec<usize> = (0..d).map(|_| rng.random_range(0..k)).collect();
        let x = OneHotBatch::new(d, k, labels)?;
        let e_x = x.to_matrix();
        let b = sched.beta(t)?;
        let mut u = vec![0.0; d * k];
        fill_normal(&mut rng, &mut u);
        let z: Vec<f64> = e_x.as_slice().iter().zip(&u).map(|(e, n)| b * (k as f64 * e - 1.0) + (k as f64 * b).sqrt() * n).collect();
        let z = Matrix::from_vec(1, d * k, z)?;
        let mut logits = vec![0.0; d * k];
        fill_normal(&mut rng, &mut logits);
        let mut e_hat = Matrix::from_vec(1, d * k, logits)?;
        for block in e_hat.as_mut_slice().chunks_mut(k) {
            crate::forward::softmax_in_place(block);
        }
        let w = discrete_weight(&sched, t)?;
        let bfn = w * crate::tensor::sq_dist(e_x.row(0), e_hat.row(0));
        let s_hat = score_conversion(s.mutation, &e_hat, &z, t, &sched)?;
        let target = conditional_score_discrete(z.row(0), e_x.row(0), t, &sched)?;
        let dsm = loss_dsm(s_hat.row(0), &target, w)?;
        worst = worst.max((bfn - dsm).abs() / bfn.abs().max(f64::MIN_POSITIVE));
    }
    Ok(CheckOutcome::le("discrete-loss-dsm-identity", worst, 1e-10, format!("max |BFN − DSM|/BFN = {worst:.3e}")))
}

/// Predicts ε̂ = ε + δ for a fixed perturbation matrix.
struct Shifted<'a> {
    base: &'a Matrix,
}

impl Predictor for Shifted<'_> {
    fn kind(&self) -> PredictionKind {
        PredictionKind::NoiseEps
    }
    fn predict(&self, _state: &StateBatch) -> Result<Matrix> {
        Ok(self.base.clone())
    }
}

fn dsm_continuous_identity(s: &VerifySettings) -> Result<CheckOutcome> {
    let sched = csched(s)?;
    let mut rng = chain_rng(s.seed, 1, Stream::Misc);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let t: f64 = rng.random_range(0.01..0.99);
        let mut buf = vec![0.0; 6];
        fill_normal(&mut rng, &mut buf);
        let x = Matrix::from_vec(1, 2, buf[..2].to_vec())?;
        let eps = Matrix::from_vec(1, 2, buf[2..4].to_vec())?;
        let eps_hat = Matrix::from_vec(1, 2, buf[4..].to_vec())?;
        let g = sched.gamma(t)?;
        let lhs = dsm_residual_continuous(&Shifted { base: &eps_hat }, &sched, &x, t, &eps)?[0];
        let rhs = crate::tensor::sq_dist(eps.row(0), eps_hat.row(0)) / (g * (1.0 - g));
        worst = worst.max((lhs - rhs).abs() / rhs.abs().max(1e-300));
    }
    Ok(CheckOutcome::le("dsm-continuous-identity", worst, 1e-10, format!("max relative gap = {worst:.3e}")))
}

fn ancestral_forms_identity(s: &VerifySettings) -> Result<CheckOutcome> {
    let sched = csched(s)?;
    let mut rng = chain_rng(s.seed, 2, Stream::Misc);
    let n = 1000;
    let mut buf = vec![0.0; 3 * n * 2];
    fill_normal(&mut rng, &mut buf);
    let mu = Matrix::from_vec(n, 2, buf[..2 * n].to_vec())?;
    let eps = Matrix::from_vec(n, 2, buf[2 * n..4 * n].to_vec())?;
    let u = Matrix::from_vec(n, 2, buf[4 * n..].to_vec())?;
    let mut worst: f64 = 0.0;
    for &(tp, tn) in &[(0.999, 0.9), (0.8, 0.6), (0.5, 0.45), (0.2, 0.0)] {
        let x = convert_continuous(&eps, PredictionKind::NoiseEps, PredictionKind::DataX, &mu, tp, &sched)?;
        let a = ancestral_update_eps(&mu, &eps, &u, tp, tn, &sched)?;
        let b = ancestral_update_x(&mu, &x, &u, tp, tn, &sched)?;
        worst = worst.max(a.max_abs_diff(&b));
    }
    Ok(CheckOutcome::le("ancestral-forms-identity", worst, 1e-12, format!("max |ε-form − x̂-form| = {worst:.3e}")))
}

fn categorical_step_expectation(s: &VerifySettings) -> Result<CheckOutcome> {
    let sched = dsched(s)?;
    let k = s.classes;
    let probs = {
        let raw: Vec<f64> = (0..k).map(|j| (j + 1) as f64).collect();
        let t: f64 = raw.iter().sum();
        Matrix::from_vec(1, k, raw.into_iter().map(|v| v / t).collect())?
    };
    let z = Matrix::from_vec(1, k, (0..k).map(|j| 0.1 * j as f64 - 0.05).collect())?;
    let (tp, tn) = (0.6, 0.55);
    let a = sched.beta(tn)? - sched.beta(tp)?;
    let mut rng = chain_rng(s.seed, 3, Stream::Misc);
    let mut u = vec![0.0; k];
    fill_normal(&mut rng, &mut u);
    let u = Matrix::from_vec(1, k, u)?;
    let target = increment_update(&z, &probs, &u, a, k)?;
    let n = 100_000;
    let draws: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    let mut sum = vec![0.0; k];
    let mut sum2 = vec![0.0; k];
    for &d in &draws {
        let e = categorical_onehot(&probs, k, &[d])?;
        let step = increment_update(&z, &e, &u, a, k)?;
        for j in 0..k {
            sum[j] += step.as_slice()[j];
            sum2[j] += step.as_slice()[j].powi(2);
        }
    }
    let mut worst: f64 = 0.0;
    for j in 0..k {
        let m = sum[j] / n as f64;
        let var = (sum2[j] / n as f64 - m * m).max(0.0);
        let se = (var / n as f64).sqrt();
        worst = worst.max((m - target.as_slice()[j]).abs() / se);
    }
    Ok(CheckOutcome::le("categorical-step-expectation", worst, 4.0, format!("max |MC mean − sde-solver1|/SE = {worst:.2}")))
}

fn dirac_continuous(s: &VerifySettings) -> Result<CheckOutcome> {
    let sched = csched(s)?;
    let xs = [0.7, -1.3];
    let oracle = MixtureOracle::new(MixtureData::dirac(xs.to_vec())?, sched);
    let mut worst: f64 = 0.0;
    let grids: [&[f64]; 3] = [&[0.999, 0.0], &[0.9, 0.3, 0.0], &[0.95, 0.5, 0.1, 0.0]];
    let mu0 = Matrix::from_vec(2, 2, vec![0.02, -0.05, 0.3, 0.1])?;
    for steps in grids {
        let t0 = steps[0];
        let grid = crate::schedules::TimeGrid::from_steps(1.0 - t0, steps.to_vec(), "custom")?;
        let mut cfg = SolverConfig::new(ContinuousSolver::BfnSolverpp1, grid, 0);
        cfg.final_step = crate::samplers_cont::FinalStep::RawMu;
        let out = run_continuous(&cfg, &oracle, &sched, &mu0)?;
        // along the flow of a point mass, μ = γx* + σ̄ε with ε fixed
        let (a0, s0) = sched.alpha_sigma(t0)?;
        let (a1, s1) = sched.alpha_sigma(0.0)?;
        for i in 0..2 {
            for j in 0..2 {
                let eps = (mu0.row(i)[j] - a0 * xs[j]) / s0;
                let exact = a1 * xs[j] + s1 * eps;
                worst = worst.max((out.final_mu.row(i)[j] - exact).abs());
            }
        }
    }
    Ok(CheckOutcome::le("dirac-exactness-continuous", worst, 1e-8, format!("max error = {worst:.3e}")))
}

fn dirac_discrete(s: &VerifySettings) -> Result<CheckOutcome> {
    let sched = dsched(s)?;
    let k = s.classes;
    let seq = vec![k - 1, 0];
    let data = CategoricalData::new(k, 2, vec![seq.clone()], vec![1.0])?;
    let oracle = CategoricalOracle::new(data, sched)?;
    let grid = make_grid(1e-3, 7, GridPolicy::UniformT)?;
    let t0 = grid.steps()[0];
    let z0 = init_z(&sched, t0, 4, 2, s.seed)?;
    let e = OneHotBatch::new(2, k, seq)?.to_matrix();
    let mut worst: f64 = 0.0;
    for kind in [DiscreteSolver::OdeSolver1, DiscreteSolver::OdeSolver2] {
        let out = run_discrete(&DiscreteSolverConfig::new(kind, grid.clone(), 0), &oracle, &sched, &z0)?;
        // closed form with constant ê = e_x from t0 to 0
        for i in 0..4 {
            for (j, ev) in e.row(0).iter().enumerate() {
                let exact = z0.values.row(i)[j] / (1.0 - t0) + s.beta1 * (0.0 - t0) * (1.0 - k as f64 * ev);
                worst = worst.max((out.final_z.values.row(i)[j] - exact).abs());
            }
        }
    }
    Ok(CheckOutcome::le("dirac-exactness-discrete", worst, 1e-10, format!("max multi-step error = {worst:.3e}")))
}

/// Cross-entropy of `N(m, σ²)` under a 1-D Gaussian mixture, by quadrature.
pub(crate) fn cross_entropy_1d(weights: &[f64], means: &[f64], vars: &[f64], m: f64, sigma: f64) -> f64 {
    let lo = means.iter().zip(vars).map(|(a, v)| a - 12.0 * v.sqrt()).fold(f64::INFINITY, f64::min);
    let hi = means.iter().zip(vars).map(|(a, v)| a + 12.0 * v.sqrt()).fold(f64::NEG_INFINITY, f64::max);
    let n = 20_000;
    let h = (hi - lo) / n as f64;
    let mut acc = 0.0;
    for i in 0..=n {
        let x = lo + i as f64 * h;
        let p: f64 = weights
            .iter()
            .zip(means.iter().zip(vars))
            .map(|(w, (a, v))| w * (-(x - a).powi(2) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt())
            .sum();
        let logq = -(x - m).powi(2) / (2.0 * sigma * sigma) - (sigma * (2.0 * std::f64::consts::PI).sqrt()).ln();
        let wgt = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        acc -= wgt * p * logq;
    }
    acc * h / 3.0
}

pub(crate) fn golden_min(mut a: f64, mut b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..100 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

fn init_optimality(s: &VerifySettings) -> Result<CheckOutcome> {
    let sched = csched(s)?;
    let t0 = 0.6;
    let g = sched.gamma(t0)?;
    let w = [0.35, 0.65];
    let m = [-1.5, 2.0];
    let v = [0.3, 0.6];
    let tmeans: Vec<f64> = m.iter().map(|a| g * a).collect();
    let tvars: Vec<f64> = v.iter().map(|vv| g * g * vv + g * (1.0 - g)).collect();
    // coordinate descent with golden-section line searches
    let (mut bm, mut bs) = (0.0, 1.0);
    for _ in 0..6 {
        bm = golden_min(-5.0, 5.0, |mm| cross_entropy_1d(&w, &tmeans, &tvars, mm, bs));
        bs = golden_min(1e-3, 5.0, |ss| cross_entropy_1d(&w, &tmeans, &tvars, bm, ss));
    }
    let data = MixtureData::new(w.to_vec(), vec![vec![m[0]], vec![m[1]]], vec![vec![v[0]], vec![v[1]]])?;
    let stats = DataStats { mean: data.mean(), trace_cov: data.trace_cov() };
    let closed = init_mu(&sched, t0, 1, Some(&stats), InitMode::Optimal)?;
    let rel_m = (bm - closed.mean[0]).abs() / closed.mean[0].abs();
    let rel_v = (bs * bs - closed.variance).abs() / closed.variance;
    let stat = rel_m.max(rel_v);
    Ok(CheckOutcome::le("init-optimality", stat, 1e-3, format!("rel err mean {rel_m:.2e}, variance {rel_v:.2e}")))
}

fn oracle_optimality(s: &VerifySettings) -> Result<CheckOutcome> {
    let sched = csched(s)?;
    let data = toy_mixture();
    let oracle = MixtureOracle::new(data.clone(), sched);
    let n = 20_000;
    let t = 0.5;
    let x = data.sample(n, s.seed + 10);
    let mut eps = Matrix::zeros(n, 2);
    let mut rng = chain_rng(s.seed, 4, Stream::Misc);
    fill_normal(&mut rng, eps.as_mut_slice());
    let mu = mu_from_noise(&sched, &x, t, &eps)?;
    let state = StateBatch::continuous(mu.clone(), t);
    let x_hat = oracle.predict(&state)?;
    let base = convert_continuous(&x_hat, PredictionKind::DataX, PredictionKind::NoiseEps, &mu, t, &sched)?;
    let w = continuous_weight(&sched, t)?;
    let loss = |e: &Matrix| -> f64 {
        let mut acc = 0.0;
        for i in 0..n {
            acc += w * crate::tensor::sq_dist(eps.row(i), e.row(i));
        }
        acc / n as f64
    };
    let l0 = loss(&base);
    let mut violations = 0;
    for p in 0..50 {
        let mut prng = chain_rng(s.seed, 100 + p, Stream::Misc);
        let scale = 0.1;
        let angle: f64 = prng.random_range(0.0..std::f64::consts::TAU);
        let dir = [angle.cos(), angle.sin()];
        let perturbed = Matrix::from_vec(
            n,
            2,
            base.iter_rows().flat_map(|r| [r[0] + scale * dir[0], r[1] + scale * dir[1]]).collect(),
        )?;
        if loss(&perturbed) < l0 {
            violations += 1;
        }
    }
    Ok(CheckOutcome::le("oracle-optimality", violations as f64, 0.0, format!("{violations}/50 perturbations beat the oracle")))
}

fn gradient_audit(s: &VerifySettings) -> Result<CheckOutcome> {
    let sched = csched(s)?;
    let model = ToyMLP::new(Modality::Continuous { dim: 2 }, &[16, 16], s.seed)?;
    let set = TrainingSet::Continuous(toy_mixture().sample(64, s.seed));
    let audit = gradient_check(&model, &set, &LossSpec::ContinuousBfn(sched), 20, s.seed)?;
    Ok(CheckOutcome::le("gradient-audit", audit.max_rel_error, 1e-4, format!("max rel err over 20 probes = {:.2e}", audit.max_rel_error)))
}

fn order_continuous(s: &VerifySettings) -> Result<CheckOutcome> {
    let sched = csched(s)?;
    let oracle = MixtureOracle::new(toy_mixture(), sched);
    let eta = 1e-3;
    let policy = GridPolicy::UniformLambda(sched);
    let init = init_mu(&sched, 1.0 - eta, 2, None, InitMode::ZeroMean)?.sample(128, s.seed);
    let reference = run_continuous(
        &SolverConfig::new(ContinuousSolver::BfnSolverpp2, make_grid(eta, 10_000, policy)?, 0),
        &oracle,
        &sched,
        &init,
    )?;
    let fit = |kind: ContinuousSolver| -> Result<crate::metrics::SlopeFit> {
        let pts = [8usize, 16, 32, 64]
            .par_iter()
            .map(|&nfe| {
                let run = run_continuous(&SolverConfig::new(kind, make_grid(eta, nfe, policy)?, 0), &oracle, &sched, &init)?;
                Ok((nfe, mean_endpoint_error(&run.samples, &reference.samples)?))
            })
            .collect::<Result<Vec<_>>>()?;
        convergence_slope(&pts)
    };
    let p1 = fit(ContinuousSolver::BfnSolverpp1)?;
    let p2 = fit(ContinuousSolver::BfnSolverpp2)?;
    let ok = (0.75..=1.4).contains(&p1.slope) && (1.6..=2.5).contains(&p2.slope) && p1.r_squared.min(p2.r_squared) >= 0.95;
    Ok(CheckOutcome {
        name: "order-continuous",
        passed: ok,
        statistic: p2.slope,
        tolerance: 1.6,
        detail: format!("slope pp1 {:.3} (r² {:.3}), pp2 {:.3} (r² {:.3})", p1.slope, p1.r_squared, p2.slope, p2.r_squared),
    })
}

fn order_discrete(s: &VerifySettings) -> Result<CheckOutcome> {
    let sched = dsched(s)?;
    let oracle = CategoricalOracle::new(toy_categorical(s.classes, 2)?, sched)?;
    let eta = 1e-3;
    let z0 = init_z(&sched, 1.0 - eta, 128, 2, s.seed)?;
    let reference = run_discrete(
        &DiscreteSolverConfig::new(DiscreteSolver::OdeSolver2, make_grid(eta, 10_000, GridPolicy::UniformT)?, 0),
        &oracle,
        &sched,
        &z0,
    )?;
    let fit = |kind: DiscreteSolver| -> Result<crate::metrics::SlopeFit> {
        let pts = [8usize, 16, 32, 64]
            .par_iter()
            .map(|&nfe| {
                let grid = make_grid(eta, kind.steps_for_nfe(nfe), GridPolicy::UniformT)?;
                let run = run_discrete(&DiscreteSolverConfig::new(kind, grid, 0), &oracle, &sched, &z0)?;
                Ok((nfe, mean_endpoint_error(&run.final_z.values, &reference.final_z.values)?))
            })
            .collect::<Result<Vec<_>>>()?;
        convergence_slope(&pts)
    };
    let o1 = fit(DiscreteSolver::OdeSolver1)?;
    let o2 = fit(DiscreteSolver::OdeSolver2)?;
    let ok = (0.75..=1.4).contains(&o1.slope) && (1.6..=2.5).contains(&o2.slope) && o1.r_squared.min(o2.r_squared) >= 0.95;
    Ok(CheckOutcome {
        name: "order-discrete",
        passed: ok,
        statistic: o2.slope,
        tolerance: 1.6,
        detail: format!("slope ode1 {:.3} (r² {:.3}), ode2 {:.3} (r² {:.3})", o1.slope, o1.r_squared, o2.slope, o2.r_squared),
    })
}
