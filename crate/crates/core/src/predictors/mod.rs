//! Network interface, parameterization conversions and exact oracle predictors.

mod mlp;
mod oracle;
mod weights;

pub use mlp::{
    gradient_check, heldout_loss, mlp_forward, mlp_train, GradientAudit, LossSpec, Modality, OptimizerKind,
    OptimizerSpec, ToyMLP, TrainHistory, TrainingSet, TIME_FREQUENCIES,
};
pub use oracle::{CategoricalData, CategoricalOracle, MixtureData, MixtureOracle, ENUMERATION_CAP};
pub use weights::{
    decode_weights, encode_weights, load_weights, save_weights, sidecar_path, WeightsSidecar, WEIGHTS_MAGIC,
    WEIGHTS_VERSION,
};

use serde::{Deserialize, Serialize};

use crate::error::{domain, BfnError, Result};
use crate::forward::StateBatch;
use crate::schedules::{ContinuousSchedule, DiscreteSchedule};
use crate::tensor::Matrix;

/// What a predictor's output means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictionKind {
    /// ε̂: the injected Gaussian noise.
    NoiseEps,
    /// x̂: the clean data.
    DataX,
    /// ê: per-position class probabilities, layout `(n, D·K)`.
    OnehotE,
    /// ŝ: the score of the marginal.
    ScoreS,
}

/// A pure map from a batch of states (at `state.t`) to predictions.
pub trait Predictor: Send + Sync {
    fn kind(&self) -> PredictionKind;
    fn predict(&self, state: &StateBatch) -> Result<Matrix>;
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn kind(&self) -> PredictionKind {
        (**self).kind()
    }
    fn predict(&self, state: &StateBatch) -> Result<Matrix> {
        (**self).predict(state)
    }
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn kind(&self) -> PredictionKind {
        (**self).kind()
    }
    fn predict(&self, state: &StateBatch) -> Result<Matrix> {
        (**self).predict(state)
    }
}

fn interior_gamma(sched: &ContinuousSchedule, t: f64) -> Result<f64> {
    let g = sched.gamma(t)?;
    if !(g > 0.0 && g < 1.0) {
        return domain(format!("conversion needs 0 < γ < 1, got γ({t}) = {g}"));
    }
    Ok(g)
}

/// Converts between noise, data and score parameterizations of a continuous predictor.
pub fn convert_continuous(
    value: &Matrix,
    from: PredictionKind,
    to: PredictionKind,
    mu: &Matrix,
    t: f64,
    sched: &ContinuousSchedule,
) -> Result<Matrix> {
    use PredictionKind::*;
    if from == OnehotE || to == OnehotE {
        return Err(BfnError::Argument("one-hot predictions are not continuous".into()));
    }
    value.check_same_shape(mu)?;
    let g = interior_gamma(sched, t)?;
    let sd = (g * (1.0 - g)).sqrt();
    if from == to {
        return Ok(value.clone());
    }
    // go through ε
    let eps = match from {
        NoiseEps => value.clone(),
        DataX => mu.zip_map(value, |m, x| (m - g * x) / sd)?,
        ScoreS => value.map(|s| -s * sd),
        OnehotE => unreachable!(),
    };
    match to {
        NoiseEps => Ok(eps),
        DataX => {
            let c = ((1.0 - g) / g).sqrt();
            mu.zip_map(&eps, |m, e| m / g - c * e)
        }
        ScoreS => Ok(eps.map(|e| -e / sd)),
        OnehotE => unreachable!(),
    }
}

/// Evaluates `pred` and converts its output to `target`.
pub fn predict_as(
    pred: &dyn Predictor,
    target: PredictionKind,
    state: &StateBatch,
    sched: &ContinuousSchedule,
) -> Result<Matrix> {
    let raw = pred.predict(state)?;
    if pred.kind() == target {
        return Ok(raw);
    }
    convert_continuous(&raw, pred.kind(), target, &state.values, state.t, sched)
}

/// ŝ(z, t) = −z/(Kβ(t)) + ê − 1/K.
pub fn score_from_e_discrete(e_hat: &Matrix, z: &Matrix, t: f64, sched: &DiscreteSchedule) -> Result<Matrix> {
    e_hat.check_same_shape(z)?;
    let b = sched.beta(t)?;
    if b <= 0.0 {
        return domain(format!("discrete score needs β(t) > 0, got β({t}) = {b}"));
    }
    let k = sched.classes() as f64;
    z.zip_map(e_hat, |zv, e| -zv / (k * b) + e - 1.0 / k)
}

/// Conditional score ∇_μ log q(μ | x) = −(μ − γx)/(γ(1−γ)).
pub fn conditional_score_continuous(mu: &[f64], x: &[f64], t: f64, sched: &ContinuousSchedule) -> Result<Vec<f64>> {
    let g = interior_gamma(sched, t)?;
    let var = g * (1.0 - g);
    Ok(mu.iter().zip(x).map(|(m, xv)| -(m - g * xv) / var).collect())
}

/// Conditional score ∇_z log q(z | x) = −z/(Kβ) + e_x − 1/K.
pub fn conditional_score_discrete(z: &[f64], e_x: &[f64], t: f64, sched: &DiscreteSchedule) -> Result<Vec<f64>> {
    let b = sched.beta(t)?;
    if b <= 0.0 {
        return domain(format!("discrete score needs β(t) > 0, got β({t}) = {b}"));
    }
    let k = sched.classes() as f64;
    Ok(z.iter().zip(e_x).map(|(zv, e)| -zv / (k * b) + e - 1.0 / k).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use PredictionKind::*;

    fn sched() -> ContinuousSchedule {
        ContinuousSchedule::new(0.1).unwrap()
    }

    #[test]
    fn zero_noise_means_zero_score() {
        let mu = Matrix::filled(2, 3, 0.4);
        let eps = Matrix::zeros(2, 3);
        let s = convert_continuous(&eps, NoiseEps, ScoreS, &mu, 0.4, &sched()).unwrap();
        assert!(s.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conversions_round_trip() {
        let mu = Matrix::from_vec(2, 2, vec![0.3, -1.2, 2.0, 0.01]).unwrap();
        let eps = Matrix::from_vec(2, 2, vec![1.0, -0.5, 0.25, 3.0]).unwrap();
        for mid in [DataX, ScoreS] {
            let there = convert_continuous(&eps, NoiseEps, mid, &mu, 0.6, &sched()).unwrap();
            let back = convert_continuous(&there, mid, NoiseEps, &mu, 0.6, &sched()).unwrap();
            assert!(back.max_abs_diff(&eps) < 1e-12);
        }
        let x = convert_continuous(&eps, NoiseEps, DataX, &mu, 0.6, &sched()).unwrap();
        let s1 = convert_continuous(&x, DataX, ScoreS, &mu, 0.6, &sched()).unwrap();
        let s2 = convert_continuous(&eps, NoiseEps, ScoreS, &mu, 0.6, &sched()).unwrap();
        assert!(s1.max_abs_diff(&s2) < 1e-12);
    }

    /// For point-mass data x*, ε̂ = (μ − γx*)/√(γ(1−γ)).
    #[test]
    fn dirac_noise_from_data() {
        let s = sched();
        let t = 0.35;
        let g = s.gamma(t).unwrap();
        let mu = Matrix::from_vec(1, 2, vec![0.8, -0.1]).unwrap();
        let x = Matrix::from_vec(1, 2, vec![1.5, -2.0]).unwrap();
        let eps = convert_continuous(&x, DataX, NoiseEps, &mu, t, &s).unwrap();
        let sd = (g * (1.0 - g)).sqrt();
        assert!((eps.as_slice()[0] - (0.8 - g * 1.5) / sd).abs() < 1e-12);
        assert!((eps.as_slice()[1] - (-0.1 + g * 2.0) / sd).abs() < 1e-12);
    }

    #[test]
    fn conversion_domain_errors() {
        let m = Matrix::zeros(1, 1);
        assert!(convert_continuous(&m, NoiseEps, DataX, &m, 1.0, &sched()).is_err());
        assert!(convert_continuous(&m, NoiseEps, OnehotE, &m, 0.5, &sched()).is_err());
    }

    #[test]
    fn discrete_score_identities() {
        let d = DiscreteSchedule::new(2.0, 3).unwrap();
        let t = 0.4;
        let b = d.beta(t).unwrap();
        let e = Matrix::from_vec(1, 3, vec![0.0, 1.0, 0.0]).unwrap();
        let z = e.map(|v| b * (3.0 * v - 1.0));
        let s = score_from_e_discrete(&e, &z, t, &d).unwrap();
        assert!(s.as_slice().iter().all(|v| v.abs() < 1e-14));

        let uni = Matrix::filled(1, 3, 1.0 / 3.0);
        let z = Matrix::from_vec(1, 3, vec![0.5, -1.0, 2.0]).unwrap();
        let s = score_from_e_discrete(&uni, &z, t, &d).unwrap();
        for (sv, zv) in s.as_slice().iter().zip(z.as_slice()) {
            assert!((sv + zv / (3.0 * b)).abs() < 1e-14);
        }
        assert!(score_from_e_discrete(&uni, &z, 1.0, &d).is_err());
    }

    /// For single-sequence data the marginal of z is the Gaussian itself, so
    /// the oracle score must equal a finite difference of its log density.
    #[test]
    fn discrete_score_matches_log_density_gradient() {
        let k = 3usize;
        let d = DiscreteSchedule::new(1.5, k).unwrap();
        let t = 0.3;
        let b = d.beta(t).unwrap();
        let e_x = [0.0, 0.0, 1.0, 1.0, 0.0, 0.0];
        let logq = |z: &[f64]| -> f64 {
            z.iter()
                .zip(&e_x)
                .map(|(zv, e)| {
                    let m = b * (k as f64 * e - 1.0);
                    -(zv - m).powi(2) / (2.0 * k as f64 * b)
                })
                .sum()
        };
        let z = vec![0.3, -0.7, 1.1, 0.2, 0.0, -0.4];
        let data = CategoricalData::new(k, 2, vec![vec![2, 0]], vec![1.0]).unwrap();
        let oracle = CategoricalOracle::new(data, d).unwrap();
        let state = StateBatch::discrete(Matrix::from_vec(1, 6, z.clone()).unwrap(), 2, k, t).unwrap();
        let e_hat = oracle.predict(&state).unwrap();
        let s = score_from_e_discrete(&e_hat, &state.values, t, &d).unwrap();
        for i in 0..6 {
            let h = 1e-5;
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[i] += h;
            zm[i] -= h;
            let fd = (logq(&zp) - logq(&zm)) / (2.0 * h);
            assert!((fd - s.as_slice()[i]).abs() < 1e-5, "{i}: {fd} vs {}", s.as_slice()[i]);
        }
    }
}
