//! Training objectives and their score-matching counterparts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{argument, domain, BfnError, Result};
use crate::forward::{OneHotBatch, StateBatch};
use crate::predictors::{conditional_score_continuous, PredictionKind, Predictor};
use crate::schedules::{ContinuousSchedule, DiscreteSchedule};
use crate::tensor::{sq_dist, Matrix};

/// Training times are drawn from `(T_MIN, 1 − T_MIN)`.
pub const T_MIN: f64 = 1e-3;

/// One evaluated term of a loss expectation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSample {
    pub x: Vec<f64>,
    pub t: f64,
    pub noise: Vec<f64>,
    pub state: Vec<f64>,
    pub value: f64,
}

fn open_unit(t: f64) -> Result<()> {
    if !(t > 0.0 && t < 1.0) {
        return domain(format!("loss needs t in (0, 1), got {t}"));
    }
    Ok(())
}

/// −ln σ₁ / σ₁^{2t}.
pub fn continuous_weight(sched: &ContinuousSchedule, t: f64) -> Result<f64> {
    open_unit(t)?;
    let s = sched.sigma1();
    Ok(-s.ln() / s.powf(2.0 * t))
}

/// K β₁ t.
pub fn discrete_weight(sched: &DiscreteSchedule, t: f64) -> Result<f64> {
    open_unit(t)?;
    Ok(sched.classes() as f64 * sched.beta1() * t)
}

/// μ(t) = γx + √(γ(1−γ)) ε, row by row.
pub fn mu_from_noise(sched: &ContinuousSchedule, x: &Matrix, t: f64, eps: &Matrix) -> Result<Matrix> {
    x.check_same_shape(eps)?;
    let g = sched.gamma(t)?;
    let sd = (g * (1.0 - g)).sqrt();
    x.zip_map(eps, |xv, e| g * xv + sd * e)
}

/// z(t) = β(K e_x − 1) + √(Kβ) u, row by row.
pub fn z_from_noise(sched: &DiscreteSchedule, x: &OneHotBatch, t: f64, u: &Matrix) -> Result<Matrix> {
    let e = x.to_matrix();
    e.check_same_shape(u)?;
    let b = sched.beta(t)?;
    let k = sched.classes() as f64;
    let sd = (k * b).sqrt();
    e.zip_map(u, |ev, uv| b * (k * ev - 1.0) + sd * uv)
}

/// Per-sample continuous objective for every row of `x`.
pub fn loss_continuous_bfn_samples(
    pred: &dyn Predictor,
    sched: &ContinuousSchedule,
    x: &Matrix,
    t: f64,
    eps: &Matrix,
) -> Result<Vec<LossSample>> {
    if pred.kind() != PredictionKind::NoiseEps {
        return argument("continuous loss needs a noise-eps predictor");
    }
    let w = continuous_weight(sched, t)?;
    let mu = mu_from_noise(sched, x, t, eps)?;
    let state = StateBatch::continuous(mu, t);
    let eps_hat = pred.predict(&state)?;
    eps_hat.check_same_shape(eps)?;
    Ok((0..x.rows())
        .map(|i| LossSample {
            x: x.row(i).to_vec(),
            t,
            noise: eps.row(i).to_vec(),
            state: state.values.row(i).to_vec(),
            value: w * sq_dist(eps.row(i), eps_hat.row(i)),
        })
        .collect())
}

/// Batch mean of `−ln σ₁ / σ₁^{2t} ‖ε − ε̂(μ(t), t)‖²`.
pub fn loss_continuous_bfn(
    pred: &dyn Predictor,
    sched: &ContinuousSchedule,
    x: &Matrix,
    t: f64,
    eps: &Matrix,
) -> Result<f64> {
    mean(&loss_continuous_bfn_samples(pred, sched, x, t, eps)?)
}

/// Per-sample discrete objective; `z` is the latent draw for each row of `x`.
pub fn loss_discrete_bfn_samples(
    pred: &dyn Predictor,
    sched: &DiscreteSchedule,
    x: &OneHotBatch,
    t: f64,
    z: &Matrix,
) -> Result<Vec<LossSample>> {
    if pred.kind() != PredictionKind::OnehotE {
        return argument("discrete loss needs a onehot-e predictor");
    }
    let w = discrete_weight(sched, t)?;
    let e = x.to_matrix();
    let state = StateBatch::discrete(z.clone(), x.dim(), x.classes(), t)?;
    state.values.check_same_shape(&e)?;
    let e_hat = pred.predict(&state)?;
    e_hat.check_same_shape(&e)?;
    Ok((0..x.n())
        .map(|i| LossSample {
            x: e.row(i).to_vec(),
            t,
            noise: Vec::new(),
            state: z.row(i).to_vec(),
            value: w * sq_dist(e.row(i), e_hat.row(i)),
        })
        .collect())
}

/// Batch mean of `K β₁ t ‖e_x − ê(z(t), t)‖²`.
pub fn loss_discrete_bfn(pred: &dyn Predictor, sched: &DiscreteSchedule, x: &OneHotBatch, t: f64, z: &Matrix) -> Result<f64> {
    mean(&loss_discrete_bfn_samples(pred, sched, x, t, z)?)
}

/// `weight · ‖ŝ − ∇ log p_{0t}‖²`.
pub fn loss_dsm(score_pred: &[f64], true_cond_score: &[f64], weight: f64) -> Result<f64> {
    if score_pred.len() != true_cond_score.len() {
        return Err(BfnError::Shape(format!(
            "score of length {} against target of length {}",
            score_pred.len(),
            true_cond_score.len()
        )));
    }
    Ok(weight * sq_dist(score_pred, true_cond_score))
}

/// Continuous DSM residual `‖∇ log q(μ|x) − ŝ‖²` for a predictor in any continuous parameterization.
pub fn dsm_residual_continuous(
    pred: &dyn Predictor,
    sched: &ContinuousSchedule,
    x: &Matrix,
    t: f64,
    eps: &Matrix,
) -> Result<Vec<f64>> {
    let mu = mu_from_noise(sched, x, t, eps)?;
    let state = StateBatch::continuous(mu, t);
    let s_hat = crate::predictors::predict_as(pred, PredictionKind::ScoreS, &state, sched)?;
    (0..x.rows())
        .into_par_iter()
        .map(|i| {
            let target = conditional_score_continuous(state.values.row(i), x.row(i), t, sched)?;
            loss_dsm(s_hat.row(i), &target, 1.0)
        })
        .collect()
}

fn mean(samples: &[LossSample]) -> Result<f64> {
    if samples.is_empty() {
        return argument("loss over an empty batch");
    }
    let mut acc = 0.0;
    for s in samples {
        acc += s.value;
    }
    Ok(acc / samples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictors::{score_from_e_discrete, conditional_score_discrete};

    struct Fixed(Matrix, PredictionKind);

    impl Predictor for Fixed {
        fn kind(&self) -> PredictionKind {
            self.1
        }
        fn predict(&self, _state: &StateBatch) -> Result<Matrix> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn weights() {
        let s = ContinuousSchedule::new(0.5).unwrap();
        assert!((continuous_weight(&s, 0.5).unwrap() - 2f64.ln() / 0.5).abs() < 1e-12);
        assert!((continuous_weight(&s, 0.5).unwrap() - 1.386_29).abs() < 1e-5);
        assert!(continuous_weight(&ContinuousSchedule::new(0.9).unwrap(), 0.1).unwrap() > 0.0);
        assert!(continuous_weight(&s, 1.0).is_err());
    }

    #[test]
    fn perfect_predictors_score_zero() {
        let s = ContinuousSchedule::new(0.1).unwrap();
        let x = Matrix::from_vec(2, 2, vec![1.0, 2.0, -1.0, 0.0]).unwrap();
        let eps = Matrix::from_vec(2, 2, vec![0.3, -0.1, 2.0, 0.5]).unwrap();
        let p = Fixed(eps.clone(), PredictionKind::NoiseEps);
        assert_eq!(loss_continuous_bfn(&p, &s, &x, 0.3, &eps).unwrap(), 0.0);

        let d = DiscreteSchedule::new(1.0, 2).unwrap();
        let oh = OneHotBatch::new(1, 2, vec![0]).unwrap();
        let p = Fixed(oh.to_matrix(), PredictionKind::OnehotE);
        let z = Matrix::zeros(1, 2);
        assert_eq!(loss_discrete_bfn(&p, &d, &oh, 0.5, &z).unwrap(), 0.0);
    }

    #[test]
    fn discrete_worked_value_and_linearity() {
        let d = DiscreteSchedule::new(1.0, 2).unwrap();
        let oh = OneHotBatch::new(1, 2, vec![0]).unwrap();
        let p = Fixed(Matrix::from_vec(1, 2, vec![0.7, 0.3]).unwrap(), PredictionKind::OnehotE);
        let z = Matrix::zeros(1, 2);
        let l = loss_discrete_bfn(&p, &d, &oh, 0.5, &z).unwrap();
        assert!((l - 0.18).abs() < 1e-12);
        let l2 = loss_discrete_bfn(&p, &d, &oh, 0.25, &z).unwrap();
        assert!((l2 - 0.09).abs() < 1e-12);
    }

    #[test]
    fn dsm_matches_discrete_loss() {
        let d = DiscreteSchedule::new(3.0, 3).unwrap();
        let t = 0.4;
        let oh = OneHotBatch::new(2, 3, vec![1, 2]).unwrap();
        let e_hat = Matrix::from_vec(1, 6, vec![0.2, 0.5, 0.3, 0.1, 0.1, 0.8]).unwrap();
        let z = Matrix::from_vec(1, 6, vec![0.4, 1.2, -0.3, 0.0, -2.0, 0.9]).unwrap();
        let bfn = loss_discrete_bfn(&Fixed(e_hat.clone(), PredictionKind::OnehotE), &d, &oh, t, &z).unwrap();
        let s_hat = score_from_e_discrete(&e_hat, &z, t, &d).unwrap();
        let target = conditional_score_discrete(z.row(0), oh.to_matrix().row(0), t, &d).unwrap();
        let dsm = loss_dsm(s_hat.row(0), &target, discrete_weight(&d, t).unwrap()).unwrap();
        assert!((bfn - dsm).abs() / bfn < 1e-10);
        assert!(loss_dsm(&[1.0], &[1.0, 2.0], 1.0).is_err());
    }
}
