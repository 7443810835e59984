//! Closed-form accuracy schedules and linear-SDE coefficients.
//!
//! Time runs in the generative-friendly direction: `t = 1` is the
//! uninformative end (γ = β = 0) and `t = 0` carries the most information.

use serde::{Deserialize, Serialize};

use crate::error::{argument, domain, BfnError, Result};

/// Default truncation of the time interval, `t_0 = 1 - eta`.
pub const DEFAULT_ETA: f64 = 1e-3;

/// Coefficients of a scalar linear SDE `ds = drift(t) s dt + sqrt(diffusion2(t)) dw`.
pub trait LinearSde {
    fn coefficients(&self, t: f64) -> Result<(f64, f64)>;
}

/// Schedule for continuous data, parameterized by `sigma1 ∈ (0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousSchedule {
    sigma1: f64,
}

impl ContinuousSchedule {
    pub fn new(sigma1: f64) -> Result<Self> {
        if !(sigma1 > 0.0 && sigma1 < 1.0) {
            return argument(format!("sigma1 must lie in (0, 1), got {sigma1}"));
        }
        Ok(Self { sigma1 })
    }

    pub fn sigma1(&self) -> f64 {
        self.sigma1
    }

    fn ln_sigma1(&self) -> f64 {
        self.sigma1.ln()
    }

    /// `sigma1^{2(1-t)}`, i.e. `1 - γ(t)`.
    fn one_minus_gamma_unchecked(&self, t: f64) -> f64 {
        (2.0 * (1.0 - t) * self.ln_sigma1()).exp()
    }

    fn gamma_unchecked(&self, t: f64) -> f64 {
        -(2.0 * (1.0 - t) * self.ln_sigma1()).exp_m1()
    }

    /// γ(t) = 1 − σ₁^{2(1−t)}.
    pub fn gamma(&self, t: f64) -> Result<f64> {
        check_unit(t)?;
        Ok(self.gamma_unchecked(t))
    }

    /// Posterior precision ρ(t) = 1 / (1 − γ(t)).
    pub fn rho(&self, t: f64) -> Result<f64> {
        check_unit(t)?;
        Ok(1.0 / self.one_minus_gamma_unchecked(t))
    }

    /// Mean coefficient ᾱ_t = γ(t) and noise scale σ̄_t = √(γ(1−γ)).
    pub fn alpha_sigma(&self, t: f64) -> Result<(f64, f64)> {
        let g = self.gamma(t)?;
        Ok((g, (g * (1.0 - g)).sqrt()))
    }

    /// Half log signal-to-noise ratio λ(t) = ½ log(γ / (1 − γ)).
    pub fn lambda(&self, t: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&t) {
            return domain(format!("lambda is finite only for t in [0, 1), got {t}"));
        }
        let g = self.gamma_unchecked(t);
        let one_minus = self.one_minus_gamma_unchecked(t);
        Ok(0.5 * (g.ln() - one_minus.ln()))
    }

    /// Closed-form inverse of [`Self::lambda`].
    ///
    /// Fails when the λ value does not correspond to any `t ∈ [0, 1)` for this schedule.
    pub fn t_of_lambda(&self, lam: f64) -> Result<f64> {
        if !lam.is_finite() {
            return domain(format!("lambda must be finite, got {lam}"));
        }
        // ln(1 - γ) = -softplus(2λ)
        let ln_one_minus_gamma = -softplus(2.0 * lam);
        let t = 1.0 - ln_one_minus_gamma / (2.0 * self.ln_sigma1());
        if !(0.0..1.0).contains(&t) {
            return domain(format!(
                "lambda {lam} maps to t = {t}, outside [0, 1) for sigma1 = {}",
                self.sigma1
            ));
        }
        Ok(t)
    }

    /// Drift F(t) and squared diffusion G(t)² of the forward SDE on μ.
    pub fn drift_diffusion(&self, t: f64) -> Result<(f64, f64)> {
        if !(0.0..1.0).contains(&t) {
            return domain(format!("continuous SDE coefficients need t in [0, 1), got {t}"));
        }
        let s = self.one_minus_gamma_unchecked(t);
        let ln_s1 = self.ln_sigma1();
        let g2 = -2.0 * s * ln_s1;
        let f = 2.0 * s * ln_s1 / self.gamma_unchecked(t);
        Ok((f, g2))
    }

    /// dγ/dt = 2 σ₁^{2(1−t)} ln σ₁.
    pub fn gamma_prime(&self, t: f64) -> Result<f64> {
        check_unit(t)?;
        Ok(2.0 * self.one_minus_gamma_unchecked(t) * self.ln_sigma1())
    }
}

impl LinearSde for ContinuousSchedule {
    fn coefficients(&self, t: f64) -> Result<(f64, f64)> {
        self.drift_diffusion(t)
    }
}

/// Schedule for discrete data with `classes` categories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscreteSchedule {
    beta1: f64,
    classes: usize,
}

impl DiscreteSchedule {
    pub fn new(beta1: f64, classes: usize) -> Result<Self> {
        if !(beta1 > 0.0 && beta1.is_finite()) {
            return argument(format!("beta1 must be positive, got {beta1}"));
        }
        if classes < 2 {
            return argument(format!("need at least two classes, got {classes}"));
        }
        Ok(Self { beta1, classes })
    }

    pub fn beta1(&self) -> f64 {
        self.beta1
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// β(t) = (1 − t)² β₁.
    pub fn beta(&self, t: f64) -> Result<f64> {
        check_unit(t)?;
        Ok((1.0 - t).powi(2) * self.beta1)
    }

    /// H(t) = −2/(1−t) and L(t)² = 2Kβ₁(1−t).
    pub fn drift_diffusion(&self, t: f64) -> Result<(f64, f64)> {
        if !(0.0..1.0).contains(&t) {
            return domain(format!("discrete SDE coefficients need t in [0, 1), got {t}"));
        }
        let h = -2.0 / (1.0 - t);
        let l2 = 2.0 * self.classes as f64 * self.beta1 * (1.0 - t);
        Ok((h, l2))
    }
}

impl LinearSde for DiscreteSchedule {
    fn coefficients(&self, t: f64) -> Result<(f64, f64)> {
        self.drift_diffusion(t)
    }
}

fn check_unit(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return domain(format!("time must lie in [0, 1], got {t}"));
    }
    Ok(())
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// How grid points are spread between `1 - eta` and `0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridPolicy {
    UniformT,
    /// Equal increments of λ for the given continuous schedule.
    UniformLambda(ContinuousSchedule),
}

impl GridPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            GridPolicy::UniformT => "uniform-t",
            GridPolicy::UniformLambda(_) => "uniform-lambda",
        }
    }
}

/// Strictly decreasing times `1 - eta = t_0 > t_1 > ... > t_M = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    eta: f64,
    steps: Vec<f64>,
    policy: &'static str,
}

impl TimeGrid {
    pub fn new(eta: f64, m: usize, policy: GridPolicy) -> Result<Self> {
        if m == 0 {
            return argument("a time grid needs at least one step");
        }
        if !(eta > 0.0 && eta <= 0.1) {
            return argument(format!("eta must lie in (0, 0.1], got {eta}"));
        }
        let t0 = 1.0 - eta;
        let steps: Vec<f64> = match policy {
            GridPolicy::UniformT => (0..=m).map(|i| t0 * (1.0 - i as f64 / m as f64)).collect(),
            GridPolicy::UniformLambda(sched) => {
                let lo = sched.lambda(t0)?;
                let hi = sched.lambda(0.0)?;
                let mut out = Vec::with_capacity(m + 1);
                out.push(t0);
                for i in 1..m {
                    let lam = lo + (hi - lo) * i as f64 / m as f64;
                    out.push(sched.t_of_lambda(lam)?);
                }
                out.push(0.0);
                out
            }
        };
        Self::from_steps(eta, steps, policy.name())
    }

    /// Wraps explicit times, checking the grid invariants.
    pub fn from_steps(eta: f64, steps: Vec<f64>, policy: &'static str) -> Result<Self> {
        if steps.len() < 2 {
            return argument("a time grid needs at least two points");
        }
        if (steps[0] - (1.0 - eta)).abs() > 1e-15 || *steps.last().unwrap() != 0.0 {
            return argument(format!(
                "grid must run from 1 - eta = {} to 0, got {} .. {}",
                1.0 - eta,
                steps[0],
                steps.last().unwrap()
            ));
        }
        if steps.windows(2).any(|w| !(w[0] > w[1])) {
            return Err(BfnError::Argument("grid times must be strictly decreasing".into()));
        }
        Ok(Self { eta, steps, policy })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    /// Number of intervals M.
    pub fn intervals(&self) -> usize {
        self.steps.len() - 1
    }

    pub fn policy(&self) -> &'static str {
        self.policy
    }

    pub fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.steps.windows(2).map(|w| (w[0], w[1]))
    }
}

/// Convenience constructor mirroring [`TimeGrid::new`].
pub fn make_grid(eta: f64, m: usize, policy: GridPolicy) -> Result<TimeGrid> {
    TimeGrid::new(eta, m, policy)
}
