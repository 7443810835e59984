use bfn_core::schedules::{make_grid, ContinuousSchedule, DiscreteSchedule, GridPolicy, TimeGrid};
use proptest::prelude::*;

fn sched(s: f64) -> ContinuousSchedule {
    ContinuousSchedule::new(s).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn gamma_decreases_in_t(s in 0.001f64..0.9, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let c = sched(s);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(hi - lo > 1e-9);
        prop_assert!(c.gamma(lo).unwrap() > c.gamma(hi).unwrap());
        prop_assert_eq!(c.gamma(1.0).unwrap(), 0.0);
    }

    #[test]
    fn alpha_sigma_match_gamma(s in 0.001f64..0.9, t in 0.0f64..0.999) {
        let c = sched(s);
        let g = c.gamma(t).unwrap();
        let (a, sd) = c.alpha_sigma(t).unwrap();
        prop_assert!((a - g).abs() < 1e-15);
        prop_assert!((sd * sd - g * (1.0 - g)).abs() < 1e-14);
        let lam = c.lambda(t).unwrap();
        prop_assert!((lam - 0.5 * (g / (1.0 - g)).ln()).abs() < 1e-9 * (1.0 + lam.abs()));
    }

    #[test]
    fn lambda_inverts(s in 0.005f64..0.5, t in 0.01f64..0.99) {
        let c = sched(s);
        let back = c.t_of_lambda(c.lambda(t).unwrap()).unwrap();
        prop_assert!((back - t).abs() < 1e-8, "{} vs {}", back, t);
    }

    #[test]
    fn sde_coefficients_follow_gamma(s in 0.005f64..0.5, t in 0.0f64..0.99) {
        let c = sched(s);
        let (f, g2) = c.drift_diffusion(t).unwrap();
        let g = c.gamma(t).unwrap();
        let d = c.gamma_prime(t).unwrap();
        prop_assert!((f - d / g).abs() <= 1e-10 * f.abs().max(1.0));
        prop_assert!((g2 + d).abs() <= 1e-12 * g2.abs().max(1.0));
        prop_assert!(g2 > 0.0);
        // central difference
        let h = 1e-6;
        let fd = (c.gamma(t + h).unwrap() - c.gamma((t - h).max(0.0)).unwrap()) / (t + h - (t - h).max(0.0));
        prop_assert!((fd - d).abs() < 1e-5 * d.abs().max(1.0));
    }

    #[test]
    fn discrete_coefficients(b1 in 0.1f64..10.0, k in 2usize..30, t in 0.0f64..0.99) {
        let d = DiscreteSchedule::new(b1, k).unwrap();
        let (h, l2) = d.drift_diffusion(t).unwrap();
        let beta = d.beta(t).unwrap();
        prop_assert!((beta - b1 * (1.0 - t).powi(2)).abs() < 1e-12 * b1);
        // H = β'/β and L² = −Kβ'
        let bp = -2.0 * b1 * (1.0 - t);
        prop_assert!((h - bp / beta).abs() < 1e-9 * h.abs());
        prop_assert!((l2 + k as f64 * bp).abs() < 1e-9 * l2);
    }

    #[test]
    fn grids_are_strict_and_anchored(eta in 1e-4f64..0.1, m in 1usize..200, lam in any::<bool>()) {
        let policy = if lam { GridPolicy::UniformLambda(sched(0.02)) } else { GridPolicy::UniformT };
        let g = make_grid(eta, m, policy).unwrap();
        let st = g.steps();
        prop_assert_eq!(st.len(), m + 1);
        prop_assert_eq!(g.intervals(), m);
        prop_assert!((st[0] - (1.0 - eta)).abs() < 1e-15);
        prop_assert_eq!(*st.last().unwrap(), 0.0);
        prop_assert!(st.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn uniform_lambda_has_equal_increments(m in 2usize..64) {
        let c = sched(0.02);
        let g = make_grid(1e-3, m, GridPolicy::UniformLambda(c)).unwrap();
        let lams: Vec<f64> = g.steps().iter().map(|&t| c.lambda(t).unwrap()).collect();
        let h0 = lams[1] - lams[0];
        for w in lams.windows(2) {
            prop_assert!(((w[1] - w[0]) - h0).abs() < 1e-7 * h0.abs());
        }
    }
}

#[test]
fn rejects_bad_parameters() {
    assert!(ContinuousSchedule::new(0.0).is_err());
    assert!(ContinuousSchedule::new(1.0).is_err());
    assert!(DiscreteSchedule::new(0.0, 3).is_err());
    assert!(DiscreteSchedule::new(1.0, 1).is_err());
    assert!(sched(0.02).gamma(1.5).is_err());
    assert!(sched(0.02).drift_diffusion(1.0).is_err());
    assert!(make_grid(1e-3, 0, GridPolicy::UniformT).is_err());
    assert!(make_grid(0.0, 5, GridPolicy::UniformT).is_err());
    assert!(TimeGrid::from_steps(0.1, vec![0.9, 0.95, 0.0], "x").is_err());
    assert!(TimeGrid::from_steps(0.1, vec![0.9, 0.1], "x").is_err());
}
