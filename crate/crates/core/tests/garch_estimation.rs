use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use volcast_core::garch::{self, GarchParams};

#[test]
fn recovers_simulated_parameters() {
    let truth = GarchParams::new(0.0, 1e-6, 0.1, 0.85).unwrap();
    for seed in [1, 2, 3] {
        let r = garch::simulate_garch(&truth, 20_000, seed).unwrap();
        let fit = garch::fit(&r).unwrap();
        let p = fit.params;
        assert!((p.a1 - 0.1).abs() <= 0.03, "seed {seed}: a1 = {}", p.a1);
        assert!((p.b1 - 0.85).abs() <= 0.03, "seed {seed}: b1 = {}", p.b1);
        assert!((p.persistence() - 0.95).abs() <= 0.02);
        assert!(p.a0 > 0.5e-6 && p.a0 < 2e-6, "seed {seed}: a0 = {}", p.a0);
    }
}

#[test]
fn fit_beats_random_parameter_draws() {
    let truth = GarchParams::new(0.0005, 2e-6, 0.08, 0.9).unwrap();
    let r = garch::simulate_garch(&truth, 3000, 11).unwrap();
    let fit = garch::fit(&r).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mu = fit.params.mu;
    for _ in 0..100 {
        let a1 = rng.random_range(0.0..0.3);
        let b1 = rng.random_range(0.0..(0.999 - a1));
        let a0 = fit.params.a0 * rng.random_range(0.2..5.0);
        let p = GarchParams::new(mu, a0, a1, b1).unwrap();
        let other = garch::filter_variance(&r, &p).unwrap();
        assert!(fit.log_likelihood >= other.log_likelihood);
    }
}

#[test]
fn summary_round_trips_through_json() {
    let truth = GarchParams::new(0.0, 1e-6, 0.1, 0.85).unwrap();
    let r = garch::simulate_garch(&truth, 2000, 4).unwrap();
    let fit = garch::fit(&r).unwrap();
    let json = serde_json::to_string(&fit.summary()).unwrap();
    let back: garch::FitSummary = serde_json::from_str(&json).unwrap();
    assert_eq!(back, fit.summary());
    let refit = garch::filter_variance(&r, &back.params().unwrap()).unwrap();
    assert_eq!(refit.cond_variance, fit.cond_variance);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn multi_step_matches_closed_form(
        a0 in 1e-7f64..1e-4,
        a1 in 0.0f64..0.3,
        share in 0.0f64..0.98,
        seed in 0u64..1000,
    ) {
        let b1 = (0.999 - a1) * share;
        let p = GarchParams::new(0.0, a0, a1, b1).unwrap();
        let r = garch::simulate_garch(&p, 50, seed).unwrap();
        let fit = garch::filter_variance(&r, &p).unwrap();
        let fc = garch::forecast_multi_step(&fit, 100).unwrap();
        let su = p.unconditional_variance();
        let e1 = fc.expected_variance[0];
        for (k, e) in fc.expected_variance.iter().enumerate() {
            let closed = su + p.persistence().powi(k as i32) * (e1 - su);
            prop_assert!(((e - closed) / closed).abs() < 1e-12);
        }
        for w in fc.expected_variance.windows(2) {
            prop_assert!((w[1] - su).abs() <= (w[0] - su).abs() + 4.0 * f64::EPSILON * su);
        }
    }

    #[test]
    fn filtered_variance_stays_positive(
        a1 in 0.0f64..0.3,
        share in 0.0f64..0.98,
        seed in 0u64..1000,
    ) {
        let b1 = (0.999 - a1) * share;
        let p = GarchParams::new(0.0, 1e-6, a1, b1).unwrap();
        let r = garch::simulate_garch(&p, 200, seed).unwrap();
        let fit = garch::filter_variance(&r, &p).unwrap();
        prop_assert!(fit.cond_variance.iter().all(|v| *v > 0.0 && v.is_finite()));
        prop_assert!(garch::forecast_one_step(&fit) >= p.a0);
    }
}
