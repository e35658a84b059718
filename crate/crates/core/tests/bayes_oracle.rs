mod common;

use common::{gaussian_grid_rows, random_prior, rng, rr_rows, rr_xor_family};
use dpsem::accountants::PrivacyProfile;
use dpsem::bayes::{
    bayes_known_rest_delta, exact_posteriors, family_rdp_points, pure_dp_ratio_bound_check,
    simulate_known_rest_exceedance, FiniteMechanismFamily,
};
use dpsem::tradeoff::default_alpha_grid;
use rand::Rng;

#[test]
fn random_priors_respect_pure_dp_ratio_bound() {
    let mut r = rng(71);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let n_rest = r.random_range(1..=3);
        let n_rec = r.random_range(2..=4);
        let prior = random_prior(&mut r, n_rest, n_rec);
        let mech = rr_xor_family(1.0, n_rest, n_rec);
        let c = pure_dp_ratio_bound_check(&prior, &mech).unwrap();
        assert!((c.epsilon - 1.0).abs() < 1e-12);
        assert!(c.holds, "{c:?}");
        worst = worst.max(c.max_ratio.ln());
    }
    assert!((0.9..=1.0 + 1e-12).contains(&worst), "{worst}");
}

#[test]
fn marginals_agree_in_both_worlds() {
    let mut r = rng(72);
    for _ in 0..200 {
        let prior = random_prior(&mut r, 3, 4);
        let probs = (0..3)
            .map(|_| {
                (0..4)
                    .map(|_| {
                        let v: Vec<f64> = (0..5).map(|_| r.random::<f64>() + 0.01).collect();
                        let s: f64 = v.iter().sum();
                        v.into_iter().map(|x| x / s).collect()
                    })
                    .collect()
            })
            .collect();
        let mech = FiniteMechanismFamily::from_probs((0..5).map(|i| i.to_string()).collect(), probs).unwrap();
        for w in 0..5 {
            let v = exact_posteriors(&prior, &mech, w).unwrap();
            assert!((v.log_marginal_actual.exp() - v.log_marginal_counterfactual.exp()).abs() < 1e-12);
            assert!((v.actual_posterior.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!((v.counterfactual_posterior.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

fn check_known_rest_bound(rows: &[Vec<f64>], conditional: &[f64], seed: u64) {
    let points = family_rdp_points(rows, &default_alpha_grid());
    let profile = PrivacyProfile::rdp(points).unwrap();
    for target in 0..rows.len() {
        for (i, eps) in [0.05, 0.2, 0.5, 1.0, 2.0].into_iter().enumerate() {
            let bound = bayes_known_rest_delta(&profile, eps);
            let ex = simulate_known_rest_exceedance(conditional, rows, target, eps, 100_000, seed + 10 * target as u64 + i as u64);
            assert!(
                ex.frequency <= bound + 3.0 * ex.std_error,
                "target={target} eps={eps} freq={} se={} bound={bound}",
                ex.frequency,
                ex.std_error
            );
        }
    }
}

#[test]
fn known_rest_bound_holds_for_randomized_response() {
    check_known_rest_bound(&rr_rows(1.0), &[0.3, 0.7], 100);
    check_known_rest_bound(&rr_rows(0.2), &[0.01, 0.99], 200);
}

#[test]
fn known_rest_bound_holds_for_gaussian_grid() {
    check_known_rest_bound(&gaussian_grid_rows(&[0.0, 1.0, 2.0, 3.0], 1.5), &[0.1, 0.2, 0.3, 0.4], 300);
    check_known_rest_bound(&gaussian_grid_rows(&[0.0, 1.0], 0.8), &[0.05, 0.95], 400);
}

#[test]
fn wrong_prior_ratio_near_one_hundred() {
    let (actual, cf, ratio) = dpsem::bayes::wrong_prior_closed_form(0.01, 101.3);
    // Hand form: 1/(1 + 99 e^{−100.8}).
    assert!((actual - 1.0 / (1.0 + 99.0 * (-100.8f64).exp())).abs() < 1e-15);
    assert_eq!(cf, 0.01);
    assert!((ratio - 100.0).abs() < 1e-9);

    let v = dpsem::bayes::wrong_prior_discretized(0.01, 101.3).unwrap();
    assert!(v.ratio[0] > 50.0);
    assert!((v.ratio[0] - ratio).abs() < 1e-6 * ratio, "{} vs {ratio}", v.ratio[0]);
    assert!((v.counterfactual_posterior[0] - 0.01).abs() < 1e-12);
}

#[test]
fn known_rest_counterfactual_equals_prior() {
    let mut r = rng(73);
    for _ in 0..50 {
        let prior = random_prior(&mut r, 1, 4);
        let mech = FiniteMechanismFamily::from_probs(
            vec!["0".into(), "1".into(), "2".into()],
            vec![(0..4).map(|k| {
                let v = vec![1.0 + k as f64, 2.0, 0.5 + r.random::<f64>()];
                let s: f64 = v.iter().sum();
                v.into_iter().map(|x| x / s).collect()
            }).collect()],
        )
        .unwrap();
        for w in 0..3 {
            let v = exact_posteriors(&prior, &mech, w).unwrap();
            for (c, p) in v.counterfactual_posterior.iter().zip(&prior.conditional()[0]) {
                assert!((c - p).abs() < 1e-12);
            }
        }
    }
}
