use approx::assert_abs_diff_eq;
use ndarray::{array, Array1, Array2};

use super::*;
use crate::ensemble::{EnsembleParams, Family};
use crate::rng::rng_from_seed;

fn rbm(w: f64, b: f64, c: f64) -> RbmParams<f64> {
    ParamSet::new(array![[w]], array![b], array![c]).unwrap()
}

fn bernoulli(loc: ParamSet<f64>, p: f64) -> EnsembleParams<f64> {
    let spread = ParamSet::filled(loc.visible(), loc.hidden(), p);
    EnsembleParams::new(Family::Bernoulli, loc, spread).unwrap()
}

fn zeta_example() -> EnsembleParams<f64> {
    bernoulli(rbm(2f64.ln(), 0.0, 0.0), 0.5)
}

fn random_ensemble(family: Family, d: usize, k: usize, seed: u64) -> EnsembleParams<f64> {
    use rand::Rng;
    let mut rng = rng_from_seed(seed);
    let mut loc = ParamSet::<f64>::zeros(d, k);
    let mut spread = ParamSet::<f64>::zeros(d, k);
    loc.iter_mut().for_each(|x| *x = rng.random_range(-2.0..2.0));
    spread.iter_mut().for_each(|x| {
        *x = match family {
            Family::Bernoulli => rng.random_range(0.1..0.9),
            Family::Gaussian => rng.random_range(0.3..1.5),
        }
    });
    EnsembleParams::new(family, loc, spread).unwrap()
}

#[test]
fn partition_of_zero_model_is_four() {
    assert_abs_diff_eq!(exact_partition_rbm(&rbm(0.0, 0.0, 0.0)).unwrap(), 4.0, epsilon = 1e-12);
}

#[test]
fn partition_with_log_two_weight_is_five() {
    assert_abs_diff_eq!(exact_partition_rbm(&rbm(2f64.ln(), 0.0, 0.0)).unwrap(), 5.0, epsilon = 1e-12);
}

#[test]
fn free_energy_sums_to_partition() {
    let mut rng = rng_from_seed(4);
    let p: RbmParams<f64> = crate::rbm::init_params::<f64, _>(3, 2, &mut rng).map(|x| x * 100.0);
    let z = exact_partition_rbm(&p).unwrap();
    let total: f64 = all_states(3)
        .iter()
        .map(|v| (-crate::rbm::rbm_free_energy(v.view(), &p).unwrap()).exp())
        .sum();
    assert_abs_diff_eq!(total, z, epsilon = 1e-10 * z);
}

#[test]
fn partition_rejects_oversized_models() {
    let p = RbmParams::<f64>::zeros(11, 10);
    assert!(matches!(exact_partition_rbm(&p), Err(Error::SizeCap { .. })));
}

#[test]
fn marginal_factor_examples() {
    let b = Component::Bernoulli(BernoulliComponent { value: 1.0, prob: 0.5 });
    let g = Component::Gaussian(GaussianComponent { mean: 0.0, std: 1.0 });
    assert_abs_diff_eq!(theta_marginal_factor(b, 0.0), 1.0, epsilon = 1e-15);
    assert_abs_diff_eq!(theta_marginal_factor(g, 0.0), 1.0, epsilon = 1e-15);
    assert_abs_diff_eq!(theta_marginal_factor(b, 1.0), 1.8591409142, epsilon = 1e-9);
    assert_abs_diff_eq!(theta_marginal_factor(g, 1.0), 1.6487212707, epsilon = 1e-9);
}

#[test]
fn zeta_of_zero_atoms_counts_states() {
    let ens = bernoulli(ParamSet::zeros(2, 3), 0.3);
    assert_abs_diff_eq!(exact_zeta(&ens).unwrap(), 32.0, epsilon = 1e-10);
    let g = EnsembleParams::new(Family::Gaussian, ParamSet::<f64>::zeros(2, 1), ParamSet::zeros(2, 1)).unwrap();
    assert_abs_diff_eq!(exact_zeta(&g).unwrap(), 8.0, epsilon = 1e-10);
}

#[test]
fn zeta_example_is_four_and_a_half() {
    assert_abs_diff_eq!(exact_zeta(&zeta_example()).unwrap(), 4.5, epsilon = 1e-12);
}

#[test]
fn zeta_matches_double_enumeration() {
    for seed in 0..5 {
        let ens = random_ensemble(Family::Bernoulli, 2, 2, seed);
        let a = exact_zeta(&ens).unwrap();
        let b = zeta_by_theta_enumeration(&ens).unwrap();
        assert!((a - b).abs() <= 1e-10 * a.max(1.0), "{a} vs {b}");
    }
}

#[test]
fn loglik_examples() {
    let ens = bernoulli(ParamSet::zeros(3, 2), 0.5);
    let v = array![1.0, 0.0, 1.0];
    assert_abs_diff_eq!(exact_loglik_flat(&ens, v.view()).unwrap(), -3.0 * 2f64.ln(), epsilon = 1e-12);
    let ll = exact_loglik_flat(&zeta_example(), array![1.0].view()).unwrap();
    assert_abs_diff_eq!(ll, (2.5f64 / 4.5).ln(), epsilon = 1e-12);
}

#[test]
fn loglik_normalizes() {
    for (seed, family) in [(1, Family::Bernoulli), (2, Family::Gaussian)] {
        let ens = random_ensemble(family, 3, 2, seed);
        let total: f64 = all_states(3)
            .iter()
            .map(|v| exact_loglik_flat(&ens, v.view()).unwrap().exp())
            .sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(flat_joint_total(&ens).unwrap(), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(marginal_total(&ens).unwrap(), 1.0, epsilon = 1e-10);
    }
}

#[test]
fn free_energy_matches_loglik() {
    let ens = random_ensemble(Family::Gaussian, 2, 2, 8);
    let v = array![0.0, 1.0];
    let f = exact_free_energy(&ens, v.view()).unwrap();
    let ll = exact_loglik_flat(&ens, v.view()).unwrap();
    assert_abs_diff_eq!(ll, -f - exact_log_zeta(&ens).unwrap(), epsilon = 1e-12);
}

#[test]
fn soft_states_are_rejected() {
    let ens = zeta_example();
    assert!(matches!(
        exact_loglik_flat(&ens, array![0.5].view()),
        Err(Error::SoftState { .. })
    ));
}

#[test]
fn expected_gradient_vanishes_at_model_average() {
    // Averaging the data term over v ~ P(v) reproduces the model term.
    let ens = random_ensemble(Family::Bernoulli, 2, 2, 3);
    let mut avg = EnsembleGrad::<f64>::zeros(2, 2);
    for v in all_states(2) {
        let w = exact_loglik_flat(&ens, v.view()).unwrap().exp();
        avg.scaled_add(w, &exact_expected_grad(&ens, v.view()).unwrap());
    }
    assert!(avg.iter().all(|g| g.abs() < 1e-12));

    let zero = bernoulli(ParamSet::zeros(2, 2), 0.5);
    let mut avg = EnsembleGrad::<f64>::zeros(2, 2);
    for v in all_states(2) {
        avg.scaled_add(0.25, &exact_expected_grad(&zero, v.view()).unwrap());
    }
    assert!(avg.iter().all(|g| g.abs() < 1e-12));
}

#[test]
fn expected_gradient_matches_finite_differences() {
    for (seed, family) in (0..10).map(|s| (s, if s % 2 == 0 { Family::Bernoulli } else { Family::Gaussian })) {
        let ens = random_ensemble(family, 2, 3, 100 + seed);
        let v = array![1.0, 0.0];
        let g = exact_expected_grad(&ens, v.view()).unwrap();
        let f = finite_diff_grad(&ens, v.view(), 1e-5).unwrap();
        let (rel, abs) = suite::compare_gradients(&g, &f);
        assert!(rel <= 1e-4 && abs <= 1e-7, "{family:?}: rel {rel:e} abs {abs:e}");
    }
}

#[test]
fn finite_differences_converge_when_delta_halves() {
    let ens = random_ensemble(Family::Gaussian, 2, 2, 21);
    let v = array![1.0, 1.0];
    let g = exact_expected_grad(&ens, v.view()).unwrap();
    let errs: Vec<f64> = [1e-1, 5e-2, 2.5e-2, 1.25e-2]
        .iter()
        .map(|&d| finite_diff_grad(&ens, v.view(), d).unwrap().max_abs_diff(&g))
        .collect();
    for pair in errs.windows(2) {
        assert!(pair[1] < pair[0], "{errs:?}");
        // Second-order: halving δ cuts the error about fourfold.
        assert!(pair[0] / pair[1] > 3.0, "{errs:?}");
    }
}

#[test]
fn central_difference_is_second_order_on_a_quadratic() {
    let f = |x: f64| 3.0 * x * x * x + x * x;
    let exact = 9.0 + 2.0;
    let err = |d: f64| ((f(1.0 + d) - f(1.0 - d)) / (2.0 * d) - exact).abs();
    assert_abs_diff_eq!(err(1e-2) / err(5e-3), 4.0, epsilon = 1e-3);
}

#[test]
fn finite_diff_rejects_bad_delta() {
    let ens = zeta_example();
    assert!(finite_diff_grad(&ens, array![1.0].view(), 0.0).is_err());
}

#[test]
fn degenerate_gradient_equals_rbm_gradient() {
    let base = random_ensemble(Family::Bernoulli, 3, 2, 5);
    let v = array![1.0, 0.0, 1.0];
    let want = exact_rbm_grad(&base.loc, v.view()).unwrap();
    for family in [Family::Bernoulli, Family::Gaussian] {
        let ens = EnsembleParams::degenerate(family, &base.loc);
        let got = exact_expected_grad(&ens, v.view()).unwrap();
        assert!(got.loc.max_abs_diff(&want) < 1e-10);
    }
}

#[test]
fn rbm_gradient_matches_finite_differences() {
    let p = random_ensemble(Family::Bernoulli, 2, 2, 9).loc;
    let v = array![0.0, 1.0];
    let g = exact_rbm_grad(&p, v.view()).unwrap();
    let flat = p.to_flat_f64();
    for idx in 0..flat.len() {
        let mut plus = flat.clone();
        let mut minus = flat.clone();
        plus[idx] += 1e-5;
        minus[idx] -= 1e-5;
        let lp = exact_rbm_loglik(&ParamSet::from_flat_f64(2, 2, &plus).unwrap(), v.view()).unwrap();
        let lm = exact_rbm_loglik(&ParamSet::from_flat_f64(2, 2, &minus).unwrap(), v.view()).unwrap();
        assert_abs_diff_eq!((lp - lm) / 2e-5, g.to_flat_f64()[idx], epsilon = 1e-7);
    }
}

#[test]
fn posterior_factorizes() {
    let ens = random_ensemble(Family::Bernoulli, 2, 2, 13);
    for v in all_states(2) {
        for h in all_states(2) {
            assert!(posterior_factorization_deviation(&ens, v.view(), h.view()).unwrap() < 1e-10);
        }
    }
}

#[test]
fn theta_enumeration_rejects_gaussian_and_oversize() {
    let g = random_ensemble(Family::Gaussian, 1, 1, 1);
    assert!(matches!(zeta_by_theta_enumeration(&g), Err(Error::WrongFamily { .. })));
    let big = bernoulli(ParamSet::zeros(2, 3), 0.5);
    assert!(matches!(zeta_by_theta_enumeration(&big), Err(Error::SizeCap { .. })));
}

#[test]
fn single_atom_mixture_has_zero_kl() {
    let loc = random_ensemble(Family::Bernoulli, 2, 2, 17).loc;
    let ens = bernoulli(loc.clone(), 1.0);
    let data: Array2<f64> = array![[1.0, 0.0], [1.0, 1.0], [0.0, 0.0]];
    let dec = mixture_decomposition(&ens, data.view()).unwrap();
    assert_abs_diff_eq!(dec.kl_divergence, 0.0, epsilon = 1e-14);
    let want: f64 = data
        .outer_iter()
        .map(|row| exact_rbm_loglik(&loc, row).unwrap())
        .sum();
    assert_abs_diff_eq!(dec.loglik, want, epsilon = 1e-12);
}

#[test]
fn mixture_identity_holds() {
    for seed in 0..20 {
        let ens = random_ensemble(Family::Bernoulli, 2, 2, 200 + seed);
        let data: Array2<f64> = array![[1.0, 0.0], [0.0, 1.0]];
        let dec = mixture_decomposition(&ens, data.view()).unwrap();
        assert!(dec.identity_gap() <= 1e-8);
        assert!(dec.kl_divergence >= 0.0);
    }
}

#[test]
fn mixture_rejects_gaussian() {
    let g = random_ensemble(Family::Gaussian, 1, 1, 1);
    let data: Array2<f64> = array![[1.0]];
    assert!(matches!(mixture_decomposition(&g, data.view()), Err(Error::WrongFamily { .. })));
}

#[test]
fn exact_ascent_never_decreases_loglik() {
    let mut ens = random_ensemble(Family::Bernoulli, 2, 2, 33);
    let data: Vec<Array1<f64>> = vec![array![1.0, 0.0], array![1.0, 1.0], array![1.0, 0.0]];
    let total = |e: &EnsembleParams<f64>| -> f64 {
        data.iter().map(|v| exact_loglik_flat(e, v.view()).unwrap()).sum()
    };
    let mut prev = total(&ens);
    for _ in 0..100 {
        let mut g = EnsembleGrad::<f64>::zeros(2, 2);
        for v in &data {
            g.scaled_add(1.0, &exact_expected_grad(&ens, v.view()).unwrap());
        }
        ens.loc.scaled_add(1e-3, &g.loc);
        ens.spread.scaled_add(1e-3, &g.spread);
        let now = total(&ens);
        assert!(now >= prev - 1e-12, "{now} < {prev}");
        prev = now;
    }
}

#[test]
fn suite_passes_and_detects_corruption() {
    let cfg = SuiteConfig {
        trials: 10,
        ..SuiteConfig::default()
    };
    let report = run_suite(&cfg).unwrap();
    for c in &report.checks {
        assert!(c.passed, "{c:?}");
    }
    assert!(report.passed);

    let bad = run_suite(&SuiteConfig {
        corrupt_gradient: true,
        ..cfg
    })
    .unwrap();
    assert!(!bad.passed);
    assert!(!bad.check("gradient_bernoulli").unwrap().passed);
}
