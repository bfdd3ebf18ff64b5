//! Randomized verification suite over tiny models.
//!
//! Each check draws its models from a seeded stream, evaluates one oracle
//! invariant and records the worst-case error against a fixed tolerance.

use ndarray::Array1;
use rand::Rng;
use serde::Serialize;

use super::{
    exact_expected_grad, exact_log_zeta, exact_partition_rbm, exact_rbm_grad, finite_diff_grad,
    flat_joint_total, marginal_total, mixture_decomposition, posterior_factorization_deviation,
    zeta_by_theta_enumeration, MAX_THETA_COMPONENTS,
};
use crate::ensemble::{EnsembleGrad, EnsembleParams, Family};
use crate::error::Result;
use crate::params::ParamSet;
use crate::rbm::rbm_free_energy;
use crate::rng::derive_rng;

/// Step used for central differences.
pub const FD_DELTA: f64 = 1e-5;
/// Max relative gradient error for coordinates with magnitude ≥ [`SMALL_GRAD`].
pub const GRAD_REL_TOL: f64 = 1e-4;
/// Max absolute gradient error for coordinates with magnitude < [`SMALL_GRAD`].
pub const GRAD_ABS_TOL: f64 = 1e-7;
pub const SMALL_GRAD: f64 = 1e-3;
pub const FACTORIZATION_TOL: f64 = 1e-10;
pub const NORMALIZATION_TOL: f64 = 1e-10;
pub const DOUBLE_ORACLE_TOL: f64 = 1e-10;
pub const DETERMINISTIC_LIMIT_TOL: f64 = 1e-8;
pub const MIXTURE_IDENTITY_TOL: f64 = 1e-8;

#[derive(Clone, Debug, Serialize)]
pub struct SuiteConfig {
    pub max_visible: usize,
    pub max_hidden: usize,
    /// Random models per gradient check and family.
    pub trials: usize,
    pub seed: u64,
    /// Test hook: perturbs the analytic gradient so the gradient checks fail.
    pub corrupt_gradient: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            max_visible: 3,
            max_hidden: 3,
            trials: 50,
            seed: 0,
            corrupt_gradient: false,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub cases: usize,
    pub worst_error: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub config: SuiteConfig,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

impl SuiteReport {
    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn random_ensemble<R: Rng>(family: Family, d: usize, k: usize, rng: &mut R) -> EnsembleParams<f64> {
    let mut loc = ParamSet::<f64>::zeros(d, k);
    let mut spread = ParamSet::<f64>::zeros(d, k);
    for x in loc.iter_mut() {
        *x = rng.random_range(-2.0..=2.0);
    }
    for s in spread.iter_mut() {
        *s = match family {
            Family::Bernoulli => rng.random_range(0.1..=0.9),
            Family::Gaussian => rng.random_range(0.3..=1.5),
        };
    }
    EnsembleParams::new(family, loc, spread).expect("ranges are valid")
}

fn random_state<R: Rng>(len: usize, rng: &mut R) -> Array1<f64> {
    Array1::from_shape_fn(len, |_| if rng.random::<bool>() { 1.0 } else { 0.0 })
}

fn random_dims<R: Rng>(cfg: &SuiteConfig, rng: &mut R) -> (usize, usize) {
    (
        rng.random_range(1..=cfg.max_visible.max(1)),
        rng.random_range(1..=cfg.max_hidden.max(1)),
    )
}

/// Worst relative error over large coordinates and worst absolute error over
/// small ones.
pub fn compare_gradients(analytic: &EnsembleGrad<f64>, numeric: &EnsembleGrad<f64>) -> (f64, f64) {
    let mut worst_rel: f64 = 0.0;
    let mut worst_abs: f64 = 0.0;
    for (&g, &f) in analytic.iter().zip(numeric.iter()) {
        let scale = g.abs().max(f.abs());
        let err = (g - f).abs();
        if scale < SMALL_GRAD {
            worst_abs = worst_abs.max(err);
        } else {
            worst_rel = worst_rel.max(err / scale);
        }
    }
    (worst_rel, worst_abs)
}

fn gradient_check(cfg: &SuiteConfig, family: Family) -> Result<CheckResult> {
    let mut rng = derive_rng(cfg.seed, &[1, family as u64]);
    let (mut worst_rel, mut worst_abs) = (0.0f64, 0.0f64);
    for _ in 0..cfg.trials {
        let (d, k) = random_dims(cfg, &mut rng);
        let ens = random_ensemble(family, d, k, &mut rng);
        let v = random_state(d, &mut rng);
        let mut analytic = exact_expected_grad(&ens, v.view())?;
        if cfg.corrupt_gradient {
            analytic.loc.iter_mut().for_each(|g| *g = *g * 1.01 + 1e-3);
        }
        let numeric = finite_diff_grad(&ens, v.view(), FD_DELTA)?;
        let (rel, abs) = compare_gradients(&analytic, &numeric);
        worst_rel = worst_rel.max(rel);
        worst_abs = worst_abs.max(abs);
    }
    Ok(CheckResult {
        name: format!("gradient_{}", family.name()),
        passed: worst_rel <= GRAD_REL_TOL && worst_abs <= GRAD_ABS_TOL,
        cases: cfg.trials,
        worst_error: worst_rel,
        tolerance: GRAD_REL_TOL,
        detail: format!("worst abs error on small coordinates {worst_abs:.3e} (tolerance {GRAD_ABS_TOL:.0e})"),
    })
}

fn bernoulli_dims_within_cap<R: Rng>(cfg: &SuiteConfig, rng: &mut R) -> (usize, usize) {
    loop {
        let (d, k) = random_dims(cfg, rng);
        if d * k + d + k <= MAX_THETA_COMPONENTS {
            return (d, k);
        }
    }
}

fn factorization_check(cfg: &SuiteConfig) -> Result<CheckResult> {
    let mut rng = derive_rng(cfg.seed, &[2]);
    let mut worst: f64 = 0.0;
    let cases = cfg.trials;
    for _ in 0..cases {
        let (d, k) = bernoulli_dims_within_cap(cfg, &mut rng);
        let ens = random_ensemble(Family::Bernoulli, d, k, &mut rng);
        let v = random_state(d, &mut rng);
        let h = random_state(k, &mut rng);
        worst = worst.max(posterior_factorization_deviation(&ens, v.view(), h.view())?);
    }
    Ok(CheckResult {
        name: "posterior_factorization".into(),
        passed: worst <= FACTORIZATION_TOL,
        cases,
        worst_error: worst,
        tolerance: FACTORIZATION_TOL,
        detail: "enumerated joint posterior vs product of component posteriors".into(),
    })
}

fn normalization_check(cfg: &SuiteConfig) -> Result<CheckResult> {
    let mut rng = derive_rng(cfg.seed, &[3]);
    let mut worst: f64 = 0.0;
    for t in 0..cfg.trials {
        let family = if t % 2 == 0 { Family::Bernoulli } else { Family::Gaussian };
        let (d, k) = random_dims(cfg, &mut rng);
        let ens = random_ensemble(family, d, k, &mut rng);
        worst = worst.max((flat_joint_total(&ens)? - 1.0).abs());
        worst = worst.max((marginal_total(&ens)? - 1.0).abs());
        // Plain RBM: Σ_v exp(-F(v)) = Z.
        let theta = crate::ensemble::sample_theta_prior(&ens, &mut rng);
        let z = exact_partition_rbm(&theta)?;
        let mut total = 0.0;
        for bits in 0..1usize << d {
            let v = Array1::from_shape_fn(d, |i| ((bits >> i) & 1) as f64);
            total += (-rbm_free_energy(v.view(), &theta)?).exp();
        }
        worst = worst.max((total / z - 1.0).abs());
    }
    Ok(CheckResult {
        name: "normalization".into(),
        passed: worst <= NORMALIZATION_TOL,
        cases: cfg.trials,
        worst_error: worst,
        tolerance: NORMALIZATION_TOL,
        detail: "flat joint, visible marginal and RBM free-energy sums".into(),
    })
}

fn double_oracle_check(cfg: &SuiteConfig) -> Result<CheckResult> {
    let mut rng = derive_rng(cfg.seed, &[4]);
    let mut worst: f64 = 0.0;
    for _ in 0..cfg.trials {
        let (d, k) = bernoulli_dims_within_cap(cfg, &mut rng);
        let ens = random_ensemble(Family::Bernoulli, d, k, &mut rng);
        let analytic = exact_log_zeta(&ens)?;
        let enumerated = zeta_by_theta_enumeration(&ens)?.ln();
        worst = worst.max((analytic - enumerated).abs());
    }
    Ok(CheckResult {
        name: "double_oracle_zeta".into(),
        passed: worst <= DOUBLE_ORACLE_TOL,
        cases: cfg.trials,
        worst_error: worst,
        tolerance: DOUBLE_ORACLE_TOL,
        detail: "log ζ by analytic θ-marginalization vs explicit θ-support enumeration".into(),
    })
}

fn deterministic_limit_check(cfg: &SuiteConfig) -> Result<CheckResult> {
    let mut rng = derive_rng(cfg.seed, &[5]);
    let mut worst: f64 = 0.0;
    for t in 0..cfg.trials {
        let family = if t % 2 == 0 { Family::Bernoulli } else { Family::Gaussian };
        let (d, k) = random_dims(cfg, &mut rng);
        let base = random_ensemble(family, d, k, &mut rng);
        let ens = EnsembleParams::degenerate(family, &base.loc);
        let v = random_state(d, &mut rng);
        let g = exact_expected_grad(&ens, v.view())?;
        let rbm = exact_rbm_grad(&base.loc, v.view())?;
        worst = worst.max(g.loc.max_abs_diff(&rbm));
    }
    Ok(CheckResult {
        name: "deterministic_limit".into(),
        passed: worst <= DETERMINISTIC_LIMIT_TOL,
        cases: cfg.trials,
        worst_error: worst,
        tolerance: DETERMINISTIC_LIMIT_TOL,
        detail: "p = 1 / σ = 0 ensemble gradient vs enumerated RBM gradient".into(),
    })
}

fn mixture_check(cfg: &SuiteConfig) -> Result<CheckResult> {
    let mut rng = derive_rng(cfg.seed, &[6]);
    let cases = cfg.trials.max(20);
    let mut worst: f64 = 0.0;
    let mut min_kl = f64::INFINITY;
    for _ in 0..cases {
        let (d, k) = bernoulli_dims_within_cap(cfg, &mut rng);
        let ens = random_ensemble(Family::Bernoulli, d, k, &mut rng);
        let n = rng.random_range(1..=4);
        let data = ndarray::Array2::from_shape_fn((n, d), |_| if rng.random::<bool>() { 1.0 } else { 0.0 });
        let dec = mixture_decomposition(&ens, data.view())?;
        worst = worst.max(dec.identity_gap());
        min_kl = min_kl.min(dec.kl_divergence);
    }
    Ok(CheckResult {
        name: "mixture_identity".into(),
        passed: worst <= MIXTURE_IDENTITY_TOL && min_kl >= 0.0,
        cases,
        worst_error: worst,
        tolerance: MIXTURE_IDENTITY_TOL,
        detail: format!("smallest KL divergence {min_kl:.3e}"),
    })
}

/// Runs every oracle check.
pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    let checks = vec![
        gradient_check(cfg, Family::Bernoulli)?,
        gradient_check(cfg, Family::Gaussian)?,
        factorization_check(cfg)?,
        normalization_check(cfg)?,
        double_oracle_check(cfg)?,
        deterministic_limit_check(cfg)?,
        mixture_check(cfg)?,
    ];
    let passed = checks.iter().all(|c| c.passed);
    Ok(SuiteReport {
        config: cfg.clone(),
        checks,
        passed,
    })
}
