//! Ground truth on tiny models by exhaustive enumeration.
//!
//! Everything here runs in `f64` regardless of the model's scalar type.
//! The trained model is the flat joint
//! `P(v, h, θ; α) ∝ e^{-E(v, h, θ)} P(θ; α)`; integrating `θ` out component by
//! component gives `Σ_{v,h} Π_k M_k(a_k(v, h))`, where `M_k` is the moment
//! generating function of component `k` ([`theta_marginal_factor`]).
//!
//! [`mixture_decomposition`] instead uses the mixture reading
//! `P(V; α) = Σ_θ P(θ; α) Π_n P(v_n | θ)` with each RBM normalized by `Z(θ)`,
//! which is the setting where the expected-log-likelihood / KL split is exact.

pub mod suite;

pub use suite::{run_suite, CheckResult, SuiteConfig, SuiteReport};

use ndarray::{Array1, ArrayView1, ArrayView2};

use crate::ensemble::{
    expected_phi_grad, BernoulliComponent, EnsembleGrad, EnsembleParams, Family, GaussianComponent,
};
use crate::error::{Error, Result};
use crate::params::{ParamSet, RbmGrad, RbmParams};
use crate::rbm::{check_len, energy};
use crate::scalar::{log_sum_exp, Scalar};

/// Largest `D + K` accepted by [`exact_partition_rbm`].
pub const MAX_RBM_UNITS: usize = 20;
/// Largest `D + K` accepted by the ensemble enumerations.
pub const MAX_ENSEMBLE_UNITS: usize = 16;
/// Largest `DK + D + K` accepted by enumerations over the `θ` support.
pub const MAX_THETA_COMPONENTS: usize = 10;

/// One parameter component of either family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Component<T> {
    Bernoulli(BernoulliComponent<T>),
    Gaussian(GaussianComponent<T>),
}

impl<T: Scalar> Component<T> {
    fn of(family: Family, loc: T, spread: T) -> Self {
        match family {
            Family::Bernoulli => Component::Bernoulli(BernoulliComponent { value: loc, prob: spread }),
            Family::Gaussian => Component::Gaussian(GaussianComponent { mean: loc, std: spread }),
        }
    }
}

/// `∫ e^{aθ} dP(θ)`: `1 - p + p e^{aθ̄}` or `exp(aμ + a²σ²/2)`.
pub fn theta_marginal_factor<T: Scalar>(comp: Component<T>, a: T) -> f64 {
    log_theta_marginal_factor(comp, a).exp()
}

/// Logarithm of [`theta_marginal_factor`], stable for large exponents.
pub fn log_theta_marginal_factor<T: Scalar>(comp: Component<T>, a: T) -> f64 {
    let a = a.as_f64();
    match comp {
        Component::Bernoulli(BernoulliComponent { value, prob }) => {
            let (x, p) = (a * value.as_f64(), prob.as_f64());
            if p <= 0.0 {
                0.0
            } else if p >= 1.0 {
                x
            } else {
                log_sum_exp(&[(1.0 - p).ln(), p.ln() + x])
            }
        }
        Component::Gaussian(GaussianComponent { mean, std }) => {
            let (m, s) = (mean.as_f64(), std.as_f64());
            a * m + 0.5 * a * a * s * s
        }
    }
}

fn bits_state(bits: usize, len: usize) -> Array1<f64> {
    Array1::from_shape_fn(len, |i| ((bits >> i) & 1) as f64)
}

fn all_states(len: usize) -> Vec<Array1<f64>> {
    (0..1usize << len).map(|b| bits_state(b, len)).collect()
}

fn cap(what: &'static str, size: usize, limit: usize) -> Result<()> {
    if size > limit {
        return Err(Error::SizeCap { what, size, limit });
    }
    Ok(())
}

/// `log Z(θ)` by enumeration of all `2^{D+K}` states.
pub fn log_partition_rbm<T: Scalar>(params: &RbmParams<T>) -> Result<f64> {
    let (d, k) = (params.visible(), params.hidden());
    cap("D + K", d + k, MAX_RBM_UNITS)?;
    let p = params.cast::<f64>();
    let hs = all_states(k);
    let mut terms = Vec::with_capacity(1 << (d + k));
    for vb in 0..1usize << d {
        let v = bits_state(vb, d);
        for h in &hs {
            terms.push(-energy(v.view(), h.view(), &p)?);
        }
    }
    Ok(log_sum_exp(&terms))
}

/// `Z(θ) = Σ_{v,h} e^{-E(v, h, θ)}`.
pub fn exact_partition_rbm<T: Scalar>(params: &RbmParams<T>) -> Result<f64> {
    Ok(log_partition_rbm(params)?.exp())
}

/// Exact `log P(v | θ)` under a single normalized RBM.
pub fn exact_rbm_loglik<T: Scalar>(params: &RbmParams<T>, v: ArrayView1<T>) -> Result<f64> {
    check_len("visible state", params.visible(), v.len())?;
    let p = params.cast::<f64>();
    let v = v.mapv(|x| x.as_f64());
    let terms: Vec<f64> = all_states(p.hidden())
        .iter()
        .map(|h| energy(v.view(), h.view(), &p).map(|e| -e))
        .collect::<Result<_>>()?;
    Ok(log_sum_exp(&terms) - log_partition_rbm(&p)?)
}

/// Exact ascent gradient of `log P(v | θ)` for a plain RBM, by enumeration.
pub fn exact_rbm_grad<T: Scalar>(params: &RbmParams<T>, v: ArrayView1<T>) -> Result<RbmGrad<f64>> {
    let (d, k) = (params.visible(), params.hidden());
    cap("D + K", d + k, MAX_RBM_UNITS)?;
    check_len("visible state", d, v.len())?;
    let p = params.cast::<f64>();
    let v = v.mapv(|x| x.as_f64());
    let log_z = log_partition_rbm(&p)?;
    let hs = all_states(k);

    let cond_logw: Vec<f64> = hs
        .iter()
        .map(|h| energy(v.view(), h.view(), &p).map(|e| -e))
        .collect::<Result<_>>()?;
    let cond_norm = log_sum_exp(&cond_logw);
    let mut grad = RbmGrad::<f64>::zeros(d, k);
    for (h, lw) in hs.iter().zip(&cond_logw) {
        grad.scaled_add((lw - cond_norm).exp(), &ParamSet::coefficients(v.view(), h.view()));
    }
    for vb in 0..1usize << d {
        let vm = bits_state(vb, d);
        for h in &hs {
            let weight = (-energy(vm.view(), h.view(), &p)? - log_z).exp();
            grad.scaled_add(-weight, &ParamSet::coefficients(vm.view(), h.view()));
        }
    }
    Ok(grad)
}

/// Enumeration context for one ensemble in `f64`.
struct FlatJoint {
    ens: EnsembleParams<f64>,
    vs: Vec<Array1<f64>>,
    hs: Vec<Array1<f64>>,
}

impl FlatJoint {
    fn new<T: Scalar>(ens: &EnsembleParams<T>) -> Result<Self> {
        let (d, k) = (ens.visible(), ens.hidden());
        cap("D + K", d + k, MAX_ENSEMBLE_UNITS)?;
        Ok(Self {
            ens: ens.cast(),
            vs: all_states(d),
            hs: all_states(k),
        })
    }

    /// `log Π_k M_k(a_k(v, h))`: the joint with `θ` integrated out, unnormalized.
    fn log_weight(&self, v: &Array1<f64>, h: &Array1<f64>) -> f64 {
        let a = ParamSet::coefficients(v.view(), h.view());
        let fam = self.ens.family();
        self.ens
            .loc
            .iter()
            .zip(self.ens.spread.iter())
            .zip(a.iter())
            .map(|((&loc, &spread), &a)| log_theta_marginal_factor(Component::of(fam, loc, spread), a))
            .sum()
    }

    fn log_zeta(&self) -> f64 {
        let terms: Vec<f64> = self
            .vs
            .iter()
            .flat_map(|v| self.hs.iter().map(move |h| (v, h)))
            .map(|(v, h)| self.log_weight(v, h))
            .collect();
        log_sum_exp(&terms)
    }

    /// `-F(v; α) = log Σ_h Π_k M_k`.
    fn neg_free_energy(&self, v: &Array1<f64>) -> f64 {
        let terms: Vec<f64> = self.hs.iter().map(|h| self.log_weight(v, h)).collect();
        log_sum_exp(&terms)
    }
}

fn to_f64_state<T: Scalar>(len: usize, v: ArrayView1<T>) -> Result<Array1<f64>> {
    check_len("visible state", len, v.len())?;
    if !crate::rbm::is_hard(v) {
        return Err(Error::SoftState { what: "visible state" });
    }
    Ok(v.mapv(|x| x.as_f64()))
}

/// `ζ(α) = Σ_{v,h} Π_k M_k(a_k(v, h))`.
pub fn exact_zeta<T: Scalar>(ens: &EnsembleParams<T>) -> Result<f64> {
    Ok(exact_log_zeta(ens)?.exp())
}

pub fn exact_log_zeta<T: Scalar>(ens: &EnsembleParams<T>) -> Result<f64> {
    Ok(FlatJoint::new(ens)?.log_zeta())
}

/// Free energy `F(v; α)` of the flat joint.
pub fn exact_free_energy<T: Scalar>(ens: &EnsembleParams<T>, v: ArrayView1<T>) -> Result<f64> {
    let fj = FlatJoint::new(ens)?;
    let v = to_f64_state(ens.visible(), v)?;
    Ok(-fj.neg_free_energy(&v))
}

/// `log P(v; α) = -F(v; α) - log ζ(α)`.
pub fn exact_loglik_flat<T: Scalar>(ens: &EnsembleParams<T>, v: ArrayView1<T>) -> Result<f64> {
    let fj = FlatJoint::new(ens)?;
    let v = to_f64_state(ens.visible(), v)?;
    Ok(fj.neg_free_energy(&v) - fj.log_zeta())
}

/// Exact ascent gradient of [`exact_loglik_flat`]:
/// `E_{P(v,h;α)}[G(v, h)] - E_{P(h|v;α)}[G(v, h)]` with `G = E[∂φ/∂α | v, h]`.
pub fn exact_expected_grad<T: Scalar>(ens: &EnsembleParams<T>, v: ArrayView1<T>) -> Result<EnsembleGrad<f64>> {
    let fj = FlatJoint::new(ens)?;
    let v = to_f64_state(ens.visible(), v)?;
    let log_zeta = fj.log_zeta();
    let (d, k) = (ens.visible(), ens.hidden());
    let mut grad = EnsembleGrad::<f64>::zeros(d, k);
    for vm in &fj.vs {
        for h in &fj.hs {
            let w = (fj.log_weight(vm, h) - log_zeta).exp();
            grad.scaled_add(w, &expected_phi_grad(&fj.ens, vm.view(), h.view())?);
        }
    }
    let neg_f = fj.neg_free_energy(&v);
    for h in &fj.hs {
        let w = (fj.log_weight(&v, h) - neg_f).exp();
        grad.scaled_add(-w, &expected_phi_grad(&fj.ens, v.view(), h.view())?);
    }
    Ok(grad)
}

/// Central differences of [`exact_loglik_flat`] over every scalar of `α`.
///
/// Perturbed ensembles bypass validation and clamping.
pub fn finite_diff_grad<T: Scalar>(
    ens: &EnsembleParams<T>,
    v: ArrayView1<T>,
    delta: f64,
) -> Result<EnsembleGrad<f64>> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    let base: EnsembleParams<f64> = ens.cast();
    let v = to_f64_state(ens.visible(), v)?;
    let (d, k) = (ens.visible(), ens.hidden());
    let eval = |loc: &[f64], spread: &[f64]| -> Result<f64> {
        let e = EnsembleParams::from_parts_unchecked(
            base.family(),
            ParamSet::from_flat_f64(d, k, loc)?,
            ParamSet::from_flat_f64(d, k, spread)?,
        );
        exact_loglik_flat(&e, v.view())
    };
    let loc = base.loc.to_flat_f64();
    let spread = base.spread.to_flat_f64();
    let mut g_loc = vec![0.0; loc.len()];
    let mut g_spread = vec![0.0; spread.len()];
    for idx in 0..loc.len() {
        let (mut plus, mut minus) = (loc.clone(), loc.clone());
        plus[idx] += delta;
        minus[idx] -= delta;
        g_loc[idx] = (eval(&plus, &spread)? - eval(&minus, &spread)?) / (2.0 * delta);
        let (mut plus, mut minus) = (spread.clone(), spread.clone());
        plus[idx] += delta;
        minus[idx] -= delta;
        g_spread[idx] = (eval(&loc, &plus)? - eval(&loc, &minus)?) / (2.0 * delta);
    }
    Ok(EnsembleGrad {
        loc: ParamSet::from_flat_f64(d, k, &g_loc)?,
        spread: ParamSet::from_flat_f64(d, k, &g_spread)?,
    })
}

/// Sum of the flat-joint probabilities over all `(v, h)`; equals 1.
pub fn flat_joint_total<T: Scalar>(ens: &EnsembleParams<T>) -> Result<f64> {
    let fj = FlatJoint::new(ens)?;
    let log_zeta = fj.log_zeta();
    Ok(fj
        .vs
        .iter()
        .flat_map(|v| fj.hs.iter().map(move |h| (v, h)))
        .map(|(v, h)| (fj.log_weight(v, h) - log_zeta).exp())
        .sum())
}

/// `Σ_v exp(-F(v; α)) / ζ(α)`; equals 1.
pub fn marginal_total<T: Scalar>(ens: &EnsembleParams<T>) -> Result<f64> {
    let fj = FlatJoint::new(ens)?;
    let log_zeta = fj.log_zeta();
    Ok(fj.vs.iter().map(|v| (fj.neg_free_energy(v) - log_zeta).exp()).sum())
}

/// One configuration of a Bernoulli ensemble's `θ` support: bit `k` of `mask`
/// set means component `k` took its atom.
struct SupportPoint {
    mask: usize,
    theta: RbmParams<f64>,
    prior: f64,
}

/// Every configuration of the `θ` support with its prior probability.
/// Zero-probability configurations are skipped.
fn theta_support(ens: &EnsembleParams<f64>) -> Result<Vec<SupportPoint>> {
    if ens.family() != Family::Bernoulli {
        return Err(Error::WrongFamily {
            op: "theta support enumeration",
            expected: "bernoulli",
        });
    }
    let n = ens.loc.len();
    cap("DK + D + K", n, MAX_THETA_COMPONENTS)?;
    let atoms: Vec<f64> = ens.loc.iter().copied().collect();
    let probs: Vec<f64> = ens.spread.iter().copied().collect();
    let mut out = Vec::with_capacity(1 << n);
    for mask in 0..1usize << n {
        let mut prior = 1.0;
        let mut flat = vec![0.0; n];
        for k in 0..n {
            if (mask >> k) & 1 == 1 {
                prior *= probs[k];
                flat[k] = atoms[k];
            } else {
                prior *= 1.0 - probs[k];
            }
        }
        if prior > 0.0 {
            out.push(SupportPoint {
                mask,
                theta: RbmParams::from_flat_f64(ens.visible(), ens.hidden(), &flat)?,
                prior,
            });
        }
    }
    Ok(out)
}

/// `ζ(α)` by explicit double enumeration over `θ` support and states.
pub fn zeta_by_theta_enumeration<T: Scalar>(ens: &EnsembleParams<T>) -> Result<f64> {
    let ens: EnsembleParams<f64> = ens.cast();
    let mut total = 0.0;
    for point in theta_support(&ens)? {
        total += point.prior * exact_partition_rbm(&point.theta)?;
    }
    Ok(total)
}

/// Max abs deviation between the enumerated joint posterior `P(θ | v, h)` and
/// the product of per-component posteriors.
pub fn posterior_factorization_deviation<T: Scalar>(
    ens: &EnsembleParams<T>,
    v: ArrayView1<T>,
    h: ArrayView1<T>,
) -> Result<f64> {
    let ens: EnsembleParams<f64> = ens.cast();
    let v = v.mapv(|x| x.as_f64());
    let h = h.mapv(|x| x.as_f64());
    crate::rbm::require_hard("visible state", v.view())?;
    crate::rbm::require_hard("hidden state", h.view())?;
    let support = theta_support(&ens)?;
    let a = ParamSet::coefficients(v.view(), h.view());
    let comps: Vec<(f64, f64, f64)> = ens
        .loc
        .iter()
        .zip(ens.spread.iter())
        .zip(a.iter())
        .map(|((&val, &p), &a)| (val, p, a))
        .collect();
    let log_unnorm: Vec<f64> = support
        .iter()
        .map(|pt| Ok(pt.prior.ln() - energy(v.view(), h.view(), &pt.theta)?))
        .collect::<Result<_>>()?;
    let log_norm = log_sum_exp(&log_unnorm);
    let mut worst: f64 = 0.0;
    for (pt, lu) in support.iter().zip(&log_unnorm) {
        let joint = (lu - log_norm).exp();
        let product: f64 = comps
            .iter()
            .enumerate()
            .map(|(idx, &(value, prob, a))| {
                let q = crate::ensemble::posterior_bernoulli(BernoulliComponent { value, prob }, a);
                if (pt.mask >> idx) & 1 == 1 {
                    q
                } else {
                    1.0 - q
                }
            })
            .product();
        worst = worst.max((joint - product).abs());
    }
    Ok(worst)
}

/// The terms of `log P(V; α) = E_{P(θ|V)}[log P(V | θ)] - KL(P(θ|V) ‖ P(θ; α))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixtureDecomposition {
    pub loglik: f64,
    pub expected_conditional_loglik: f64,
    pub kl_divergence: f64,
}

impl MixtureDecomposition {
    /// `|loglik - (expected_conditional_loglik - kl_divergence)|`.
    pub fn identity_gap(&self) -> f64 {
        (self.loglik - (self.expected_conditional_loglik - self.kl_divergence)).abs()
    }
}

/// Exact mixture-convention decomposition for a Bernoulli ensemble and a
/// dataset of hard visible states (rows).
pub fn mixture_decomposition<T: Scalar>(
    ens: &EnsembleParams<T>,
    dataset: ArrayView2<T>,
) -> Result<MixtureDecomposition> {
    if ens.family() != Family::Bernoulli {
        return Err(Error::WrongFamily {
            op: "mixture_decomposition",
            expected: "bernoulli",
        });
    }
    if dataset.nrows() == 0 {
        return Err(Error::EmptyBatch);
    }
    check_len("visible state", ens.visible(), dataset.ncols())?;
    if !crate::rbm::is_hard_batch(dataset) {
        return Err(Error::SoftState { what: "dataset" });
    }
    let ens64: EnsembleParams<f64> = ens.cast();
    let data = dataset.mapv(|x| x.as_f64());
    let support = theta_support(&ens64)?;
    // log P(V | θ) and log prior per support point.
    let mut cond = Vec::with_capacity(support.len());
    let mut log_prior = Vec::with_capacity(support.len());
    for pt in &support {
        let mut ll = 0.0;
        for row in data.outer_iter() {
            ll += exact_rbm_loglik(&pt.theta, row)?;
        }
        cond.push(ll);
        log_prior.push(pt.prior.ln());
    }
    let joint: Vec<f64> = cond.iter().zip(&log_prior).map(|(c, p)| c + p).collect();
    let loglik = log_sum_exp(&joint);
    let mut expected = 0.0;
    let mut kl = 0.0;
    for ((c, lp), lj) in cond.iter().zip(&log_prior).zip(&joint) {
        let log_post = lj - loglik;
        let post = log_post.exp();
        if post > 0.0 {
            expected += post * c;
            kl += post * (log_post - lp);
        }
    }
    Ok(MixtureDecomposition {
        loglik,
        expected_conditional_loglik: expected,
        kl_divergence: kl,
    })
}

#[cfg(test)]
mod tests;
