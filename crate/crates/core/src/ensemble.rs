//! Distributions over RBM parameters.
//!
//! Every entry of `W`, `b` and `c` is an independent random variable drawn
//! from one of two families:
//!
//! * **Bernoulli**: the entry is `0` with probability `1 - p`, or the atom
//!   value `θ̄` with probability `p`. Learnable: `{θ̄, p}`.
//! * **Gaussian**: the entry is `N(μ, σ²)`. Learnable: `{μ, σ}`.
//!
//! [`EnsembleParams`] stores these as two [`ParamSet`]s: `loc` (atom value or
//! mean) and `spread` (probability `p` or standard deviation `σ`).
//!
//! Given hard states `(v, h)` the energy is linear in each component with
//! coefficient `a` (`v_i h_j` for `W_ij`, `v_i` for `b_i`, `h_j` for `c_j`), so
//! the posterior tilts every component independently by `e^{a θ}`:
//!
//! * Bernoulli: `P(θ = θ̄ | a) = p e^{aθ̄} / (1 - p + p e^{aθ̄})`.
//! * Gaussian: `N(μ + aσ², σ²)`.

use ndarray::ArrayView1;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{ParamSet, RbmParams};
use crate::rbm::{bernoulli, check_len, require_hard};
use crate::scalar::Scalar;

/// Default probability clamp `ε`.
pub const DEFAULT_EPSILON: f64 = 0.01;
/// Default standard-deviation floor `σ_min`.
pub const DEFAULT_SIGMA_MIN: f64 = 0.01;
/// Initial `σ` of a Gaussian ensemble.
pub const INIT_GAUSSIAN_SIGMA: f64 = 0.1;
/// Initial `p` of a Bernoulli ensemble.
pub const INIT_BERNOULLI_PROB: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Bernoulli,
    Gaussian,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Bernoulli => "bernoulli",
            Family::Gaussian => "gaussian",
        }
    }
}

/// Two-point component: `0` w.p. `1 - prob`, `value` w.p. `prob`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BernoulliComponent<T> {
    pub value: T,
    pub prob: T,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianComponent<T> {
    pub mean: T,
    pub std: T,
}

/// Bounds enforced after every update: `p ∈ [ε, 1-ε]`, `σ ≥ σ_min`.
///
/// Zero for both disables clamping, which admits the degenerate ensembles
/// `p = 1` and `σ = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClampConfig {
    pub epsilon: f64,
    pub sigma_min: f64,
}

impl Default for ClampConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            sigma_min: DEFAULT_SIGMA_MIN,
        }
    }
}

impl ClampConfig {
    pub fn disabled() -> Self {
        Self {
            epsilon: 0.0,
            sigma_min: 0.0,
        }
    }
}

/// The parameter distribution `P(θ; α)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleParams<T> {
    family: Family,
    /// Atom values `θ̄` (Bernoulli) or means `μ` (Gaussian).
    pub loc: ParamSet<T>,
    /// Probabilities `p` (Bernoulli) or standard deviations `σ` (Gaussian).
    pub spread: ParamSet<T>,
}

/// Gradient record over `α`, laid out like [`EnsembleParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleGrad<T> {
    pub loc: ParamSet<T>,
    pub spread: ParamSet<T>,
}

impl<T: Scalar> EnsembleGrad<T> {
    pub fn zeros(visible: usize, hidden: usize) -> Self {
        Self {
            loc: ParamSet::zeros(visible, hidden),
            spread: ParamSet::zeros(visible, hidden),
        }
    }

    pub fn scaled_add(&mut self, alpha: T, other: &Self) {
        self.loc.scaled_add(alpha, &other.loc);
        self.spread.scaled_add(alpha, &other.spread);
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> + '_ {
        self.loc.iter().chain(self.spread.iter())
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.loc.max_abs_diff(&other.loc).max(self.spread.max_abs_diff(&other.spread))
    }

    pub fn cast<U: Scalar>(&self) -> EnsembleGrad<U> {
        EnsembleGrad {
            loc: self.loc.cast(),
            spread: self.spread.cast(),
        }
    }

    pub fn to_flat_f64(&self) -> Vec<f64> {
        self.iter().map(|x| x.as_f64()).collect()
    }
}

impl<T: Scalar> EnsembleParams<T> {
    /// Validates shapes and entrywise ranges: `p ∈ [0, 1]`, `σ ≥ 0`.
    pub fn new(family: Family, loc: ParamSet<T>, spread: ParamSet<T>) -> Result<Self> {
        loc.check_same_shape(&spread)?;
        let loc = ParamSet::new(loc.w, loc.b, loc.c)?;
        let spread = ParamSet::new(spread.w, spread.b, spread.c)?;
        let bad = match family {
            Family::Bernoulli => spread.iter().any(|&p| p < T::zero() || p > T::one()),
            Family::Gaussian => spread.iter().any(|&s| s < T::zero()),
        };
        if bad {
            return Err(Error::InvalidParameter(format!(
                "{} spread out of range",
                family.name()
            )));
        }
        Ok(Self { family, loc, spread })
    }

    /// Assembles an ensemble without range checks; used for perturbed
    /// ensembles in numerical differentiation.
    pub(crate) fn from_parts_unchecked(family: Family, loc: ParamSet<T>, spread: ParamSet<T>) -> Self {
        Self { family, loc, spread }
    }

    /// Bernoulli ensemble with `p = 0.5` everywhere, `W̄ ~ N(0, 0.01²)`, zero bias atoms.
    pub fn init_bernoulli<R: Rng + ?Sized>(visible: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            family: Family::Bernoulli,
            loc: crate::rbm::init_params(visible, hidden, rng),
            spread: ParamSet::filled(visible, hidden, T::of(INIT_BERNOULLI_PROB)),
        }
    }

    /// Gaussian ensemble with `μ_W ~ N(0, 0.01²)`, zero bias means, `σ = 0.1`.
    pub fn init_gaussian<R: Rng + ?Sized>(visible: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            family: Family::Gaussian,
            loc: crate::rbm::init_params(visible, hidden, rng),
            spread: ParamSet::filled(visible, hidden, T::of(INIT_GAUSSIAN_SIGMA)),
        }
    }

    pub fn init<R: Rng + ?Sized>(family: Family, visible: usize, hidden: usize, rng: &mut R) -> Self {
        match family {
            Family::Bernoulli => Self::init_bernoulli(visible, hidden, rng),
            Family::Gaussian => Self::init_gaussian(visible, hidden, rng),
        }
    }

    /// The degenerate ensemble concentrated on `params` (`p = 1` or `σ = 0`).
    pub fn degenerate(family: Family, params: &RbmParams<T>) -> Self {
        let spread = match family {
            Family::Bernoulli => ParamSet::filled(params.visible(), params.hidden(), T::one()),
            Family::Gaussian => ParamSet::zeros(params.visible(), params.hidden()),
        };
        Self {
            family,
            loc: params.clone(),
            spread,
        }
    }

    #[inline]
    pub fn family(&self) -> Family {
        self.family
    }

    #[inline]
    pub fn visible(&self) -> usize {
        self.loc.visible()
    }

    #[inline]
    pub fn hidden(&self) -> usize {
        self.loc.hidden()
    }

    /// Number of tunable scalars, `2(DK + D + K)`.
    pub fn num_tunable(&self) -> usize {
        self.loc.len() + self.spread.len()
    }

    pub fn cast<U: Scalar>(&self) -> EnsembleParams<U> {
        EnsembleParams {
            family: self.family,
            loc: self.loc.cast(),
            spread: self.spread.cast(),
        }
    }

    /// Projects `spread` onto the clamp bounds.
    pub fn clamp(&mut self, clamp: &ClampConfig) {
        match self.family {
            Family::Bernoulli => {
                let lo = T::of(clamp.epsilon);
                let hi = T::of(1.0 - clamp.epsilon);
                self.spread.iter_mut().for_each(|p| *p = p.max(lo).min(hi));
            }
            Family::Gaussian => {
                let floor = T::of(clamp.sigma_min);
                self.spread.iter_mut().for_each(|s| *s = s.max(floor));
            }
        }
    }

    pub fn satisfies_clamp(&self, clamp: &ClampConfig) -> bool {
        match self.family {
            Family::Bernoulli => {
                let lo = T::of(clamp.epsilon);
                let hi = T::of(1.0 - clamp.epsilon);
                self.spread.iter().all(|&p| p >= lo && p <= hi)
            }
            Family::Gaussian => {
                let floor = T::of(clamp.sigma_min);
                self.spread.iter().all(|&s| s >= floor)
            }
        }
    }

    pub fn check_grad_shape(&self, grad: &EnsembleGrad<T>) -> Result<()> {
        self.loc.check_same_shape(&grad.loc)?;
        self.loc.check_same_shape(&grad.spread)
    }

    /// Per-entry component pairs in flat order, for inspection and tests.
    pub fn bernoulli_component(&self, flat_index: usize) -> Option<BernoulliComponent<T>> {
        if self.family != Family::Bernoulli {
            return None;
        }
        Some(BernoulliComponent {
            value: *self.loc.iter().nth(flat_index)?,
            prob: *self.spread.iter().nth(flat_index)?,
        })
    }
}

/// Posterior probability of the nonzero atom given energy coefficient `a`.
#[inline]
pub fn posterior_bernoulli<T: Scalar>(comp: BernoulliComponent<T>, a: T) -> T {
    let p = comp.prob;
    // p e^{x} / (1 - p + p e^{x}) written to avoid overflow for large |x|.
    let x = a * comp.value;
    if p <= T::zero() {
        return T::zero();
    }
    if p >= T::one() {
        return T::one();
    }
    let log_odds = p.ln() - (T::one() - p).ln() + x;
    crate::scalar::logistic(log_odds)
}

/// Gaussian posterior: mean shifted by `aσ²`, width unchanged.
#[inline]
pub fn posterior_gaussian<T: Scalar>(comp: GaussianComponent<T>, a: T) -> GaussianComponent<T> {
    GaussianComponent {
        mean: comp.mean + a * comp.std * comp.std,
        std: comp.std,
    }
}

/// `(E[∂φ/∂θ̄ | a], E[∂φ/∂p | a])` for one Bernoulli component, `φ = -log P(θ; α)`.
///
/// `E[∂φ/∂θ̄] = -a · q` and `E[∂φ/∂p] = (1 - e^{aθ̄}) / (1 - p + p e^{aθ̄})`,
/// where `q` is the posterior atom probability.
#[inline]
pub fn bernoulli_expected_grad<T: Scalar>(comp: BernoulliComponent<T>, a: T) -> (T, T) {
    if a == T::zero() {
        return (T::zero(), T::zero());
    }
    let q = posterior_bernoulli(comp, a);
    let e = (a * comp.value).exp();
    let norm = T::one() - comp.prob + comp.prob * e;
    (-a * q, (T::one() - e) / norm)
}

/// `(E[∂φ/∂μ | a], E[∂φ/∂σ | a]) = (-a, -a²σ)` for one Gaussian component.
#[inline]
pub fn gaussian_expected_grad<T: Scalar>(comp: GaussianComponent<T>, a: T) -> (T, T) {
    (-a, -a * a * comp.std)
}

fn draw_component<T: Scalar, R: Rng + ?Sized>(family: Family, loc: T, spread: T, a: T, rng: &mut R) -> T {
    match family {
        Family::Bernoulli => {
            let q = if a == T::zero() {
                spread
            } else {
                posterior_bernoulli(BernoulliComponent { value: loc, prob: spread }, a)
            };
            loc * bernoulli(q, rng)
        }
        Family::Gaussian => {
            let post = posterior_gaussian(GaussianComponent { mean: loc, std: spread }, a);
            let z: f64 = StandardNormal.sample(rng);
            post.mean + post.std * T::of(z)
        }
    }
}

/// Independent draw of every component from its prior marginal.
pub fn sample_theta_prior<T: Scalar, R: Rng + ?Sized>(ens: &EnsembleParams<T>, rng: &mut R) -> RbmParams<T> {
    let mut out = ens.loc.clone();
    for (dst, (&loc, &spread)) in out.iter_mut().zip(ens.loc.iter().zip(ens.spread.iter())) {
        *dst = draw_component(ens.family, loc, spread, T::zero(), rng);
    }
    out
}

/// Draws `θ ~ P(θ | v, h; α)` for hard states `v`, `h`.
pub fn sample_theta_posterior<T: Scalar, R: Rng + ?Sized>(
    ens: &EnsembleParams<T>,
    v: ArrayView1<T>,
    h: ArrayView1<T>,
    rng: &mut R,
) -> Result<RbmParams<T>> {
    require_hard("visible state", v)?;
    require_hard("hidden state", h)?;
    sample_theta_tilted(ens, v, h, rng)
}

/// Posterior draw without the hard-state check; `v` may hold Bernoulli means
/// in representation-generation paths, in which case `a = v_i h_j` is real.
pub fn sample_theta_tilted<T: Scalar, R: Rng + ?Sized>(
    ens: &EnsembleParams<T>,
    v: ArrayView1<T>,
    h: ArrayView1<T>,
    rng: &mut R,
) -> Result<RbmParams<T>> {
    check_len("visible state", ens.visible(), v.len())?;
    check_len("hidden state", ens.hidden(), h.len())?;
    let family = ens.family;
    let mut out = ens.loc.clone();
    for i in 0..ens.visible() {
        for j in 0..ens.hidden() {
            out.w[[i, j]] = draw_component(family, ens.loc.w[[i, j]], ens.spread.w[[i, j]], v[i] * h[j], rng);
        }
    }
    for i in 0..ens.visible() {
        out.b[i] = draw_component(family, ens.loc.b[i], ens.spread.b[i], v[i], rng);
    }
    for j in 0..ens.hidden() {
        out.c[j] = draw_component(family, ens.loc.c[j], ens.spread.c[j], h[j], rng);
    }
    Ok(out)
}

fn expected_grad_with<T: Scalar>(
    ens: &EnsembleParams<T>,
    v: ArrayView1<T>,
    h: ArrayView1<T>,
    f: impl Fn(T, T, T) -> (T, T),
) -> Result<EnsembleGrad<T>> {
    require_hard("visible state", v)?;
    require_hard("hidden state", h)?;
    check_len("visible state", ens.visible(), v.len())?;
    check_len("hidden state", ens.hidden(), h.len())?;
    let a = ParamSet::coefficients(v, h);
    let mut grad = EnsembleGrad::zeros(ens.visible(), ens.hidden());
    let pairs = grad.loc.iter_mut().zip(grad.spread.iter_mut());
    let inputs = ens.loc.iter().zip(ens.spread.iter()).zip(a.iter());
    for ((gl, gs), ((&loc, &spread), &a)) in pairs.zip(inputs) {
        (*gl, *gs) = f(loc, spread, a);
    }
    Ok(grad)
}

/// `E[∂φ/∂α | v, h]` for a Bernoulli ensemble.
pub fn expected_phi_grad_bernoulli<T: Scalar>(
    ens: &EnsembleParams<T>,
    v: ArrayView1<T>,
    h: ArrayView1<T>,
) -> Result<EnsembleGrad<T>> {
    if ens.family != Family::Bernoulli {
        return Err(Error::WrongFamily {
            op: "expected_phi_grad_bernoulli",
            expected: "bernoulli",
        });
    }
    expected_grad_with(ens, v, h, |value, prob, a| {
        bernoulli_expected_grad(BernoulliComponent { value, prob }, a)
    })
}

/// `E[∂φ/∂α | v, h]` for a Gaussian ensemble.
pub fn expected_phi_grad_gaussian<T: Scalar>(
    ens: &EnsembleParams<T>,
    v: ArrayView1<T>,
    h: ArrayView1<T>,
) -> Result<EnsembleGrad<T>> {
    if ens.family != Family::Gaussian {
        return Err(Error::WrongFamily {
            op: "expected_phi_grad_gaussian",
            expected: "gaussian",
        });
    }
    expected_grad_with(ens, v, h, |mean, std, a| {
        gaussian_expected_grad(GaussianComponent { mean, std }, a)
    })
}

pub fn expected_phi_grad<T: Scalar>(
    ens: &EnsembleParams<T>,
    v: ArrayView1<T>,
    h: ArrayView1<T>,
) -> Result<EnsembleGrad<T>> {
    match ens.family {
        Family::Bernoulli => expected_phi_grad_bernoulli(ens, v, h),
        Family::Gaussian => expected_phi_grad_gaussian(ens, v, h),
    }
}

/// `E[∂φ/∂α | a = 1]` for every component.
///
/// Both closed forms vanish at `a = 0` and the Gaussian spread term depends on
/// `a²`, so for hard states `E[∂φ/∂α | v, h] = a ⊙ unit_coefficient_grad`.
pub fn unit_coefficient_grad<T: Scalar>(ens: &EnsembleParams<T>) -> EnsembleGrad<T> {
    let mut grad = EnsembleGrad::zeros(ens.visible(), ens.hidden());
    let pairs = grad.loc.iter_mut().zip(grad.spread.iter_mut());
    for ((gl, gs), (&loc, &spread)) in pairs.zip(ens.loc.iter().zip(ens.spread.iter())) {
        (*gl, *gs) = match ens.family {
            Family::Bernoulli => bernoulli_expected_grad(BernoulliComponent { value: loc, prob: spread }, T::one()),
            Family::Gaussian => gaussian_expected_grad(GaussianComponent { mean: loc, std: spread }, T::one()),
        };
    }
    grad
}

/// The ensemble-average model: `p θ̄` (Bernoulli) or `μ` (Gaussian).
pub fn mean_model<T: Scalar>(ens: &EnsembleParams<T>) -> RbmParams<T> {
    match ens.family {
        Family::Bernoulli => ens.loc.zip_map(&ens.spread, |value, prob| value * prob),
        Family::Gaussian => ens.loc.clone(),
    }
}

/// `u32` draws below this threshold select the atom; `p = 1` maps to `2^32`.
#[inline]
fn atom_threshold(p: f64) -> u64 {
    (p.clamp(0.0, 1.0) * 4_294_967_296.0).round() as u64
}

/// Posterior sampler for hard states with the `a = 0` and `a = 1` cases
/// tabulated once per ensemble.
///
/// Parameters are stored flat in [`ParamSet::iter`] order.
pub(crate) struct HardThetaSampler<T> {
    family: Family,
    visible: usize,
    hidden: usize,
    loc: Vec<T>,
    /// Bernoulli: atom thresholds under the prior.
    prior: Vec<u64>,
    /// Bernoulli: atom thresholds at `a = 1`.
    post: Vec<u64>,
    /// Gaussian: means at `a = 1`.
    tilted: Vec<T>,
    spread: Vec<T>,
}

impl<T: Scalar> HardThetaSampler<T> {
    pub(crate) fn new(ens: &EnsembleParams<T>) -> Self {
        let loc: Vec<T> = ens.loc.iter().copied().collect();
        let spread: Vec<T> = ens.spread.iter().copied().collect();
        let (mut prior, mut post, mut tilted) = (Vec::new(), Vec::new(), Vec::new());
        match ens.family {
            Family::Bernoulli => {
                prior = spread.iter().map(|p| atom_threshold(p.as_f64())).collect();
                post = loc
                    .iter()
                    .zip(&spread)
                    .map(|(&value, &prob)| {
                        atom_threshold(posterior_bernoulli(BernoulliComponent { value, prob }, T::one()).as_f64())
                    })
                    .collect();
            }
            Family::Gaussian => {
                tilted = loc.iter().zip(&spread).map(|(&m, &s)| m + s * s).collect();
            }
        }
        Self {
            family: ens.family,
            visible: ens.visible(),
            hidden: ens.hidden(),
            loc,
            prior,
            post,
            tilted,
            spread,
        }
    }

    /// A buffer in the layout [`Self::sample_into`] expects.
    pub(crate) fn buffer(&self) -> RbmParams<T> {
        RbmParams::zeros(self.visible, self.hidden)
    }

    /// Fills `out` for components `range` whose coefficient is 1 where `on` is set.
    #[inline]
    fn fill<R: RngCore + ?Sized>(&self, range: std::ops::Range<usize>, on: &[bool], rng: &mut R, out: &mut [T]) {
        let loc = &self.loc[range.clone()];
        match self.family {
            Family::Bernoulli => {
                let prior = &self.prior[range.clone()];
                let post = &self.post[range];
                for ((((dst, &atom), &pr), &po), &a) in out.iter_mut().zip(loc).zip(prior).zip(post).zip(on) {
                    let thr = if a { po } else { pr };
                    *dst = if u64::from(rng.next_u32()) < thr { atom } else { T::zero() };
                }
            }
            Family::Gaussian => {
                let tilted = &self.tilted[range.clone()];
                let spread = &self.spread[range];
                for ((((dst, &m), &mt), &sd), &a) in out.iter_mut().zip(loc).zip(tilted).zip(spread).zip(on) {
                    let z: f64 = StandardNormal.sample(rng);
                    *dst = if a { mt } else { m } + sd * T::of(z);
                }
            }
        }
    }

    /// Draws `θ ~ P(θ | v, h)` into `out` (from [`Self::buffer`]).
    /// `v` and `h` must be hard; this is not checked.
    pub(crate) fn sample_into<R: RngCore + ?Sized>(
        &self,
        v: ArrayView1<T>,
        h: ArrayView1<T>,
        rng: &mut R,
        out: &mut RbmParams<T>,
    ) {
        let (d, k) = (self.visible, self.hidden);
        let v_on: Vec<bool> = v.iter().map(|&x| x == T::one()).collect();
        let h_on: Vec<bool> = h.iter().map(|&x| x == T::one()).collect();
        let off = vec![false; k];
        let w = out.w.as_slice_mut().expect("sampler buffers are contiguous");
        for (i, row) in w.chunks_exact_mut(k).enumerate() {
            let on = if v_on[i] { &h_on } else { &off };
            self.fill(i * k..(i + 1) * k, on, rng, row);
        }
        let b = out.b.as_slice_mut().expect("sampler buffers are contiguous");
        self.fill(d * k..d * k + d, &v_on, rng, b);
        let c = out.c.as_slice_mut().expect("sampler buffers are contiguous");
        self.fill(d * k + d..d * k + d + k, &h_on, rng, c);
    }
}

/// Elementwise product of an `a`-coefficient set with a unit-coefficient gradient.
pub(crate) fn scale_by_coefficients<T: Scalar>(unit: &EnsembleGrad<T>, a: &ParamSet<T>) -> EnsembleGrad<T> {
    EnsembleGrad {
        loc: unit.loc.zip_map(a, |g, a| g * a),
        spread: unit.spread.zip_map(a, |g, a| g * a),
    }
}
