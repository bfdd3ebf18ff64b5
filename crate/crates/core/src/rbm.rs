//! Plain restricted Boltzmann machine with binary units.
//!
//! Energy: `E(v, h) = -(vᵀWh + bᵀv + cᵀh)`. Visible inputs may be reals in
//! `[0, 1]`, read as Bernoulli means; they enter pre-activations directly and
//! are sampled to hard states wherever a chain needs one.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::params::{RbmGrad, RbmParams};
use crate::scalar::{logistic, softplus, Scalar};

/// Standard deviation of the Gaussian used for initial weights.
pub const INIT_WEIGHT_STD: f64 = 0.01;

/// `W ~ N(0, 0.01²)` i.i.d., zero biases.
pub fn init_params<T: Scalar, R: Rng + ?Sized>(visible: usize, hidden: usize, rng: &mut R) -> RbmParams<T> {
    let normal = Normal::new(0.0, INIT_WEIGHT_STD).expect("valid normal");
    let mut params = RbmParams::zeros(visible, hidden);
    params.w.mapv_inplace(|_| T::of(normal.sample(rng)));
    params
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { what, expected, got });
    }
    Ok(())
}

/// True when every entry is exactly 0 or 1.
pub fn is_hard<T: Scalar>(state: ArrayView1<T>) -> bool {
    state.iter().all(|&x| x == T::zero() || x == T::one())
}

pub fn is_hard_batch<T: Scalar>(states: ArrayView2<T>) -> bool {
    states.iter().all(|&x| x == T::zero() || x == T::one())
}

pub(crate) fn require_hard<T: Scalar>(what: &'static str, state: ArrayView1<T>) -> Result<()> {
    if is_hard(state) {
        Ok(())
    } else {
        Err(Error::SoftState { what })
    }
}

pub fn energy<T: Scalar>(v: ArrayView1<T>, h: ArrayView1<T>, params: &RbmParams<T>) -> Result<T> {
    check_len("visible state", params.visible(), v.len())?;
    check_len("hidden state", params.hidden(), h.len())?;
    let interaction = v.dot(&params.w).dot(&h);
    Ok(-(interaction + params.b.dot(&v) + params.c.dot(&h)))
}

/// `P(h_j = 1 | v) = logistic(c_j + Σ_i v_i W_ij)`.
pub fn hidden_conditional<T: Scalar>(v: ArrayView1<T>, params: &RbmParams<T>) -> Result<Array1<T>> {
    check_len("visible state", params.visible(), v.len())?;
    Ok((v.dot(&params.w) + &params.c).mapv(logistic))
}

/// `P(v_i = 1 | h) = logistic(b_i + Σ_j W_ij h_j)`.
pub fn visible_conditional<T: Scalar>(h: ArrayView1<T>, params: &RbmParams<T>) -> Result<Array1<T>> {
    check_len("hidden state", params.hidden(), h.len())?;
    Ok((params.w.dot(&h) + &params.b).mapv(logistic))
}

/// Row-wise [`hidden_conditional`] for a batch of visible states (`n x D`).
pub fn hidden_conditional_batch<T: Scalar>(v: ArrayView2<T>, params: &RbmParams<T>) -> Result<Array2<T>> {
    check_len("visible state", params.visible(), v.ncols())?;
    Ok((v.dot(&params.w) + &params.c).mapv(logistic))
}

/// Row-wise [`visible_conditional`] for a batch of hidden states (`n x K`).
pub fn visible_conditional_batch<T: Scalar>(h: ArrayView2<T>, params: &RbmParams<T>) -> Result<Array2<T>> {
    check_len("hidden state", params.hidden(), h.ncols())?;
    Ok((h.dot(&params.w.t()) + &params.b).mapv(logistic))
}

/// Independent Bernoulli draw per unit.
pub fn sample_state<T: Scalar, R: Rng + ?Sized>(probs: ArrayView1<T>, rng: &mut R) -> Array1<T> {
    probs.mapv(|p| bernoulli(p, rng))
}

pub fn sample_states<T: Scalar, R: Rng + ?Sized>(probs: ArrayView2<T>, rng: &mut R) -> Array2<T> {
    probs.mapv(|p| bernoulli(p, rng))
}

#[inline]
pub(crate) fn bernoulli<T: Scalar, R: Rng + ?Sized>(p: T, rng: &mut R) -> T {
    if rng.random::<f64>() < p.as_f64() {
        T::one()
    } else {
        T::zero()
    }
}

/// One Gibbs sweep from hidden state `h`: `v ~ P(v | h)`, then `h ~ P(h | v)`.
pub fn gibbs_sweep<T: Scalar, R: Rng + ?Sized>(
    params: &RbmParams<T>,
    h: ArrayView1<T>,
    rng: &mut R,
) -> Result<(Array1<T>, Array1<T>)> {
    let v = sample_state(visible_conditional(h, params)?.view(), rng);
    let h = sample_state(hidden_conditional(v.view(), params)?.view(), rng);
    Ok((v, h))
}

/// Standard CD-k gradient (log-likelihood ascent direction) averaged over a batch.
///
/// The data term uses `P(h | v)` at the clamped input; the reconstruction
/// term uses the visible sample after `k` sweeps and its hidden probabilities.
pub fn cd_k_rbm<T: Scalar, R: Rng + ?Sized>(
    params: &RbmParams<T>,
    batch: ArrayView2<T>,
    k: usize,
    rng: &mut R,
) -> Result<RbmGrad<T>> {
    if batch.nrows() == 0 {
        return Err(Error::EmptyBatch);
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let n = T::of(batch.nrows() as f64);
    let ph_data = hidden_conditional_batch(batch, params)?;
    let mut h = sample_states(ph_data.view(), rng);
    let mut v = Array2::zeros(batch.raw_dim());
    let mut ph = ph_data.clone();
    for step in 0..k {
        v = sample_states(visible_conditional_batch(h.view(), params)?.view(), rng);
        ph = hidden_conditional_batch(v.view(), params)?;
        if step + 1 < k {
            h = sample_states(ph.view(), rng);
        }
    }
    let w = (batch.t().dot(&ph_data) - v.t().dot(&ph)) / n;
    let b = (&batch - &v).sum_axis(Axis(0)) / n;
    let c = (&ph_data - &ph).sum_axis(Axis(0)) / n;
    Ok(RbmGrad { w, b, c })
}

/// Single-example CD with hard-sample statistics on the ensemble schedule.
///
/// Runs `k + 1` sweeps of the free chain from `(v, h0)` and `k + 1` hidden
/// draws of the clamped chain from `h0`, then returns
/// `a(v, h'_k) - a(v_k, h_k)` where `a` are the energy coefficients. This is
/// the fixed-parameter counterpart of the ensemble update and consumes `rng`
/// in the same order as the unit stream of an ensemble chain.
pub fn cd_k_rbm_hard<T: Scalar, R: Rng + ?Sized>(
    params: &RbmParams<T>,
    v: ArrayView1<T>,
    h0: ArrayView1<T>,
    k: usize,
    rng: &mut R,
) -> Result<RbmGrad<T>> {
    require_hard("visible state", v)?;
    require_hard("initial hidden state", h0)?;
    check_len("visible state", params.visible(), v.len())?;
    check_len("hidden state", params.hidden(), h0.len())?;
    let mut vk = v.to_owned();
    let mut hk = h0.to_owned();
    for _ in 0..=k {
        (vk, hk) = gibbs_sweep(params, hk.view(), rng)?;
    }
    let mut hc = h0.to_owned();
    for _ in 0..=k {
        hc = sample_state(hidden_conditional(v, params)?.view(), rng);
    }
    let data = RbmGrad::coefficients(v, hc.view());
    let recon = RbmGrad::coefficients(vk.view(), hk.view());
    Ok(data.zip_map(&recon, |a, b| a - b))
}

/// `F(v) = -bᵀv - Σ_j softplus(c_j + Σ_i v_i W_ij)`.
pub fn rbm_free_energy<T: Scalar>(v: ArrayView1<T>, params: &RbmParams<T>) -> Result<T> {
    check_len("visible state", params.visible(), v.len())?;
    let pre = v.dot(&params.w) + &params.c;
    Ok(-params.b.dot(&v) - pre.iter().map(|&x| softplus(x)).sum::<T>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn p11(w: f64, b: f64, c: f64) -> RbmParams<f64> {
        RbmParams::new(array![[w]], array![b], array![c]).unwrap()
    }

    #[test]
    fn energy_examples() {
        let zero = p11(0.0, 0.0, 0.0);
        for (v, h) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)] {
            assert_eq!(energy(array![v].view(), array![h].view(), &zero).unwrap(), 0.0);
        }
        assert_eq!(energy(array![1.0].view(), array![1.0].view(), &p11(1.0, 0.0, 0.0)).unwrap(), -1.0);
        let p = RbmParams::new(array![[0.5], [-1.0]], array![0.1, 0.2], array![0.3]).unwrap();
        let e = energy(array![1.0, 1.0].view(), array![1.0].view(), &p).unwrap();
        assert_abs_diff_eq!(e, -0.1, epsilon = 1e-15);
    }

    #[test]
    fn energy_rejects_mismatched_state() {
        let p = p11(0.0, 0.0, 0.0);
        assert!(matches!(
            energy(array![1.0, 0.0].view(), array![1.0].view(), &p),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(hidden_conditional(array![1.0, 0.0].view(), &p).is_err());
        assert!(visible_conditional(array![1.0, 0.0].view(), &p).is_err());
        assert!(rbm_free_energy(array![1.0, 0.0].view(), &p).is_err());
    }

    #[test]
    fn energy_symmetric_under_transpose() {
        let p = RbmParams::new(array![[0.5, -0.3], [-1.0, 2.0], [0.2, 0.1]], array![0.1, 0.2, -0.4], array![0.3, -0.7]).unwrap();
        let swapped = RbmParams::new(p.w.t().to_owned(), p.c.clone(), p.b.clone()).unwrap();
        let v = array![1.0, 0.0, 1.0];
        let h = array![1.0, 1.0];
        let e1 = energy(v.view(), h.view(), &p).unwrap();
        let e2 = energy(h.view(), v.view(), &swapped).unwrap();
        assert_abs_diff_eq!(e1, e2, epsilon = 1e-15);
    }

    #[test]
    fn hidden_conditional_examples() {
        let zero = RbmParams::<f64>::zeros(3, 4);
        assert!(hidden_conditional(array![1.0, 0.0, 1.0].view(), &zero).unwrap().iter().all(|&x| x == 0.5));
        let h = hidden_conditional(array![1.0].view(), &p11(1.0, 0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(h[0], 0.7310585786, epsilon = 1e-10);
        let h = hidden_conditional(array![1.0].view(), &p11(1.0, 0.0, -1.0)).unwrap();
        assert_eq!(h[0], 0.5);
    }

    #[test]
    fn visible_conditional_examples() {
        let zero = RbmParams::<f64>::zeros(3, 2);
        assert!(visible_conditional(array![1.0, 1.0].view(), &zero).unwrap().iter().all(|&x| x == 0.5));
        let v = visible_conditional(array![1.0].view(), &p11(2.0, -2.0, 0.0)).unwrap();
        assert_eq!(v[0], 0.5);
        let p = RbmParams::new(array![[1.0, 1.0]], array![0.0], array![0.0, 0.0]).unwrap();
        let v = visible_conditional(array![1.0, 1.0].view(), &p).unwrap();
        assert_abs_diff_eq!(v[0], 0.8807970780, epsilon = 1e-10);
    }

    #[test]
    fn batch_conditionals_match_rowwise() {
        let mut rng = rng_from_seed(1);
        let p: RbmParams<f64> = init_params(4, 3, &mut rng);
        let v = array![[1.0, 0.0, 1.0, 1.0], [0.0, 0.5, 0.0, 1.0]];
        let hb = hidden_conditional_batch(v.view(), &p).unwrap();
        for (i, row) in v.outer_iter().enumerate() {
            let h = hidden_conditional(row, &p).unwrap();
            assert_abs_diff_eq!(hb.row(i).to_owned(), h, epsilon = 1e-15);
            let vb = visible_conditional_batch(hb.view(), &p).unwrap();
            let vv = visible_conditional(h.view(), &p).unwrap();
            assert_abs_diff_eq!(vb.row(i).to_owned(), vv, epsilon = 1e-15);
        }
    }

    #[test]
    fn sample_state_extremes_and_mean() {
        let mut rng = rng_from_seed(9);
        assert!(sample_state(Array1::<f64>::zeros(50).view(), &mut rng).iter().all(|&x| x == 0.0));
        assert!(sample_state(Array1::<f64>::ones(50).view(), &mut rng).iter().all(|&x| x == 1.0));
        let probs = Array1::from_elem(4, 0.5f64);
        let mut sum = Array1::<f64>::zeros(4);
        let n = 10_000;
        for _ in 0..n {
            sum += &sample_state(probs.view(), &mut rng);
        }
        for m in (sum / n as f64).iter() {
            assert!((m - 0.5).abs() < 0.02, "mean {m}");
        }
    }

    #[test]
    fn sample_state_is_reproducible() {
        let probs = Array1::from_elem(32, 0.3f64);
        let a = sample_state(probs.view(), &mut rng_from_seed(5));
        let b = sample_state(probs.view(), &mut rng_from_seed(5));
        assert_eq!(a, b);
    }

    #[test]
    fn free_energy_examples() {
        let f = rbm_free_energy(array![0.0].view(), &p11(0.0, 0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(f, -(2f64.ln()), epsilon = 1e-15);
        let f = rbm_free_energy(array![1.0].view(), &p11(2f64.ln(), 0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(f, -(3f64.ln()), epsilon = 1e-15);
    }

    #[test]
    fn cd_zero_visible_annihilates_data_products() {
        let p = RbmParams::<f64>::zeros(3, 2);
        let batch = Array2::<f64>::zeros((1, 3));
        // The data contribution to W and b is v * (...), which vanishes for v = 0;
        // what remains is the negated reconstruction term.
        let g = cd_k_rbm(&p, batch.view(), 1, &mut rng_from_seed(2)).unwrap();
        let ph = hidden_conditional_batch(batch.view(), &p).unwrap();
        assert!(batch.t().dot(&ph).iter().all(|&x| x == 0.0));
        assert!(g.b.iter().all(|&x| x <= 0.0));
        assert!(g.w.iter().all(|&x| x <= 0.0));
    }

    #[test]
    fn cd_errors() {
        let p = RbmParams::<f64>::zeros(2, 2);
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(matches!(cd_k_rbm(&p, empty.view(), 1, &mut rng_from_seed(0)), Err(Error::EmptyBatch)));
        let one = Array2::<f64>::zeros((1, 2));
        assert!(cd_k_rbm(&p, one.view(), 0, &mut rng_from_seed(0)).is_err());
        assert!(cd_k_rbm_hard(&p, array![0.5, 1.0].view(), array![0.0, 1.0].view(), 1, &mut rng_from_seed(0)).is_err());
    }

    #[test]
    fn cd_duplicated_batch_has_same_expectation() {
        let mut rng = rng_from_seed(11);
        let p: RbmParams<f64> = RbmParams::new(
            array![[0.8, -0.4], [0.3, 0.6], [-0.5, 0.2]],
            array![0.1, -0.2, 0.0],
            array![0.2, -0.1],
        )
        .unwrap();
        let batch = array![[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]];
        let doubled = ndarray::concatenate![Axis(0), batch, batch];
        let reps = 4000;
        let mut g1 = RbmGrad::<f64>::zeros(3, 2);
        let mut g2 = RbmGrad::<f64>::zeros(3, 2);
        for _ in 0..reps {
            g1.scaled_add(1.0 / reps as f64, &cd_k_rbm(&p, batch.view(), 1, &mut rng).unwrap());
            g2.scaled_add(1.0 / reps as f64, &cd_k_rbm(&p, doubled.view(), 1, &mut rng).unwrap());
        }
        assert!(g1.max_abs_diff(&g2) < 0.02, "diff {}", g1.max_abs_diff(&g2));
    }

    #[test]
    fn cd_hard_zero_sample_when_saturated() {
        // Large positive weights and biases pin every unit on.
        let p = RbmParams::new(array![[20.0]], array![20.0], array![20.0]).unwrap();
        let g = cd_k_rbm_hard(&p, array![1.0].view(), array![1.0].view(), 2, &mut rng_from_seed(0)).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }
}
