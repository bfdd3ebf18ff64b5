//! The `(W, b, c)` container shared by concrete RBMs, gradient records and
//! each half of an ensemble's parameter distribution.

use ndarray::{Array1, Array2, ArrayView1, Zip};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A weight matrix of shape `D x K` plus visible (`D`) and hidden (`K`) vectors.
///
/// Flat ordering, used by serialization and finite differences, is `W`
/// row-major, then `b`, then `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<T> {
    pub w: Array2<T>,
    pub b: Array1<T>,
    pub c: Array1<T>,
}

/// One concrete RBM `θ = (W, b, c)`.
pub type RbmParams<T> = ParamSet<T>;

/// Gradient over `(W, b, c)`.
pub type RbmGrad<T> = ParamSet<T>;

impl<T: Scalar> ParamSet<T> {
    /// Builds a parameter set, checking shapes and finiteness.
    pub fn new(w: Array2<T>, b: Array1<T>, c: Array1<T>) -> Result<Self> {
        let (d, k) = w.dim();
        if d == 0 || k == 0 {
            return Err(Error::InvalidParameter(format!(
                "weight matrix must be at least 1x1, got {d}x{k}"
            )));
        }
        if b.len() != d {
            return Err(Error::DimensionMismatch {
                what: "visible bias",
                expected: d,
                got: b.len(),
            });
        }
        if c.len() != k {
            return Err(Error::DimensionMismatch {
                what: "hidden bias",
                expected: k,
                got: c.len(),
            });
        }
        let params = Self { w, b, c };
        if params.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("non-finite entry".into()));
        }
        Ok(params)
    }

    pub fn zeros(visible: usize, hidden: usize) -> Self {
        Self::filled(visible, hidden, T::zero())
    }

    pub fn filled(visible: usize, hidden: usize, value: T) -> Self {
        Self {
            w: Array2::from_elem((visible, hidden), value),
            b: Array1::from_elem(visible, value),
            c: Array1::from_elem(hidden, value),
        }
    }

    #[inline]
    pub fn visible(&self) -> usize {
        self.b.len()
    }

    #[inline]
    pub fn hidden(&self) -> usize {
        self.c.len()
    }

    /// Number of scalars, `DK + D + K`.
    pub fn len(&self) -> usize {
        self.w.len() + self.b.len() + self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> + '_ {
        self.w.iter().chain(self.b.iter()).chain(self.c.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut T> + '_ {
        self.w
            .iter_mut()
            .chain(self.b.iter_mut())
            .chain(self.c.iter_mut())
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.w.dim() == other.w.dim() && self.b.len() == other.b.len() && self.c.len() == other.c.len()
    }

    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.w.nrows() != other.w.nrows() {
            return Err(Error::DimensionMismatch {
                what: "parameter rows",
                expected: self.w.nrows(),
                got: other.w.nrows(),
            });
        }
        if !self.same_shape(other) {
            return Err(Error::DimensionMismatch {
                what: "parameter columns",
                expected: self.w.ncols(),
                got: other.w.ncols(),
            });
        }
        Ok(())
    }

    /// `self += alpha * other`.
    pub fn scaled_add(&mut self, alpha: T, other: &Self) {
        self.w.scaled_add(alpha, &other.w);
        self.b.scaled_add(alpha, &other.b);
        self.c.scaled_add(alpha, &other.c);
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> ParamSet<U> {
        ParamSet {
            w: self.w.mapv(&f),
            b: self.b.mapv(&f),
            c: self.c.mapv(&f),
        }
    }

    /// Elementwise combination of two equally shaped sets.
    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        debug_assert!(self.same_shape(other));
        let zip1 = |a: &Array1<T>, b: &Array1<T>| Zip::from(a).and(b).map_collect(|&x, &y| f(x, y));
        Self {
            w: Zip::from(&self.w).and(&other.w).map_collect(|&x, &y| f(x, y)),
            b: zip1(&self.b, &other.b),
            c: zip1(&self.c, &other.c),
        }
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        self.map(|x| U::of(x.as_f64()))
    }

    pub fn to_flat_f64(&self) -> Vec<f64> {
        self.iter().map(|x| x.as_f64()).collect()
    }

    pub fn from_flat_f64(visible: usize, hidden: usize, flat: &[f64]) -> Result<Self> {
        let expected = visible * hidden + visible + hidden;
        if flat.len() != expected {
            return Err(Error::DimensionMismatch {
                what: "flat parameter array",
                expected,
                got: flat.len(),
            });
        }
        let mut out = Self::zeros(visible, hidden);
        for (dst, &src) in out.iter_mut().zip(flat) {
            *dst = T::of(src);
        }
        Ok(out)
    }

    pub fn max_abs(&self) -> T {
        self.iter().fold(T::zero(), |m, x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.iter()
            .zip(other.iter())
            .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }

    /// Energy coefficients of `(v, h)`: `v_i h_j` for `W`, `v` for `b`, `h` for `c`.
    pub fn coefficients(v: ArrayView1<T>, h: ArrayView1<T>) -> Self {
        let w = Array2::from_shape_fn((v.len(), h.len()), |(i, j)| v[i] * h[j]);
        Self {
            w,
            b: v.to_owned(),
            c: h.to_owned(),
        }
    }
}
