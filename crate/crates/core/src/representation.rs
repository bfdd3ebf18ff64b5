//! Hidden-space representations.
//!
//! A deterministic representation is the mean-field vector `P(h | v)`. A
//! stochastic representation is `P(h | v, θ̃)` under a model drawn from the
//! conditional ensemble by a short clamped chain over `(θ, h)`. DropConnect
//! representations mask weights with a fixed keep probability instead.
//! Mapping back to visible space always uses the ensemble's mean model.

use std::io::Write;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{mean_model, sample_theta_tilted, EnsembleParams};
use crate::error::{Error, Result};
use crate::params::RbmParams;
use crate::rbm::{check_len, hidden_conditional, hidden_conditional_batch, sample_state, visible_conditional};
use crate::rng::{derive_rng, ChainRng};
use crate::scalar::{logistic, Scalar};

/// Clamped-chain burn-in used when generating representations.
pub const DEFAULT_BURN_IN: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    Deterministic,
    Rbse,
    Dropconnect,
}

impl Generator {
    pub fn name(self) -> &'static str {
        match self {
            Generator::Deterministic => "deterministic",
            Generator::Rbse => "rbse",
            Generator::Dropconnect => "dropconnect",
        }
    }
}

/// Representations of one visible vector, one row per draw.
#[derive(Clone, Debug, PartialEq)]
pub struct RepresentationSet<T> {
    pub source: Array1<T>,
    pub reps: Array2<T>,
    pub generator: Generator,
}

impl<T: Scalar> RepresentationSet<T> {
    pub fn len(&self) -> usize {
        self.reps.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.reps.nrows() == 0
    }

    /// Sum over coordinates of the sample variance across draws.
    pub fn total_variance(&self) -> f64 {
        let n = self.reps.nrows();
        if n < 2 {
            return 0.0;
        }
        self.reps
            .columns()
            .into_iter()
            .map(|col| {
                // Shifted by the first draw so identical draws give exactly zero.
                let x0 = col[0].as_f64();
                let (s, sq) = col.iter().fold((0.0, 0.0), |(s, sq), x| {
                    let d = x.as_f64() - x0;
                    (s + d, sq + d * d)
                });
                (sq - s * s / n as f64) / (n - 1) as f64
            })
            .sum()
    }
}

/// `P(h | v)` under `params`.
pub fn deterministic_representation<T: Scalar>(params: &RbmParams<T>, v: ArrayView1<T>) -> Result<Array1<T>> {
    hidden_conditional(v, params)
}

/// Row-wise [`deterministic_representation`].
pub fn deterministic_representations<T: Scalar>(params: &RbmParams<T>, batch: ArrayView2<T>) -> Result<Array2<T>> {
    hidden_conditional_batch(batch, params)
}

fn check_count(m_rep: usize) -> Result<()> {
    if m_rep == 0 {
        return Err(Error::InvalidParameter("m_rep must be at least 1".into()));
    }
    Ok(())
}

/// Runs `k + 1` rounds of `θ → h` with `v` fixed and returns the last `θ`.
///
/// `v` may be soft, in which case the tilt coefficients `v_i h_j` are real.
fn clamped_model_draw<T: Scalar>(
    ens: &EnsembleParams<T>,
    mean: &RbmParams<T>,
    v: ArrayView1<T>,
    k: usize,
    rng: &mut ChainRng,
) -> Result<RbmParams<T>> {
    let mut h = sample_state(hidden_conditional(v, mean)?.view(), &mut rng.units);
    let mut theta = mean.clone();
    for _ in 0..=k {
        theta = sample_theta_tilted(ens, v, h.view(), &mut rng.theta)?;
        h = sample_state(hidden_conditional(v, &theta)?.view(), &mut rng.units);
    }
    Ok(theta)
}

/// `m_rep` stochastic representations of `v`.
///
/// Each draw runs its own clamped chain for `burn_in + 1` steps from
/// `h0 ~ P(h | v, mean_model)` and returns `P(h | v, θ̃)` for the final model.
pub fn stochastic_representations<T: Scalar, R: Rng + ?Sized>(
    ens: &EnsembleParams<T>,
    v: ArrayView1<T>,
    m_rep: usize,
    burn_in: usize,
    rng: &mut R,
) -> Result<RepresentationSet<T>> {
    check_count(m_rep)?;
    check_len("visible state", ens.visible(), v.len())?;
    let mean = mean_model(ens);
    let seeds: Vec<u64> = (0..m_rep).map(|_| rng.next_u64()).collect();
    let rows: Vec<Array1<T>> = seeds
        .par_iter()
        .map(|&seed| {
            let mut chain = ChainRng::from_seed(seed);
            let theta = clamped_model_draw(ens, &mean, v, burn_in + 1, &mut chain)?;
            hidden_conditional(v, &theta)
        })
        .collect::<Result<_>>()?;
    Ok(RepresentationSet {
        source: v.to_owned(),
        reps: stack_rows(&rows, ens.hidden()),
        generator: Generator::Rbse,
    })
}

/// `m_rep` mean-field representations under independently masked weights.
///
/// Each weight is kept with probability `drop_keep`; kept weights are not
/// rescaled and biases are never masked.
pub fn dropconnect_representations<T: Scalar, R: Rng + ?Sized>(
    params: &RbmParams<T>,
    drop_keep: f64,
    v: ArrayView1<T>,
    m_rep: usize,
    rng: &mut R,
) -> Result<RepresentationSet<T>> {
    check_count(m_rep)?;
    if !(drop_keep > 0.0 && drop_keep <= 1.0) {
        return Err(Error::InvalidParameter(format!("drop_keep must lie in (0, 1], got {drop_keep}")));
    }
    check_len("visible state", params.visible(), v.len())?;
    let (d, k) = (params.visible(), params.hidden());
    let mut reps = Array2::zeros((m_rep, k));
    for mut row in reps.rows_mut() {
        let mut pre = params.c.clone();
        for i in 0..d {
            let vi = v[i];
            for j in 0..k {
                // Draw every mask bit so the stream does not depend on v.
                let keep = rng.random::<f64>() < drop_keep;
                if keep && vi != T::zero() {
                    pre[j] += vi * params.w[[i, j]];
                }
            }
        }
        row.assign(&pre.mapv(logistic));
    }
    Ok(RepresentationSet {
        source: v.to_owned(),
        reps,
        generator: Generator::Dropconnect,
    })
}

fn stack_rows<T: Scalar>(rows: &[Array1<T>], width: usize) -> Array2<T> {
    let mut out = Array2::zeros((rows.len(), width));
    for (mut dst, src) in out.rows_mut().into_iter().zip(rows) {
        dst.assign(src);
    }
    out
}

/// `P(v | h)` with `h_rep` used as a mean-field hidden input.
pub fn reconstruct<T: Scalar>(params: &RbmParams<T>, h_rep: ArrayView1<T>) -> Result<Array1<T>> {
    visible_conditional(h_rep, params)
}

/// Visible-space images of one source point's stochastic representations.
#[derive(Clone, Debug, PartialEq)]
pub struct Cloud<T> {
    pub source: Array1<T>,
    pub points: Array2<T>,
}

/// Stochastic representations of each test point mapped back through the
/// mean model. Point `i` uses the stream `derive_rng(seed, [i])`.
pub fn roundtrip_cloud<T: Scalar>(
    ens: &EnsembleParams<T>,
    test_points: ArrayView2<T>,
    m_rep: usize,
    burn_in: usize,
    seed: u64,
) -> Result<Vec<Cloud<T>>> {
    if test_points.nrows() == 0 {
        return Err(Error::EmptyBatch);
    }
    let mean = mean_model(ens);
    test_points
        .outer_iter()
        .enumerate()
        .map(|(i, v)| {
            let mut rng = derive_rng(seed, &[i as u64]);
            let set = stochastic_representations(ens, v, m_rep, burn_in, &mut rng)?;
            let rows: Vec<Array1<T>> = set
                .reps
                .outer_iter()
                .map(|h| reconstruct(&mean, h))
                .collect::<Result<_>>()?;
            Ok(Cloud {
                source: v.to_owned(),
                points: stack_rows(&rows, ens.visible()),
            })
        })
        .collect()
}

/// Deterministic round trip `v → P(h | v) → P(v | h)` for each row.
pub fn deterministic_roundtrip<T: Scalar>(params: &RbmParams<T>, points: ArrayView2<T>) -> Result<Array2<T>> {
    let h = hidden_conditional_batch(points, params)?;
    crate::rbm::visible_conditional_batch(h.view(), params)
}

fn distance<T: Scalar>(a: ArrayView1<T>, b: ArrayView1<T>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x.as_f64() - y.as_f64()).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Euclidean distance from `point` to the closest row of `reference`.
pub fn nearest_distance<T: Scalar>(point: ArrayView1<T>, reference: ArrayView2<T>) -> f64 {
    reference
        .outer_iter()
        .map(|r| distance(point, r))
        .fold(f64::INFINITY, f64::min)
}

/// Distances behind the outlier-attraction check for one cloud.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Attraction {
    /// Mean over cloud points of the distance to the nearest training point.
    pub cloud_distance: f64,
    /// The source point's own distance to the nearest training point.
    pub source_distance: f64,
}

impl Attraction {
    pub fn attracted(&self) -> bool {
        self.cloud_distance < self.source_distance
    }
}

pub fn attraction<T: Scalar>(cloud: &Cloud<T>, train: ArrayView2<T>) -> Attraction {
    let n = cloud.points.nrows().max(1) as f64;
    Attraction {
        cloud_distance: cloud.points.outer_iter().map(|p| nearest_distance(p, train)).sum::<f64>() / n,
        source_distance: nearest_distance(cloud.source.view(), train),
    }
}

/// Mean Euclidean displacement between rows of `a` and `b`.
pub fn mean_displacement<T: Scalar>(a: ArrayView2<T>, b: ArrayView2<T>) -> f64 {
    let n = a.nrows().max(1) as f64;
    a.outer_iter().zip(b.outer_iter()).map(|(x, y)| distance(x, y)).sum::<f64>() / n
}

/// One row of a 2-D point export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub x: f64,
    pub y: f64,
    pub source_id: Option<usize>,
    pub kind: String,
}

impl PointRecord {
    pub fn from_point<T: Scalar>(p: ArrayView1<T>, source_id: Option<usize>, kind: &str) -> Result<Self> {
        check_len("exported point", 2, p.len())?;
        Ok(Self {
            x: p[0].as_f64(),
            y: p[1].as_f64(),
            source_id,
            kind: kind.to_string(),
        })
    }
}

/// Records for every cloud point, tagged with its source index and `kind`.
pub fn cloud_records<T: Scalar>(clouds: &[Cloud<T>], kind: &str) -> Result<Vec<PointRecord>> {
    let mut out = Vec::new();
    for (id, cloud) in clouds.iter().enumerate() {
        for p in cloud.points.outer_iter() {
            out.push(PointRecord::from_point(p, Some(id), kind)?);
        }
    }
    Ok(out)
}

/// Records for the rows of `points`; `with_ids` tags each with its row index.
pub fn point_records<T: Scalar>(points: ArrayView2<T>, kind: &str, with_ids: bool) -> Result<Vec<PointRecord>> {
    points
        .outer_iter()
        .enumerate()
        .map(|(i, p)| PointRecord::from_point(p, with_ids.then_some(i), kind))
        .collect()
}

/// Writes `x,y,source_id,kind` CSV.
pub fn write_points_csv<W: Write>(out: W, records: &[PointRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::Family;
    use crate::params::ParamSet;
    use crate::rng::rng_from_seed;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::RngCore;

    fn random_ensemble(family: Family, seed: u64) -> EnsembleParams<f64> {
        let mut rng = rng_from_seed(seed);
        let mut loc = ParamSet::<f64>::zeros(3, 4);
        loc.iter_mut().for_each(|x| *x = rng.random_range(-2.0..2.0));
        let spread = ParamSet::filled(3, 4, 0.5);
        EnsembleParams::new(family, loc, spread).unwrap()
    }

    #[test]
    fn deterministic_examples() {
        let zero = RbmParams::<f64>::zeros(3, 2);
        let v = array![1.0, 0.0, 1.0];
        assert_eq!(deterministic_representation(&zero, v.view()).unwrap(), array![0.5, 0.5]);
        let p = ParamSet::new(array![[1.0]], array![0.0], array![0.0]).unwrap();
        let h = deterministic_representation(&p, array![1.0].view()).unwrap();
        assert_abs_diff_eq!(h[0], 0.7310585786, epsilon = 1e-10);
        assert_eq!(h, deterministic_representation(&p, array![1.0].view()).unwrap());
        assert!(deterministic_representation(&p, v.view()).is_err());
    }

    #[test]
    fn batch_matches_rows() {
        let ens = random_ensemble(Family::Gaussian, 1);
        let batch = array![[1.0, 0.0, 1.0], [0.2, 0.9, 0.0]];
        let all = deterministic_representations(&ens.loc, batch.view()).unwrap();
        for (i, row) in batch.outer_iter().enumerate() {
            let one = deterministic_representation(&ens.loc, row).unwrap();
            assert!(all.row(i).iter().zip(one.iter()).all(|(a, b)| (a - b).abs() < 1e-15));
        }
    }

    #[test]
    fn degenerate_ensemble_gives_identical_reps() {
        let base = random_ensemble(Family::Bernoulli, 2).loc;
        let v = array![1.0, 0.0, 1.0];
        let want = deterministic_representation(&base, v.view()).unwrap();
        for family in [Family::Bernoulli, Family::Gaussian] {
            let ens = EnsembleParams::degenerate(family, &base);
            let set = stochastic_representations(&ens, v.view(), 5, 2, &mut rng_from_seed(3)).unwrap();
            assert_eq!(set.generator, Generator::Rbse);
            for row in set.reps.outer_iter() {
                assert_eq!(row, want.view());
            }
            assert_eq!(set.total_variance(), 0.0);
        }
    }

    #[test]
    fn stochastic_reps_vary() {
        for family in [Family::Bernoulli, Family::Gaussian] {
            let ens = random_ensemble(family, 4);
            let v = array![1.0, 1.0, 0.0];
            let set = stochastic_representations(&ens, v.view(), 100, DEFAULT_BURN_IN, &mut rng_from_seed(5)).unwrap();
            assert_eq!(set.len(), 100);
            assert!(set.total_variance() > 0.0);
            assert!(set.reps.iter().all(|&x| x > 0.0 && x < 1.0));
        }
    }

    #[test]
    fn stochastic_reps_are_seeded() {
        let ens = random_ensemble(Family::Bernoulli, 6);
        let v = array![0.3, 1.0, 0.0];
        let a = stochastic_representations(&ens, v.view(), 4, 1, &mut rng_from_seed(7)).unwrap();
        let b = stochastic_representations(&ens, v.view(), 4, 1, &mut rng_from_seed(7)).unwrap();
        assert_eq!(a, b);
        assert!(stochastic_representations(&ens, v.view(), 0, 1, &mut rng_from_seed(7)).is_err());
    }

    #[test]
    fn dropconnect_examples() {
        let ens = random_ensemble(Family::Bernoulli, 8);
        let v = array![1.0, 0.0, 1.0];
        let full = dropconnect_representations(&ens.loc, 1.0, v.view(), 3, &mut rng_from_seed(1)).unwrap();
        let want = deterministic_representation(&ens.loc, v.view()).unwrap();
        for row in full.reps.outer_iter() {
            assert!(row.iter().zip(want.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
        }
        let zero = RbmParams::<f64>::zeros(3, 4);
        let half = dropconnect_representations(&zero, 0.5, v.view(), 3, &mut rng_from_seed(1)).unwrap();
        assert!(half.reps.iter().all(|&x| x == 0.5));
        let noisy = dropconnect_representations(&ens.loc, 0.5, v.view(), 100, &mut rng_from_seed(2)).unwrap();
        assert!(noisy.total_variance() > 0.0);
        assert!(dropconnect_representations(&ens.loc, 0.0, v.view(), 3, &mut rng_from_seed(1)).is_err());
    }

    #[test]
    fn dropconnect_keep_rate() {
        // One-hot visible and unit weights: each pre-activation counts kept weights.
        let d = 100;
        let k = 100;
        let params = RbmParams::<f64>::filled(d, k, 0.0);
        let mut rng = rng_from_seed(9);
        let keep = 0.5;
        let mut kept = 0usize;
        for _ in 0..d * k {
            kept += (rng.random::<f64>() < keep) as usize;
        }
        assert_abs_diff_eq!(kept as f64 / (d * k) as f64, keep, epsilon = 0.02);
        // The representation path consumes one draw per weight.
        let v = Array1::<f64>::ones(d);
        let mut a = rng_from_seed(10);
        dropconnect_representations(&params, keep, v.view(), 1, &mut a).unwrap();
        let mut b = rng_from_seed(10);
        (0..d * k).for_each(|_| {
            b.random::<f64>();
        });
        assert_eq!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn reconstruct_examples() {
        let zero = RbmParams::<f64>::zeros(3, 2);
        assert_eq!(reconstruct(&zero, array![0.2, 0.9].view()).unwrap(), array![0.5, 0.5, 0.5]);
        assert!(reconstruct(&zero, array![0.2].view()).is_err());
    }

    #[test]
    fn degenerate_clouds_collapse() {
        let mut rng = rng_from_seed(11);
        let base: RbmParams<f64> = crate::rbm::init_params::<f64, _>(2, 3, &mut rng).map(|x| x * 100.0);
        let ens = EnsembleParams::degenerate(Family::Gaussian, &base);
        let pts = array![[0.2, 0.8], [0.5, 0.5]];
        let clouds = roundtrip_cloud(&ens, pts.view(), 6, 2, 1).unwrap();
        let rbm = deterministic_roundtrip(&base, pts.view()).unwrap();
        assert_eq!(clouds.len(), 2);
        for (cloud, want) in clouds.iter().zip(rbm.outer_iter()) {
            assert_eq!(cloud.points.nrows(), 6);
            for p in cloud.points.outer_iter() {
                assert!(p.iter().zip(want.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
            }
        }
        assert!(roundtrip_cloud(&ens, Array2::<f64>::zeros((0, 2)).view(), 1, 1, 1).is_err());
    }

    #[test]
    fn attraction_and_distances() {
        let train = array![[0.0, 0.0], [1.0, 0.0]];
        assert_abs_diff_eq!(nearest_distance(array![0.0, 2.0].view(), train.view()), 2.0);
        let cloud = Cloud {
            source: array![0.0, 2.0],
            points: array![[0.0, 0.5], [1.0, 0.5]],
        };
        let a = attraction(&cloud, train.view());
        assert_abs_diff_eq!(a.cloud_distance, 0.5);
        assert!(a.attracted());
        assert_abs_diff_eq!(mean_displacement(train.view(), train.view()), 0.0);
    }

    #[test]
    fn csv_export() {
        let clouds = vec![Cloud {
            source: array![0.1, 0.2],
            points: array![[0.3, 0.4]],
        }];
        let mut recs = point_records(array![[0.5, 0.6]].view(), "train", false).unwrap();
        recs.extend(cloud_records(&clouds, "rbse").unwrap());
        let mut buf = Vec::new();
        write_points_csv(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "x,y,source_id,kind\n0.5,0.6,,train\n0.3,0.4,0,rbse\n");
        assert!(point_records(array![[0.5, 0.6, 0.1]].view(), "x", false).is_err());
    }
}
