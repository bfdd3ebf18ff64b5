//! Multinomial logistic regression and the one-shot evaluation harness.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{one_shot_split, Dataset};
use crate::ensemble::{mean_model, EnsembleParams};
use crate::error::{Error, Result};
use crate::params::RbmParams;
use crate::representation::{
    deterministic_representations, dropconnect_representations, stochastic_representations, DEFAULT_BURN_IN,
};
use crate::rng::{derive_rng, derive_seed};
use crate::scalar::Scalar;

/// Softmax regression: `scores = weights · x + biases`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRegModel<T> {
    /// `C × F`.
    pub weights: Array2<T>,
    pub biases: Array1<T>,
}

impl<T: Scalar> LogRegModel<T> {
    pub fn zeros(classes: usize, features: usize) -> Self {
        Self {
            weights: Array2::zeros((classes, features)),
            biases: Array1::zeros(classes),
        }
    }

    pub fn classes(&self) -> usize {
        self.biases.len()
    }

    pub fn features(&self) -> usize {
        self.weights.ncols()
    }

    fn scores(&self, x: ArrayView2<T>) -> Array2<T> {
        x.dot(&self.weights.t()) + &self.biases
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub max_iters: usize,
    pub step: f64,
    /// Stop once the gradient's ∞-norm is at most this.
    pub tol: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iters: 5_000,
            step: 0.1,
            tol: 1e-6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub iterations: usize,
    pub converged: bool,
    /// ∞-norm of the loss gradient at the returned model.
    pub grad_norm: f64,
}

fn check_features<T>(model: &LogRegModel<T>, x: ArrayView2<T>) -> Result<()> {
    if model.weights.ncols() != x.ncols() {
        return Err(Error::DimensionMismatch {
            what: "feature dimension",
            expected: model.weights.ncols(),
            got: x.ncols(),
        });
    }
    Ok(())
}

/// Row-wise softmax of `scores`, in place.
fn softmax_rows<T: Scalar>(scores: &mut Array2<T>) {
    for mut row in scores.rows_mut() {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        row.mapv_inplace(|s| (s - m).exp());
        let z: T = row.sum();
        row.mapv_inplace(|p| p / z);
    }
}

/// Gradient of the mean softmax cross-entropy.
fn loss_gradient<T: Scalar>(model: &LogRegModel<T>, x: ArrayView2<T>, labels: &[usize]) -> (Array2<T>, Array1<T>) {
    let mut g = model.scores(x);
    softmax_rows(&mut g);
    for (mut row, &y) in g.rows_mut().into_iter().zip(labels) {
        row[y] -= T::one();
    }
    let n = T::of(x.nrows() as f64);
    let gw = g.t().dot(&x) / n;
    let gb = g.sum_axis(Axis(0)) / n;
    (gw, gb)
}

fn inf_norm<T: Scalar>(gw: &Array2<T>, gb: &Array1<T>) -> f64 {
    gw.iter().chain(gb.iter()).fold(0.0, |m, g| m.max(g.as_f64().abs()))
}

/// Mean softmax cross-entropy of `model` on `(x, labels)`.
pub fn loss<T: Scalar>(model: &LogRegModel<T>, x: ArrayView2<T>, labels: &[usize]) -> Result<f64> {
    check_features(model, x)?;
    let s = model.scores(x);
    let total: f64 = s
        .outer_iter()
        .zip(labels)
        .map(|(row, &y)| {
            let m = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()));
            let lse = m + row.iter().map(|v| (v.as_f64() - m).exp()).sum::<f64>().ln();
            lse - row[y].as_f64()
        })
        .sum();
    Ok(total / x.nrows() as f64)
}

/// Full-batch gradient descent on the unregularized softmax cross-entropy,
/// starting from zero weights.
pub fn fit<T: Scalar>(x: ArrayView2<T>, labels: &[usize], cfg: &FitConfig) -> Result<(LogRegModel<T>, FitReport)> {
    if x.nrows() == 0 {
        return Err(Error::EmptyBatch);
    }
    if labels.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            what: "label count",
            expected: x.nrows(),
            got: labels.len(),
        });
    }
    let classes = labels.iter().max().map_or(0, |&m| m + 1);
    let first = labels[0];
    if labels.iter().all(|&l| l == first) {
        return Err(Error::DegenerateLabels);
    }
    if !(cfg.step > 0.0 && cfg.step.is_finite()) || !(cfg.tol >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "fit needs step > 0 and tol >= 0, got step {} tol {}",
            cfg.step, cfg.tol
        )));
    }
    let step = T::of(cfg.step);
    let mut model = LogRegModel::zeros(classes, x.ncols());
    let mut iterations = 0;
    loop {
        let (gw, gb) = loss_gradient(&model, x, labels);
        let grad_norm = inf_norm(&gw, &gb);
        if grad_norm <= cfg.tol || iterations == cfg.max_iters {
            let report = FitReport {
                iterations,
                converged: grad_norm <= cfg.tol,
                grad_norm,
            };
            return Ok((model, report));
        }
        model.weights.scaled_add(-step, &gw);
        model.biases.scaled_add(-step, &gb);
        iterations += 1;
    }
}

/// Arg-max class per row; ties go to the lowest class id.
pub fn predict<T: Scalar>(model: &LogRegModel<T>, x: ArrayView2<T>) -> Result<Vec<usize>> {
    check_features(model, x)?;
    let s = model.scores(x);
    Ok(s.outer_iter()
        .map(|row| {
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect())
}

pub fn accuracy<T: Scalar>(model: &LogRegModel<T>, x: ArrayView2<T>, labels: &[usize]) -> Result<f64> {
    if labels.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            what: "label count",
            expected: x.nrows(),
            got: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let hits = predict(model, x)?.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / labels.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pipeline {
    Pixels,
    Rbm,
    Dropconnect,
    Rbse,
}

impl Pipeline {
    pub const ALL: [Pipeline; 4] = [Pipeline::Pixels, Pipeline::Rbm, Pipeline::Dropconnect, Pipeline::Rbse];

    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Pixels => "pixels",
            Pipeline::Rbm => "rbm",
            Pipeline::Dropconnect => "dropconnect",
            Pipeline::Rbse => "rbse",
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pipeline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Pipeline::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown pipeline `{s}`")))
    }
}

/// How test examples are featurized by the stochastic pipelines.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestFeatures {
    /// `P(h | v)` under the pipeline's mean model.
    #[default]
    Deterministic,
    /// Average of `m_rep` stochastic representations.
    AveragedStochastic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OneShotConfig {
    pub splits: usize,
    /// Representations per labeled example in the stochastic pipelines.
    pub m_rep: usize,
    pub burn_in: usize,
    pub drop_keep: f64,
    pub test_features: TestFeatures,
    pub seed: u64,
    pub fit: FitConfig,
}

impl Default for OneShotConfig {
    fn default() -> Self {
        Self {
            splits: 10,
            m_rep: 10,
            burn_in: DEFAULT_BURN_IN,
            drop_keep: 0.5,
            test_features: TestFeatures::Deterministic,
            seed: 0,
            fit: FitConfig::default(),
        }
    }
}

impl OneShotConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.splits == 0 {
            bad.push("splits must be at least 1".to_string());
        }
        if self.m_rep == 0 {
            bad.push("m_rep must be at least 1".to_string());
        }
        if !(self.drop_keep > 0.0 && self.drop_keep <= 1.0) {
            bad.push(format!("drop_keep must lie in (0, 1], got {}", self.drop_keep));
        }
        if !(self.fit.step > 0.0 && self.fit.step.is_finite()) {
            bad.push(format!("fit.step must be positive, got {}", self.fit.step));
        }
        if !(self.fit.tol >= 0.0) {
            bad.push(format!("fit.tol must be non-negative, got {}", self.fit.tol));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(bad))
        }
    }

    pub fn split_seed(&self, split: usize) -> u64 {
        derive_seed(self.seed, &[split as u64])
    }
}

/// One `(pipeline, split)` evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub pipeline: Pipeline,
    pub split: usize,
    pub seed: u64,
    pub accuracy: f64,
    pub train_size: usize,
    pub feature_dim: usize,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub pipeline: Pipeline,
    pub mean: f64,
    pub std: f64,
    pub accuracies: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    pub better: Pipeline,
    pub worse: Pipeline,
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    pub p_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneShotSummary {
    pub pipelines: Vec<PipelineSummary>,
    pub split_seeds: Vec<u64>,
    pub sign_tests: Vec<SignTest>,
}

/// Accuracies for every pipeline over repeated one-shot splits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneShotResult {
    /// Ordered by split, then pipeline.
    pub records: Vec<SplitRecord>,
    pub split_seeds: Vec<u64>,
}

impl OneShotResult {
    pub fn accuracies(&self, pipeline: Pipeline) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.pipeline == pipeline)
            .map(|r| r.accuracy)
            .collect()
    }

    pub fn mean(&self, pipeline: Pipeline) -> f64 {
        mean_std(&self.accuracies(pipeline)).0
    }

    pub fn sign_test(&self, better: Pipeline, worse: Pipeline) -> SignTest {
        let (a, b) = (self.accuracies(better), self.accuracies(worse));
        let wins = a.iter().zip(&b).filter(|(x, y)| x > y).count();
        let losses = a.iter().zip(&b).filter(|(x, y)| x < y).count();
        SignTest {
            better,
            worse,
            wins,
            losses,
            ties: a.len().min(b.len()) - wins - losses,
            p_value: sign_test_p_value(wins, losses),
        }
    }

    pub fn summary(&self) -> OneShotSummary {
        let pipelines = Pipeline::ALL
            .into_iter()
            .filter_map(|p| {
                let accuracies = self.accuracies(p);
                if accuracies.is_empty() {
                    return None;
                }
                let (mean, std) = mean_std(&accuracies);
                Some(PipelineSummary {
                    pipeline: p,
                    mean,
                    std,
                    accuracies,
                })
            })
            .collect();
        OneShotSummary {
            pipelines,
            split_seeds: self.split_seeds.clone(),
            sign_tests: vec![
                self.sign_test(Pipeline::Rbm, Pipeline::Pixels),
                self.sign_test(Pipeline::Rbse, Pipeline::Rbm),
                self.sign_test(Pipeline::Rbse, Pipeline::Dropconnect),
            ],
        }
    }

    /// One row per `(pipeline, split)`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.summary())?)
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One-sided sign test: `P(X ≥ wins)` for `X ~ Binomial(wins + losses, 1/2)`.
/// Ties are dropped beforehand; with no informative pairs the p-value is 1.
pub fn sign_test_p_value(wins: usize, losses: usize) -> f64 {
    let n = wins + losses;
    if n == 0 {
        return 1.0;
    }
    let mut log_choose = 0.0f64;
    let mut tail = 0.0;
    for k in 0..=n {
        if k > 0 {
            log_choose += ((n - k + 1) as f64).ln() - (k as f64).ln();
        }
        if k >= wins {
            tail += (log_choose - n as f64 * std::f64::consts::LN_2).exp();
        }
    }
    tail.min(1.0)
}

/// Trained models shared by every split.
pub struct OneShotModels<'a, T> {
    pub rbm: &'a RbmParams<T>,
    pub ensemble: &'a EnsembleParams<T>,
}

struct Features<T> {
    train: Array2<T>,
    train_labels: Vec<usize>,
    test: Array2<T>,
}

fn stack<T: Scalar>(blocks: &[Array2<T>]) -> Array2<T> {
    let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
    ndarray::concatenate(Axis(0), &views).expect("blocks share a width")
}

/// `rbm` with every weight scaled by `keep`: the mean model of its DropConnect ensemble.
fn dropconnect_mean<T: Scalar>(rbm: &RbmParams<T>, keep: f64) -> RbmParams<T> {
    let mut mean = rbm.clone();
    mean.w.mapv_inplace(|w| w * T::of(keep));
    mean
}

fn pipeline_features<T: Scalar>(
    pipeline: Pipeline,
    models: &OneShotModels<'_, T>,
    train: &Dataset<T>,
    test: &Dataset<T>,
    cfg: &OneShotConfig,
    split_seed: u64,
) -> Result<Features<T>> {
    let train_labels = train.labels.clone().ok_or(Error::MissingLabels)?;
    let repeat = |labels: &[usize]| -> Vec<usize> {
        labels
            .iter()
            .flat_map(|&l| std::iter::repeat_n(l, cfg.m_rep))
            .collect()
    };
    // Stream per (pipeline, purpose, example): purpose 0 = train, 1 = test.
    let stream = |purpose: u64, i: usize| derive_rng(split_seed, &[pipeline as u64, purpose, i as u64]);
    match pipeline {
        Pipeline::Pixels => Ok(Features {
            train: train.examples.clone(),
            train_labels,
            test: test.examples.clone(),
        }),
        Pipeline::Rbm => Ok(Features {
            train: deterministic_representations(models.rbm, train.examples.view())?,
            train_labels,
            test: deterministic_representations(models.rbm, test.examples.view())?,
        }),
        Pipeline::Dropconnect => {
            let draw = |purpose: u64, ds: &Dataset<T>| -> Result<Vec<Array2<T>>> {
                ds.examples
                    .outer_iter()
                    .enumerate()
                    .map(|(i, v)| {
                        let mut rng = stream(purpose, i);
                        Ok(dropconnect_representations(models.rbm, cfg.drop_keep, v, cfg.m_rep, &mut rng)?.reps)
                    })
                    .collect()
            };
            let test_features = match cfg.test_features {
                TestFeatures::Deterministic => deterministic_representations(
                    &dropconnect_mean(models.rbm, cfg.drop_keep),
                    test.examples.view(),
                )?,
                TestFeatures::AveragedStochastic => average_rows(&draw(1, test)?),
            };
            Ok(Features {
                train: stack(&draw(0, train)?),
                train_labels: repeat(&train_labels),
                test: test_features,
            })
        }
        Pipeline::Rbse => {
            let draw = |purpose: u64, ds: &Dataset<T>| -> Result<Vec<Array2<T>>> {
                ds.examples
                    .outer_iter()
                    .enumerate()
                    .map(|(i, v)| {
                        let mut rng = stream(purpose, i);
                        Ok(stochastic_representations(models.ensemble, v, cfg.m_rep, cfg.burn_in, &mut rng)?.reps)
                    })
                    .collect()
            };
            let test_features = match cfg.test_features {
                TestFeatures::Deterministic => {
                    deterministic_representations(&mean_model(models.ensemble), test.examples.view())?
                }
                TestFeatures::AveragedStochastic => average_rows(&draw(1, test)?),
            };
            Ok(Features {
                train: stack(&draw(0, train)?),
                train_labels: repeat(&train_labels),
                test: test_features,
            })
        }
    }
}

fn average_rows<T: Scalar>(blocks: &[Array2<T>]) -> Array2<T> {
    let rows: Vec<Array1<T>> = blocks
        .iter()
        .map(|b| b.mean_axis(Axis(0)).expect("non-empty block"))
        .collect();
    let width = rows.first().map_or(0, |r| r.len());
    let mut out = Array2::zeros((rows.len(), width));
    for (mut dst, src) in out.rows_mut().into_iter().zip(&rows) {
        dst.assign(src);
    }
    out
}

fn evaluate_split<T: Scalar>(
    models: &OneShotModels<'_, T>,
    pool: &Dataset<T>,
    cfg: &OneShotConfig,
    split: usize,
) -> Result<Vec<SplitRecord>> {
    let seed = cfg.split_seed(split);
    let s = one_shot_split(pool, seed)?;
    let (train, test) = (s.train_set(pool), s.test_set(pool));
    let test_labels = test.labels.as_ref().ok_or(Error::MissingLabels)?;
    Pipeline::ALL
        .into_iter()
        .map(|pipeline| {
            let f = pipeline_features(pipeline, models, &train, &test, cfg, seed)?;
            let (model, report) = fit(f.train.view(), &f.train_labels, &cfg.fit)?;
            Ok(SplitRecord {
                pipeline,
                split,
                seed,
                accuracy: accuracy(&model, f.test.view(), test_labels)?,
                train_size: f.train.nrows(),
                feature_dim: f.train.ncols(),
                iterations: report.iterations,
                converged: report.converged,
            })
        })
        .collect()
}

/// Runs `cfg.splits` one-shot splits of `pool` and scores all four pipelines
/// on each. Splits run in parallel; results do not depend on thread count.
pub fn run_one_shot<T: Scalar>(
    models: &OneShotModels<'_, T>,
    pool: &Dataset<T>,
    cfg: &OneShotConfig,
) -> Result<OneShotResult> {
    cfg.validate()?;
    if models.rbm.visible() != pool.visible() || models.ensemble.visible() != pool.visible() {
        return Err(Error::DimensionMismatch {
            what: "pool width",
            expected: models.rbm.visible(),
            got: pool.visible(),
        });
    }
    let per_split: Vec<Vec<SplitRecord>> = (0..cfg.splits)
        .into_par_iter()
        .map(|split| evaluate_split(models, pool, cfg, split))
        .collect::<Result<_>>()?;
    Ok(OneShotResult {
        records: per_split.into_iter().flatten().collect(),
        split_seeds: (0..cfg.splits).map(|s| cfg.split_seed(s)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::Family;
    use crate::params::ParamSet;
    use crate::rbm::init_params;
    use crate::rng::rng_from_seed;
    use ndarray::array;
    use rand::Rng;

    #[test]
    fn separable_points_are_memorized() {
        let x = array![[-1.0], [1.0]];
        let (model, report) = fit(x.view(), &[0, 1], &FitConfig::default()).unwrap();
        assert_eq!(accuracy(&model, x.view(), &[0, 1]).unwrap(), 1.0);
        assert_eq!(report.iterations, 5_000);
        assert!(!report.converged);
    }

    #[test]
    fn gradient_contract_is_reported() {
        let x = array![[0.0, 1.0], [1.0, 0.0], [1.0, 1.0], [0.5, 0.5]];
        let labels = [0, 1, 1, 0];
        let cfg = FitConfig {
            max_iters: 100_000,
            step: 0.5,
            tol: 1e-6,
        };
        let (model, report) = fit(x.view(), &labels, &cfg).unwrap();
        let (gw, gb) = loss_gradient(&model, x.view(), &labels);
        assert_eq!(report.grad_norm, inf_norm(&gw, &gb));
        assert!(report.converged || report.iterations == cfg.max_iters);
        assert!(report.grad_norm <= cfg.tol || report.iterations == cfg.max_iters);
    }

    #[test]
    fn duplicated_data_gives_same_model() {
        let x: Array2<f64> = array![[0.2, 0.9], [0.7, 0.1], [0.4, 0.4]];
        let labels = [0, 1, 2];
        let cfg = FitConfig {
            max_iters: 200,
            ..FitConfig::default()
        };
        let (a, _) = fit(x.view(), &labels, &cfg).unwrap();
        let x2 = ndarray::concatenate(Axis(0), &[x.view(), x.view()]).unwrap();
        let (b, _) = fit(x2.view(), &[0, 1, 2, 0, 1, 2], &cfg).unwrap();
        for (p, q) in a.weights.iter().zip(&b.weights) {
            assert!((p - q).abs() < 1e-12);
        }
        let (c, _) = fit(x.view(), &labels, &cfg).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn loss_decreases_from_zero_init() {
        let x = array![[0.2, 0.9], [0.7, 0.1], [0.4, 0.4], [0.9, 0.8]];
        let labels = [0, 1, 2, 0];
        let zero = LogRegModel::<f64>::zeros(3, 2);
        let (m, _) = fit(x.view(), &labels, &FitConfig::default()).unwrap();
        assert!(loss(&m, x.view(), &labels).unwrap() < loss(&zero, x.view(), &labels).unwrap());
        assert!((loss(&zero, x.view(), &labels).unwrap() - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_model_predicts_class_zero() {
        let m = LogRegModel::<f32>::zeros(4, 3);
        let x = Array2::from_elem((5, 3), 0.3f32);
        assert_eq!(predict(&m, x.view()).unwrap(), vec![0; 5]);
        assert!(predict(&m, Array2::<f32>::zeros((1, 2)).view()).is_err());
    }

    #[test]
    fn shuffled_labels_give_chance_accuracy() {
        let classes = 10;
        let mut rng = rng_from_seed(3);
        let train = Array2::from_shape_fn((100, 20), |_| rng.random::<f64>());
        let train_labels: Vec<usize> = (0..100).map(|i| i % classes).collect();
        let test = Array2::from_shape_fn((990, 20), |_| rng.random::<f64>());
        let test_labels: Vec<usize> = (0..990).map(|i| i % classes).collect();
        let (m, _) = fit(train.view(), &train_labels, &FitConfig::default()).unwrap();
        let acc = accuracy(&m, test.view(), &test_labels).unwrap();
        assert!((acc - 0.1).abs() <= 0.05, "{acc}");
    }

    #[test]
    fn fit_rejects_bad_input() {
        let x = array![[1.0], [2.0]];
        assert!(matches!(fit(x.view(), &[1, 1], &FitConfig::default()), Err(Error::DegenerateLabels)));
        assert!(fit(x.view(), &[0], &FitConfig::default()).is_err());
        assert!(fit(Array2::<f64>::zeros((0, 1)).view(), &[], &FitConfig::default()).is_err());
    }

    #[test]
    fn sign_test_values() {
        assert_eq!(sign_test_p_value(0, 0), 1.0);
        assert!((sign_test_p_value(10, 0) - 1.0 / 1024.0).abs() < 1e-15);
        assert!((sign_test_p_value(8, 2) - 56.0 / 1024.0).abs() < 1e-12);
        assert!((sign_test_p_value(0, 5) - 1.0).abs() < 1e-12);
        assert!((sign_test_p_value(3, 3) - 42.0 / 64.0).abs() < 1e-12);
    }

    #[test]
    fn mean_std_values() {
        assert_eq!(mean_std(&[0.5]), (0.5, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }

    fn toy_pool() -> Dataset<f64> {
        let (classes, per_class, d) = (3, 100, 6);
        let mut rng = rng_from_seed(8);
        let n = classes * per_class;
        let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
        let examples = Array2::from_shape_fn((n, d), |(i, j)| {
            let on = j / 2 == labels[i];
            let flip = rng.random::<f64>() < 0.1;
            if on != flip {
                1.0
            } else {
                0.0
            }
        });
        Dataset::new("toy", examples, Some(labels)).unwrap()
    }

    #[test]
    fn one_shot_harness_shapes_and_determinism() {
        let pool = toy_pool();
        let mut rng = rng_from_seed(1);
        let rbm = init_params::<f64, _>(6, 4, &mut rng);
        let ens = EnsembleParams::new(Family::Bernoulli, rbm.clone(), ParamSet::filled(6, rbm.hidden(), 0.5)).unwrap();
        let models = OneShotModels {
            rbm: &rbm,
            ensemble: &ens,
        };
        let cfg = OneShotConfig {
            splits: 3,
            m_rep: 4,
            burn_in: 2,
            fit: FitConfig {
                max_iters: 50,
                ..FitConfig::default()
            },
            ..OneShotConfig::default()
        };
        let res = run_one_shot(&models, &pool, &cfg).unwrap();
        assert_eq!(res.records.len(), 12);
        for p in Pipeline::ALL {
            assert_eq!(res.accuracies(p).len(), 3);
        }
        for r in &res.records {
            assert!((0.0..=1.0).contains(&r.accuracy));
            let (size, dim) = match r.pipeline {
                Pipeline::Pixels => (3, 6),
                Pipeline::Rbm => (3, 4),
                _ => (12, 4),
            };
            assert_eq!((r.train_size, r.feature_dim), (size, dim), "{:?}", r.pipeline);
        }
        assert_eq!(res, run_one_shot(&models, &pool, &cfg).unwrap());
        let csv = res.to_csv().unwrap();
        assert_eq!(csv.lines().count(), 13);
        assert!(csv.starts_with("pipeline,split,seed,accuracy"));
        let summary: serde_json::Value = serde_json::from_str(&res.summary_json().unwrap()).unwrap();
        assert_eq!(summary["pipelines"].as_array().unwrap().len(), 4);

        let averaged = OneShotConfig {
            test_features: TestFeatures::AveragedStochastic,
            ..cfg.clone()
        };
        let res2 = run_one_shot(&models, &pool, &averaged).unwrap();
        assert_eq!(res.accuracies(Pipeline::Pixels), res2.accuracies(Pipeline::Pixels));
    }

    #[test]
    fn pixels_separate_easy_pool() {
        let pool = toy_pool();
        let rbm = RbmParams::<f64>::zeros(6, 2);
        let ens = EnsembleParams::new(Family::Bernoulli, rbm.clone(), ParamSet::filled(6, rbm.hidden(), 0.5)).unwrap();
        let models = OneShotModels {
            rbm: &rbm,
            ensemble: &ens,
        };
        let cfg = OneShotConfig {
            splits: 2,
            m_rep: 2,
            fit: FitConfig {
                max_iters: 300,
                ..FitConfig::default()
            },
            ..OneShotConfig::default()
        };
        let res = run_one_shot(&models, &pool, &cfg).unwrap();
        assert!(res.mean(Pipeline::Pixels) > 0.6);
        // Zero parameters map everything to 0.5, so only the tie rule is left.
        assert!((res.mean(Pipeline::Rbm) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation_lists_all_problems() {
        let cfg = OneShotConfig {
            splits: 0,
            m_rep: 0,
            drop_keep: 0.0,
            ..OneShotConfig::default()
        };
        match cfg.validate() {
            Err(Error::InvalidConfig(v)) => assert_eq!(v.len(), 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
