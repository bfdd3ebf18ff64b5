//! EM contrastive divergence for stochastic ensembles.
//!
//! One step runs two chains per example. The model chain alternates
//! `θ ~ P(θ | v, h)`, `v ~ P(v | h, θ)`, `h ~ P(h | v, θ)`; the clamped chain
//! keeps `v` fixed and alternates `θ` and `h`. Both run `k + 1` rounds. The
//! step returns the batch mean of `E[∂φ/∂α | v_k, h_k] - E[∂φ/∂α | v, h'_k]`,
//! an ascent direction on `log P(v; α)`, and [`apply_update`] scales it by the
//! learning rate once.
//!
//! Every chain draws from its own [`ChainRng`] derived from the step seed and
//! the example index, so results are independent of thread count.

use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{
    mean_model, scale_by_coefficients, unit_coefficient_grad, ClampConfig, EnsembleGrad, EnsembleParams,
    HardThetaSampler,
};
use crate::error::{Error, Result};
use crate::params::{ParamSet, RbmParams};
use crate::rbm::{
    cd_k_rbm, check_len, gibbs_sweep, hidden_conditional, hidden_conditional_batch, is_hard_batch,
    require_hard, sample_state, sample_states, visible_conditional_batch,
};
use crate::rng::{derive_rng, derive_seed, ChainRng};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChainInit {
    /// `h0 ~ P(h | v, mean_model(α))` at every step.
    DataDriven,
    /// `h0` is the previous model-chain state of the same example slot.
    Persistent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    MonteCarlo,
    /// Exact gradients by enumeration; tiny models only.
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub k: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub epsilon: f64,
    pub sigma_min: f64,
    pub chain_init: ChainInit,
    pub mc_samples: usize,
    pub seed: u64,
    pub estimator: Estimator,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k: 1,
            learning_rate: 0.05,
            batch_size: 20,
            epochs: 10,
            epsilon: crate::ensemble::DEFAULT_EPSILON,
            sigma_min: crate::ensemble::DEFAULT_SIGMA_MIN,
            chain_init: ChainInit::DataDriven,
            mc_samples: 1,
            seed: 0,
            estimator: Estimator::MonteCarlo,
        }
    }
}

impl TrainConfig {
    /// Checks every field and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.k < 1 {
            problems.push(format!("k must be at least 1, got {}", self.k));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            problems.push(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size < 1 {
            problems.push("batch_size must be at least 1".to_string());
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            problems.push(format!("epsilon must lie in (0, 0.5), got {}", self.epsilon));
        }
        if !(self.sigma_min > 0.0 && self.sigma_min.is_finite()) {
            problems.push(format!("sigma_min must be positive, got {}", self.sigma_min));
        }
        if self.mc_samples < 1 {
            problems.push("mc_samples must be at least 1".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems))
        }
    }

    pub fn clamp(&self) -> ClampConfig {
        ClampConfig {
            epsilon: self.epsilon,
            sigma_min: self.sigma_min,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean squared error of the mean-field reconstruction `v → P(h|v) → P(v|h)`.
    pub recon_error: f64,
    /// Mean L2 norm of the per-step gradient over `W`, `b`, `c` (atoms or means).
    pub loc_grad_norm: f64,
    /// Mean L2 norm of the per-step gradient over probabilities or deviations.
    pub spread_grad_norm: f64,
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    /// CSV of the deterministic columns; timings go to [`Self::timings`].
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for rec in &self.epochs {
            w.serialize(rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Wall-clock seconds per epoch.
    pub fn timings(&self) -> Vec<f64> {
        self.epochs.iter().map(|r| r.wall_clock_secs).collect()
    }
}

/// Model-chain hidden state per example slot.
#[derive(Clone, Debug)]
pub struct PersistentChains<T> {
    states: Vec<Option<Array1<T>>>,
}

impl<T: Scalar> PersistentChains<T> {
    pub fn new(slots: usize) -> Self {
        Self { states: vec![None; slots] }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn get(&self, slot: usize) -> Option<&Array1<T>> {
        self.states.get(slot).and_then(|s| s.as_ref())
    }
}

/// Per-step precomputation shared by all chains of one step.
struct StepTables<T> {
    sampler: HardThetaSampler<T>,
    mean: RbmParams<T>,
}

impl<T: Scalar> StepTables<T> {
    fn new(ens: &EnsembleParams<T>) -> Self {
        Self {
            sampler: HardThetaSampler::new(ens),
            mean: mean_model(ens),
        }
    }
}

fn model_chain_kernel<T: Scalar>(
    tables: &StepTables<T>,
    v0: ArrayView1<T>,
    h0: ArrayView1<T>,
    k: usize,
    rng: &mut ChainRng,
    theta: &mut RbmParams<T>,
) -> Result<(Array1<T>, Array1<T>)> {
    let mut v = v0.to_owned();
    let mut h = h0.to_owned();
    for _ in 0..=k {
        tables.sampler.sample_into(v.view(), h.view(), &mut rng.theta, theta);
        (v, h) = gibbs_sweep(theta, h.view(), &mut rng.units)?;
    }
    Ok((v, h))
}

fn clamped_chain_kernel<T: Scalar>(
    tables: &StepTables<T>,
    v: ArrayView1<T>,
    h0: ArrayView1<T>,
    k: usize,
    rng: &mut ChainRng,
    theta: &mut RbmParams<T>,
) -> Result<Array1<T>> {
    let mut h = h0.to_owned();
    for _ in 0..=k {
        tables.sampler.sample_into(v, h.view(), &mut rng.theta, theta);
        h = sample_state(hidden_conditional(v, theta)?.view(), &mut rng.units);
    }
    Ok(h)
}

fn check_chain_inputs<T: Scalar>(ens: &EnsembleParams<T>, v: ArrayView1<T>, h0: ArrayView1<T>, k: usize) -> Result<()> {
    check_len("visible state", ens.visible(), v.len())?;
    check_len("hidden state", ens.hidden(), h0.len())?;
    require_hard("visible state", v)?;
    require_hard("hidden state", h0)?;
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    Ok(())
}

/// Runs `k + 1` rounds of `θ → v → h` from `(v0, h0)` and returns `(v_k, h_k)`.
pub fn gibbs_model_chain<T: Scalar>(
    ens: &EnsembleParams<T>,
    v0: ArrayView1<T>,
    h0: ArrayView1<T>,
    k: usize,
    rng: &mut ChainRng,
) -> Result<(Array1<T>, Array1<T>)> {
    check_chain_inputs(ens, v0, h0, k)?;
    let tables = StepTables::new(ens);
    let mut theta = tables.sampler.buffer();
    model_chain_kernel(&tables, v0, h0, k, rng, &mut theta)
}

/// Runs `k + 1` rounds of `θ → h` with `v` fixed and returns `h'_k`.
pub fn gibbs_clamped_chain<T: Scalar>(
    ens: &EnsembleParams<T>,
    v: ArrayView1<T>,
    h0: ArrayView1<T>,
    k: usize,
    rng: &mut ChainRng,
) -> Result<Array1<T>> {
    check_chain_inputs(ens, v, h0, k)?;
    let tables = StepTables::new(ens);
    let mut theta = tables.sampler.buffer();
    clamped_chain_kernel(&tables, v, h0, k, rng, &mut theta)
}

/// Final states of every chain in one step, one row per (example, sample).
struct ChainStates<T> {
    model_v: Array2<T>,
    model_h: Array2<T>,
    clamped_v: Array2<T>,
    clamped_h: Array2<T>,
}

/// Seed of chain `sample` for batch row `row` within a step.
pub fn chain_seed(step_seed: u64, row: usize, sample: usize) -> u64 {
    derive_seed(step_seed, &[row as u64, sample as u64])
}

/// `(v_k, h_k)` of the model chain and `h'_k` of the clamped chain.
type ChainEnd<T> = (Array1<T>, Array1<T>, Array1<T>);

fn run_chains<T: Scalar>(
    ens: &EnsembleParams<T>,
    batch: ArrayView2<T>,
    k: usize,
    mc_samples: usize,
    step_seed: u64,
    initial: &[Option<Array1<T>>],
) -> Result<ChainStates<T>> {
    let tables = StepTables::new(ens);
    let (n, d, hid) = (batch.nrows(), ens.visible(), ens.hidden());
    let rows = n * mc_samples;
    let results: Vec<Result<ChainEnd<T>>> = (0..rows)
        .into_par_iter()
        .with_min_len(4)
        .map_init(
            || tables.sampler.buffer(),
            |theta, idx| {
                let (e, m) = (idx / mc_samples, idx % mc_samples);
                let v = batch.row(e);
                let mut rng = ChainRng::from_seed(chain_seed(step_seed, e, m));
                let h0 = match &initial[e] {
                    Some(h) => h.clone(),
                    None => sample_state(hidden_conditional(v, &tables.mean)?.view(), &mut rng.units),
                };
                let (vk, hk) = model_chain_kernel(&tables, v, h0.view(), k, &mut rng, theta)?;
                let hc = clamped_chain_kernel(&tables, v, h0.view(), k, &mut rng, theta)?;
                Ok((vk, hk, hc))
            },
        )
        .collect();
    let mut states = ChainStates {
        model_v: Array2::zeros((rows, d)),
        model_h: Array2::zeros((rows, hid)),
        clamped_v: Array2::zeros((rows, d)),
        clamped_h: Array2::zeros((rows, hid)),
    };
    for (idx, r) in results.into_iter().enumerate() {
        let (vk, hk, hc) = r?;
        states.model_v.row_mut(idx).assign(&vk);
        states.model_h.row_mut(idx).assign(&hk);
        states.clamped_v.row_mut(idx).assign(&batch.row(idx / mc_samples));
        states.clamped_h.row_mut(idx).assign(&hc);
    }
    Ok(states)
}

/// `unit ⊙ (Σ a(v_k, h_k) - Σ a(v, h'_k)) / rows`.
fn assemble_gradient<T: Scalar>(ens: &EnsembleParams<T>, s: &ChainStates<T>) -> EnsembleGrad<T> {
    let scale = T::one() / T::of(s.model_v.nrows() as f64);
    let coef = ParamSet {
        w: (s.model_v.t().dot(&s.model_h) - s.clamped_v.t().dot(&s.clamped_h)) * scale,
        b: (s.model_v.sum_axis(Axis(0)) - s.clamped_v.sum_axis(Axis(0))) * scale,
        c: (s.model_h.sum_axis(Axis(0)) - s.clamped_h.sum_axis(Axis(0))) * scale,
    };
    scale_by_coefficients(&unit_coefficient_grad(ens), &coef)
}

fn check_batch<T: Scalar>(ens: &EnsembleParams<T>, batch: ArrayView2<T>) -> Result<()> {
    if batch.nrows() == 0 {
        return Err(Error::EmptyBatch);
    }
    check_len("visible state", ens.visible(), batch.ncols())?;
    if !is_hard_batch(batch) {
        return Err(Error::SoftState { what: "training batch" });
    }
    Ok(())
}

/// One EM-CD-k gradient estimate from an explicit step seed.
///
/// `slots` maps batch rows to persistent-chain slots; with `persistent` set,
/// each row starts from its slot's stored state when one exists and the final
/// model-chain state is written back.
pub fn em_cd_k_step_seeded<T: Scalar>(
    ens: &EnsembleParams<T>,
    batch: ArrayView2<T>,
    cfg: &TrainConfig,
    step_seed: u64,
    persistent: Option<(&mut PersistentChains<T>, &[usize])>,
) -> Result<EnsembleGrad<T>> {
    check_batch(ens, batch)?;
    if cfg.k == 0 || cfg.mc_samples == 0 {
        return Err(Error::InvalidParameter("k and mc_samples must be at least 1".into()));
    }
    let n = batch.nrows();
    let mut initial = vec![None; n];
    if let Some((chains, slots)) = &persistent {
        check_len("slot list", n, slots.len())?;
        for (init, &slot) in initial.iter_mut().zip(slots.iter()) {
            *init = chains.get(slot).cloned();
        }
    }
    let states = run_chains(ens, batch, cfg.k, cfg.mc_samples, step_seed, &initial)?;
    if let Some((chains, slots)) = persistent {
        for (e, &slot) in slots.iter().enumerate() {
            if slot < chains.states.len() {
                chains.states[slot] = Some(states.model_h.row(e * cfg.mc_samples).to_owned());
            }
        }
    }
    Ok(assemble_gradient(ens, &states))
}

/// One EM-CD-k gradient estimate with data-driven chain starts.
pub fn em_cd_k_step<T: Scalar, R: Rng + ?Sized>(
    ens: &EnsembleParams<T>,
    batch: ArrayView2<T>,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<EnsembleGrad<T>> {
    em_cd_k_step_seeded(ens, batch, cfg, rng.next_u64(), None)
}

/// Mean of the exact per-example gradients; oracle-sized models only.
pub fn exact_batch_gradient<T: Scalar>(ens: &EnsembleParams<T>, batch: ArrayView2<T>) -> Result<EnsembleGrad<T>> {
    check_batch(ens, batch)?;
    let mut acc = EnsembleGrad::<f64>::zeros(ens.visible(), ens.hidden());
    for row in batch.outer_iter() {
        acc.scaled_add(1.0, &crate::oracle::exact_expected_grad(ens, row)?);
    }
    let n = batch.nrows() as f64;
    Ok(EnsembleGrad {
        loc: acc.loc.map(|x| T::of(x / n)),
        spread: acc.spread.map(|x| T::of(x / n)),
    })
}

/// `α ← α + λ Δα`, then clamps probabilities and deviations.
pub fn apply_update<T: Scalar>(
    ens: &EnsembleParams<T>,
    grad: &EnsembleGrad<T>,
    cfg: &TrainConfig,
) -> Result<EnsembleParams<T>> {
    ens.check_grad_shape(grad)?;
    let mut out = ens.clone();
    let lr = T::of(cfg.learning_rate);
    out.loc.scaled_add(lr, &grad.loc);
    out.spread.scaled_add(lr, &grad.spread);
    out.clamp(&cfg.clamp());
    Ok(out)
}

/// Replaces soft entries by Bernoulli draws; hard entries are kept.
pub fn stochastic_binarize<T: Scalar, R: Rng + ?Sized>(batch: ArrayView2<T>, rng: &mut R) -> Array2<T> {
    if is_hard_batch(batch) {
        batch.to_owned()
    } else {
        sample_states(batch, rng)
    }
}

/// Mean squared error of the mean-field reconstruction of `data` under `params`.
pub fn reconstruction_error<T: Scalar>(params: &RbmParams<T>, data: ArrayView2<T>) -> Result<f64> {
    let ph = hidden_conditional_batch(data, params)?;
    let pv = visible_conditional_batch(ph.view(), params)?;
    let diff = &pv - &data;
    Ok(diff.iter().map(|x| x.as_f64() * x.as_f64()).sum::<f64>() / diff.len().max(1) as f64)
}

fn l2<'a, T: Scalar>(xs: impl Iterator<Item = &'a T>) -> f64 {
    xs.map(|x| x.as_f64() * x.as_f64()).sum::<f64>().sqrt()
}

fn check_dataset<T: Scalar>(visible: usize, data: ArrayView2<T>) -> Result<()> {
    if data.nrows() == 0 {
        return Err(Error::EmptyBatch);
    }
    check_len("visible state", visible, data.ncols())
}

fn gather_rows<T: Scalar>(data: ArrayView2<T>, idx: &[usize]) -> Array2<T> {
    data.select(Axis(0), idx)
}

/// Trains an ensemble with shuffled minibatch epochs.
///
/// Soft inputs are re-binarized by Bernoulli draws each time they are used.
/// `progress` sees each epoch record as it completes.
pub fn train<T: Scalar>(
    ens0: &EnsembleParams<T>,
    dataset: ArrayView2<T>,
    cfg: &TrainConfig,
    mut progress: impl FnMut(&EpochRecord),
) -> Result<(EnsembleParams<T>, TrainHistory)> {
    cfg.validate()?;
    check_dataset(ens0.visible(), dataset)?;
    let mut ens = ens0.clone();
    let mut history = TrainHistory::default();
    if cfg.epochs == 0 {
        return Ok((ens, history));
    }
    ens.clamp(&cfg.clamp());
    let n = dataset.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    let mut chains = PersistentChains::new(n);
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let mut rng = derive_rng(cfg.seed, &[epoch as u64]);
        order.shuffle(&mut rng);
        let (mut loc_norm, mut spread_norm, mut steps) = (0.0, 0.0, 0usize);
        for slots in order.chunks(cfg.batch_size) {
            let batch = stochastic_binarize(gather_rows(dataset, slots).view(), &mut rng);
            let grad = match cfg.estimator {
                Estimator::Exact => exact_batch_gradient(&ens, batch.view())?,
                Estimator::MonteCarlo => {
                    let step_seed = rng.next_u64();
                    let persistent = match cfg.chain_init {
                        ChainInit::Persistent => Some((&mut chains, slots)),
                        ChainInit::DataDriven => None,
                    };
                    em_cd_k_step_seeded(&ens, batch.view(), cfg, step_seed, persistent)?
                }
            };
            loc_norm += l2(grad.loc.iter());
            spread_norm += l2(grad.spread.iter());
            steps += 1;
            ens = apply_update(&ens, &grad, cfg)?;
        }
        let record = EpochRecord {
            epoch: epoch + 1,
            recon_error: reconstruction_error(&mean_model(&ens), dataset)?,
            loc_grad_norm: loc_norm / steps as f64,
            spread_grad_norm: spread_norm / steps as f64,
            wall_clock_secs: start.elapsed().as_secs_f64(),
        };
        progress(&record);
        history.epochs.push(record);
    }
    Ok((ens, history))
}

/// Trains a plain RBM with CD-k on the same epoch schedule as [`train`].
///
/// Soft inputs are used directly as Bernoulli means. Only `k`, `learning_rate`,
/// `batch_size`, `epochs` and `seed` are read.
pub fn train_rbm<T: Scalar>(
    params0: &RbmParams<T>,
    dataset: ArrayView2<T>,
    cfg: &TrainConfig,
    mut progress: impl FnMut(&EpochRecord),
) -> Result<(RbmParams<T>, TrainHistory)> {
    cfg.validate()?;
    check_dataset(params0.visible(), dataset)?;
    let mut params = params0.clone();
    let mut history = TrainHistory::default();
    let n = dataset.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    let lr = T::of(cfg.learning_rate);
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let mut rng = derive_rng(cfg.seed, &[epoch as u64]);
        order.shuffle(&mut rng);
        let (mut norm, mut steps) = (0.0, 0usize);
        for slots in order.chunks(cfg.batch_size) {
            let batch = gather_rows(dataset, slots);
            let grad = cd_k_rbm(&params, batch.view(), cfg.k, &mut rng)?;
            norm += l2(grad.iter());
            steps += 1;
            params.scaled_add(lr, &grad);
        }
        let record = EpochRecord {
            epoch: epoch + 1,
            recon_error: reconstruction_error(&params, dataset)?,
            loc_grad_norm: norm / steps as f64,
            spread_grad_norm: 0.0,
            wall_clock_secs: start.elapsed().as_secs_f64(),
        };
        progress(&record);
        history.epochs.push(record);
    }
    Ok((params, history))
}
