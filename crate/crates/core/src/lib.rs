//! Restricted Boltzmann stochastic ensembles.
//!
//! An RBM whose parameters are random variables with a learnable
//! distribution: Bernoulli "dropout-like" components or Gaussian components.
//! The crate provides the RBM primitives, the ensemble parameterization and
//! its posteriors, EM contrastive-divergence training, stochastic
//! representation generation, exact oracles for tiny models, data loading and
//! a one-shot classification harness.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! at the crate root fix the common choices. Oracles always compute in `f64`.

pub mod classifier;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod oracle;
pub mod params;
pub mod rbm;
pub mod representation;
pub mod rng;
pub mod scalar;
pub mod training;

pub use classifier::{LogRegModel, OneShotConfig, OneShotResult, Pipeline};
pub use data::{Dataset, Shape};
pub use ensemble::{ClampConfig, EnsembleGrad, EnsembleParams, Family};
pub use error::{Error, Result};
pub use params::{ParamSet, RbmGrad, RbmParams};
pub use rng::{derive_rng, derive_seed, rng_from_seed, ChainRng, ModelRng};
pub use scalar::Scalar;
pub use training::{TrainConfig, TrainHistory};

pub type RbmParams32 = RbmParams<f32>;
pub type RbmParams64 = RbmParams<f64>;
pub type EnsembleParams32 = EnsembleParams<f32>;
pub type EnsembleParams64 = EnsembleParams<f64>;
pub type Dataset32 = Dataset<f32>;
pub type Dataset64 = Dataset<f64>;
