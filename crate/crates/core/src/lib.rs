//! Attention-based medical-image feature extraction with a learnable
//! refinement of the encoder's classification token, plus classical
//! descriptors, wrapper feature selection, classifiers and weighted metrics.
//!
//! Numeric code is generic over [`Scalar`] (`f32`/`f64`); the aliases below
//! fix the double-precision types used by the pipeline and every persisted
//! artifact.

pub mod classifiers;
pub mod dataset;
pub mod error;
pub mod features;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod scalar;
pub mod selection;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor64 = numerics::Tensor<f64>;
pub type Tensor32 = numerics::Tensor<f32>;
pub type ModelParams64 = model::ModelParams<f64>;
pub type ModelParams32 = model::ModelParams<f32>;
pub type ForwardTrace64 = model::ForwardTrace<f64>;
pub type ImageSample64 = dataset::ImageSample<f64>;
