//! Resampling-trace image authentication and a small face recognition
//! pipeline gated on it.
//!
//! Numeric modules are generic over [`scalar::Scalar`] (`f32` or `f64`).
//! The recognizer and its model file are `f64` only.

pub mod authenticator;
pub mod calibration;
pub mod error;
pub mod features;
pub mod linalg;
pub mod neural;
pub mod plot;
pub mod preprocess;
pub mod raster;
pub mod recognizer;
pub mod resample;
pub mod scalar;
pub mod synth;

pub use error::{Error, Result};

pub type Raster64 = raster::Raster<f64>;
pub type Raster32 = raster::Raster<f32>;
pub type AffineParams64 = resample::AffineParams<f64>;
pub type AffineParams32 = resample::AffineParams<f32>;
pub type KernelSpec64 = resample::KernelSpec<f64>;
pub type KernelSpec32 = resample::KernelSpec<f32>;
pub type DetectorConfig64 = authenticator::DetectorConfig<f64>;
pub type DetectorConfig32 = authenticator::DetectorConfig<f32>;
pub type Verdict64 = authenticator::Verdict<f64>;
pub type Verdict32 = authenticator::Verdict<f32>;
pub type FeatureVector64 = features::FeatureVector<f64>;
pub type FeatureVector32 = features::FeatureVector<f32>;
pub type PcaModel64 = features::PcaModel<f64>;
pub type PcaModel32 = features::PcaModel<f32>;
pub type Mlp64 = neural::Mlp<f64>;
pub type Mlp32 = neural::Mlp<f32>;
