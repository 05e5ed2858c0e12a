//! Crop-yield estimation from multi-sensor remote-sensing features.
//!
//! The crate covers the full pipeline: spectral/backscatter index math,
//! acquisition windowing and cloud filtering, feature engineering over a
//! growing season, statistical feature selection, four small neural
//! regressors trained with exact backpropagation, inverse-error ensemble
//! weighting, and the evaluation protocol (train/test split plus k-fold
//! cross-validation). Synthetic data generation makes every stage runnable
//! and verifiable without real imagery.
//!
//! Start with [`synth`] to produce a dataset, [`features`] to engineer the
//! predictor table, [`selection`] to reduce it, [`regressors`]/[`ensemble`]
//! to fit and combine models, and [`pipeline`] to orchestrate all stages.

pub mod acquisition;
pub mod ensemble;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod indices;
pub mod io;
pub mod nn;
pub mod pipeline;
pub mod regressors;
pub mod selection;
pub mod synth;

pub use error::{Error, Result};
