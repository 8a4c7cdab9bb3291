//! Denoising-autoencoder weight initialization for deep binary classifiers
//! on gene-expression tables.
//!
//! Pipeline: [`data`] cleans and merges cohort tables, [`dae`] pretrains a
//! denoising autoencoder per cross-validation fold, [`classifier`] transfers
//! its layers into a batch-normalized classification head, and
//! [`evaluation`] drives stratified k-fold scoring. [`experiment`] runs the
//! whole grid and renders reports; [`synth`] produces cohorts shaped like the
//! real inputs for offline testing.

pub mod classifier;
pub mod dae;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod linalg;
pub mod nn;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use rng::RngStream;
