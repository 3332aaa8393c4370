//! Explainable anomaly detection for multidimensional telemetry.
//!
//! Autoencoder and multimodal-autoencoder detectors score records by their
//! reconstruction error; detected anomalies are explained by a sparse
//! per-dimension *contribution degree* found with proximal gradient descent.

pub mod config;
pub mod contribution;
pub mod datagen;
pub mod detector;
pub mod error;
pub mod eval;
pub mod experiments;
pub mod multimodal;
pub mod neuralnet;
pub mod persist;
pub mod rng;

pub use error::{Error, Result};
