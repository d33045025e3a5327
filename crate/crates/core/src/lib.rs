//! Estimation and classification of polynomially damped complex sinusoids.
//!
//! Each component of a sampled signal is modeled as
//! `r·exp(iφ + iωt − βt − γt²)` and assigned to the smallest of three nested
//! envelope classes (cisoid, Lorentzian, Voigt) whose fit leaves a white
//! residual around its frequency.

pub mod crlb;
pub mod error;
pub mod estimation;
pub mod experiment;
pub mod pipeline;
pub mod pseudo_true;
pub mod rng;
pub mod signal_model;
pub mod spectrum_test;
pub mod stats;

pub use error::{Error, Result};
pub use signal_model::{ComponentParams, ModelClass, SignalRecord, TimeGrid};
