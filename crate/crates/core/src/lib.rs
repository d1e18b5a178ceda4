//! Digital twin for ultrasound-assisted yeast fermentation.
//!
//! A small sigmoid network maps normalized environmental conditions
//! (temperature, ultrasonic frequency, duty cycle) to the parameters of a
//! modified Gompertz growth curve. The network weights are sampled with
//! Random Walk Metropolis, predictions average the Gompertz parameters over
//! the retained networks, and the fitted model drives a simulated
//! sense/model/predict/act loop against a synthetic fermentation plant.

pub mod bnn;
pub mod chain_io;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod growth;
pub mod mcmc;
pub mod synthetic;
pub mod twin;

pub use error::{Error, Result};

/// Formats with 17 significant digits, enough for an exact `f64` round trip.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}
