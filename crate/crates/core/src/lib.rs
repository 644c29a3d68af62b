//! Pedestrian maneuver forecasting with an IMM filter bank and a recurrent
//! encoder-decoder surrogate that predicts maneuver probabilities together
//! with per-maneuver Gaussian-mixture forecasts.

pub mod error;
pub mod filters;
pub mod harness;
pub mod motion;
pub mod neural;
pub mod numerics;
pub mod rnn_imm;
pub mod sim;

pub use error::{Error, Result};
