//! Deterministic round-based simulator of analog over-the-air (OTA) federated
//! learning with RF energy harvesting and co-channel interference (CCI).
//!
//! Devices harvest energy from in-band and out-band RF sources, train a local
//! model for an energy-dependent number of epochs, and transmit their model
//! differences simultaneously over a shared fading uplink. The parameter
//! server (PS) receives the analog superposition corrupted by in-band CCI and
//! noise, rescales it with a denoising factor, and updates the global model.
//!
//! Every run is a pure function of its [`SimConfig`]: randomness is drawn
//! from labelled counter-based substreams (see [`rng`]), so the per-device
//! fan-out can run on any number of threads without changing results.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod config;
pub mod denoising;
pub mod diagnostics;
pub mod energy;
mod error;
pub mod experiment;
pub mod learning;
pub mod output;
pub mod rng;
pub mod scheduling;
pub mod sim;
pub mod topology;

pub use config::SimConfig;
pub use error::{Error, Result};
pub use sim::{run, RoundRecord, RunOutput};
