//! Charge-noise spectroscopy of an offset-charge-sensitive transmon, at desk scale.
//!
//! Synthetic environments are probed by simulated Ramsey protocols and the shot
//! records are reduced to offset-charge traces, spectra, jump histograms and
//! charge-flux cross-spectra.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod cpsd;
pub mod electrostatics;
pub mod error;
pub mod estimation;
pub mod fit;
pub mod io;
pub mod model;
pub mod noise;
pub mod pulse;
pub mod reproduce;
pub mod rng;
pub mod run;
pub mod spectral;

pub use error::{Error, Result};
