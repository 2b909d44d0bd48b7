//! Correlator design for avalanche-photodiode optical receivers.
//!
//! The received signal is a Poisson impulse train with random avalanche gains
//! plus white Gaussian thermal noise. This crate designs power-constrained
//! correlator waveforms that maximize the missed-detection Chernoff exponent
//! at a given false-alarm exponent ([`detection`]), designs high-SNR delay
//! estimators ([`delay`]), and validates both against an independent Monte
//! Carlo simulator of the physical model ([`montecarlo`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod delay;
pub mod detection;
pub mod error;
pub mod montecarlo;
pub mod optimize;
pub mod output;
pub mod signal;
pub mod special;

pub use error::{Error, Result};
