//! Simulation toolkit for optical wake-up receivers in autonomous optical
//! sensor nodes.
//!
//! - [`optics`]: Lambertian LED link budget and ambient light profiles
//! - [`devices`]: solar cell, phototransistor, LDR and MOSFET models
//! - [`circuit`]: transient models of the two wake-up designs and harvesting front-ends
//! - [`experiments`]: error-rate grids, immunity trials, standby sweeps, calibration
//! - [`netsim`]: discrete-event simulation of flash-woken node networks
//! - [`cli`]: TOML configuration, design sweeps and command dispatch

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod circuit;
pub mod cli;
pub mod devices;
pub mod error;
pub mod experiments;
pub mod netsim;
pub mod optics;

pub use error::{Error, Result};
