//! Time-slotted simulation and closed-form analysis of hierarchical
//! cooperation schedules for dense wireless ad hoc networks.
//!
//! The crate builds random networks ([`netmodel`]), evaluates the slot
//! counts of each scheme in closed form ([`analytic`]), constructs explicit
//! slot-by-slot schedules ([`mac`], [`schemes`]), executes and audits them
//! ([`engine`]) and runs parameter sweeps with exponent fits ([`sweep`]).

pub mod analytic;
pub mod cluster;
pub mod config;
pub mod engine;
pub mod error;
pub mod mac;
pub mod netmodel;
pub mod schemes;
pub mod sweep;
pub mod trace;

pub use error::{Error, Result};
