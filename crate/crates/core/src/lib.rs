//! Functional causal mediation analysis.
//!
//! Treatment `Z(t)`, mediator `M(t)` and outcome `Y(t)` are curves observed on
//! a shared uniform grid. Each path of the mediation model (`Z -> M`, `Z -> Y`,
//! `M -> Y`) is either *concurrent* (point-wise coefficient curve) or
//! *historical* (coefficient surface integrated over a trailing window). The
//! paths are fitted by penalized least squares and combined into time-varying
//! direct and indirect effect curves, with subject-level bootstrap bands.

pub mod basis;
pub mod config;
pub mod error;
pub mod funcdata;
pub mod inference;
pub mod mediation;
pub mod metrics;
pub mod quadrature;
pub mod regression;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
