//! Safe value functions on discretized control systems.
//!
//! The pipeline is: [`dynsys::discretize`] a system into a finite
//! deterministic [`dynsys::TransitionTable`], compute its viability kernel
//! with [`viability::compute_kernel`], solve the penalized and constrained
//! problems with [`dp`], then analyze the penalized field with [`svf`].
//! [`analytic`] holds the closed-form examples that need no grid, and
//! [`run`] strings everything together for one [`config::RunConfig`].

pub mod analytic;
pub mod config;
pub mod dp;
pub mod dynsys;
mod error;
pub mod io;
pub mod run;
pub mod svf;
pub mod viability;

pub use error::{Error, Result};
