//! Tilted-pulse Hahn-Ramsey spin simulator.
//!
//! Closed-form signals and filter functions live in [`analytic`] and
//! [`noise`]; [`montecarlo`] checks them by brute-force propagation.

pub mod analytic;
pub mod cli;
pub mod error;
pub mod exec;
pub mod fit;
pub mod io;
pub mod montecarlo;
pub mod noise;
pub mod quadrature;
pub mod scan;
pub mod sensitivity;
pub mod spin;

pub use error::{Error, Result};
