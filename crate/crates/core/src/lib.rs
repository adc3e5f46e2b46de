//! Watermarking toolkit for acoustic trilateration programs.
//!
//! A sensed byte is embedded into a nonlinear localization program in two
//! coupled ways: the byte seeds a linear feedback shift register whose output
//! signal is partitioned into constraint selections (appended as linear
//! constraints) and weight factors (installed as objective coefficients).
//! Detection compares solver results of the clean, watermarked, and suspect
//! programs; extraction reverses the pipeline from the objective coefficients
//! alone and verifies integrity along the way.

pub mod attacks;
pub mod bits;
pub mod error;
pub mod experiment;
pub mod kolmogorov;
pub mod lfsr;
mod sampling;
pub mod solver;
pub mod trilateration;
pub mod watermark;

pub use error::{Error, Result};
