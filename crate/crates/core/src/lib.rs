//! Exact classical simulation of the Abelian hidden subgroup problem cast as
//! eigenvalue estimation: order and period finding, discrete logarithms,
//! general finite Abelian groups, one-control-qubit estimation, and
//! many-to-one robustness, each with brute-force oracles for checking.

pub mod algorithms;
pub mod amplitudes;
pub mod arith;
pub mod error;
pub mod estimation;
pub mod groups;
pub mod oracles;
pub mod postprocess;
pub mod qft;

pub use error::{Error, Result};
