//! Numerical laboratory for spacetime-path relativistic quantum mechanics.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagram;
pub mod error;
pub mod freq;
pub mod quad;
pub mod kernel;
pub mod oracle;
pub mod history;
pub mod onshell;
pub mod propagator;
pub mod spacetime;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
