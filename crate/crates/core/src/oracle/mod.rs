//! Independent reference computations used to validate the production code.
//!
//! Each oracle takes a different numerical route from the code it checks:
//! direct quadrature instead of closed forms, exhaustive enumeration
//! instead of canonical generation, exact rationals instead of log space.

pub mod diagrams;
pub mod freq;
pub mod kernel;
pub mod propagator;
pub mod twoslit;
