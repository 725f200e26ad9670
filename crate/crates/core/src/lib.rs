//! Generalized Laplace (GL) and projected generalized Laplace (PGL)
//! distributions with maximum likelihood fitting by Gaussian quadrature over
//! the gamma scale mixture, baseline fitters, and a simulation harness.

pub mod circular;
pub mod cli;
pub mod error;
pub mod estimate;
pub mod gl;
pub mod integrate;
pub mod quadrature;
pub mod simharness;
pub mod specfun;

pub use error::{GlError, Result};
