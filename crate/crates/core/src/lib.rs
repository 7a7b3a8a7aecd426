//! Adaptive C0 interior penalty Galerkin solver for the Helmholtz
//! transmission eigenvalue problem on polygonal domains.
//!
//! The pipeline is: [`mesh`] -> [`space`] -> [`assembly`] -> [`eigen`] ->
//! [`estimator`] -> [`adapt`].

pub mod adapt;
pub mod assembly;
pub mod coefficients;
pub mod eigen;
pub mod error;
pub mod estimator;
pub mod mesh;
pub mod quadrature;
pub mod space;
pub mod sparse;

pub use error::{Error, Result};
pub use num_complex::Complex64;
