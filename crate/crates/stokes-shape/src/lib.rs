//! Numerical toolkit for the Stokes Dirichlet eigenvalue problem under
//! localized boundary variations: fundamental tensors and layer potentials,
//! model-domain eigenpairs, first-order shape calculus, and the entire
//! functions that govern the ε-expansion of Gaussian bump perturbations.

pub mod asymptotics;
pub mod eigensolver;
pub mod error;
pub mod geometry;
pub mod kernels;
pub mod potentials;
pub mod quad;
pub mod shapecalc;
pub mod specfun;

pub use error::{Error, Result};
