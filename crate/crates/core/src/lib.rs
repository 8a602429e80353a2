//! Numerical toolkit for generalized Kimura diffusion operators.

pub mod bessel_poincare;
pub mod corner_geometry;
pub mod error;
pub mod harnack_probe;
pub mod heat_semigroup;
pub mod kimura_discretization;
pub mod linalg;
pub mod quadrature;
pub mod special;
pub mod stationary_series;
pub mod wright_fisher_mc;

pub use error::{KimuraError, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
