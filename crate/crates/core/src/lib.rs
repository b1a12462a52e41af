//! Neumann heat semigroup on the two half-spaces of `R^n`: image-method
//! kernels, semigroup-adapted BMO / tent-space functionals, and a Picard
//! solver for the mild form of `u_t = Δ_N u - div(b u^2)`.

pub mod error;
pub mod experiments;
pub mod grid;
pub mod kernel;
pub mod characterization;
pub mod config;
pub mod corpus;
pub mod norms;
pub mod semigroup;
pub mod snapshot;
pub mod solver;

pub use error::{Error, Result};
