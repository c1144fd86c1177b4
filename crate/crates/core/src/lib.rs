//! Eigenvalue-normalized recurrent networks.
//!
//! A recurrent cell with two hidden blocks: a long-term state driven by an
//! orthogonal (Cayley-parameterized) matrix and a short-term state driven by a
//! matrix `W = T / (ρ(T) + ε)` whose spectral radius is held at or below one.
//! Everything is implemented directly on dense `f64` matrices: the real Schur
//! eigensolver, the spectral-radius gradient, backpropagation through time,
//! optimizers, the adding and copying benchmarks, and analysis instruments.

pub mod analysis;
pub mod error;
pub mod linalg;
pub mod net;
pub mod params;
pub mod tasks;
pub mod train;

pub use error::{Error, Result};
