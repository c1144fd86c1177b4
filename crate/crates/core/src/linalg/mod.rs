//! Dense real linear algebra for the recurrent parameterizations.

mod eigen;
mod matrix;
mod power;
mod schur;

pub use eigen::{dominant_eigenpair, eigenvalues, spectral_radius, DominantEigenData};
pub use matrix::{matmul, solve, ComplexVector, DenseMatrix};
pub use power::{
    power_iteration_psd, spectral_norm, spectral_norm_with, SPECTRAL_NORM_MAX_ITER, SPECTRAL_NORM_RTOL,
};
pub use schur::{real_schur, RealSchur, SchurBlock};
