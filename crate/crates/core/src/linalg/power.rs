use super::matrix::DenseMatrix;
use crate::error::{Error, Result};

pub const SPECTRAL_NORM_RTOL: f64 = 1e-10;
pub const SPECTRAL_NORM_MAX_ITER: usize = 10_000;

/// Deterministic, non-degenerate start vector for power iterations.
fn start_vector(dim: usize) -> Vec<f64> {
    let golden = 0.618_033_988_749_894_9;
    let mut x: Vec<f64> = (0..dim).map(|i| 1.0 + ((i as f64 + 1.0) * golden).fract()).collect();
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    x.iter_mut().for_each(|v| *v /= norm);
    x
}

/// Largest eigenvalue of a symmetric positive semidefinite operator by power
/// iteration. Stops once the eigen-residual `‖Mx − μx‖` drops below `rtol·μ`.
pub fn power_iteration_psd(
    dim: usize,
    rtol: f64,
    max_iter: usize,
    mut apply: impl FnMut(&[f64]) -> Vec<f64>,
) -> Result<f64> {
    if dim == 0 {
        return Ok(0.0);
    }
    let mut x = start_vector(dim);
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let y = apply(&x);
        let mu: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let y_norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if y_norm == 0.0 {
            return Ok(0.0);
        }
        residual = x.iter().zip(&y).map(|(a, b)| (b - mu * a).powi(2)).sum::<f64>().sqrt();
        if residual <= rtol * mu {
            return Ok(mu);
        }
        x = y.into_iter().map(|v| v / y_norm).collect();
    }
    Err(Error::SolverFailure { solver: "power iteration", residual })
}

/// Largest singular value of `a` via power iteration on `aᵀa`.
pub fn spectral_norm(a: &DenseMatrix) -> Result<f64> {
    spectral_norm_with(a, SPECTRAL_NORM_RTOL)
}

pub fn spectral_norm_with(a: &DenseMatrix, rtol: f64) -> Result<f64> {
    if !a.is_finite() {
        return Err(Error::NonFinite("spectral_norm input"));
    }
    if a.rows() == 0 || a.cols() == 0 {
        return Ok(0.0);
    }
    let mu = power_iteration_psd(a.cols(), rtol, SPECTRAL_NORM_MAX_ITER, |x| {
        a.matvec_transposed(&a.matvec(x))
    })?;
    Ok(mu.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{matmul, spectral_radius};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn simple_cases() {
        assert!((spectral_norm(&DenseMatrix::identity(3)).unwrap() - 1.0).abs() < 1e-14);
        assert!((spectral_norm(&DenseMatrix::diag(&[3.0, 1.0])).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(spectral_norm(&DenseMatrix::zeros(3, 2)).unwrap(), 0.0);
    }

    #[test]
    fn agrees_with_schur_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let a = DenseMatrix::from_fn(5, 5, |_, _| rng.gen_range(-1.0..1.0));
            let ata = matmul(&a.transpose(), &a).unwrap();
            let via_schur = spectral_radius(&ata).unwrap().sqrt();
            let got = spectral_norm(&a).unwrap();
            assert!((got - via_schur).abs() <= 1e-8 * via_schur, "{got} vs {via_schur}");
        }
    }

    #[test]
    fn rectangular_input() {
        let a = DenseMatrix::from_rows(&[&[3.0], &[4.0]]);
        assert!((spectral_norm(&a).unwrap() - 5.0).abs() < 1e-12);
    }
}
