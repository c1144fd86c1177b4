//! Spectral quantities derived from the real Schur form: the spectrum, the
//! spectral radius, and the dominant eigenpair with the derivative data that
//! the spectral-radius normalization consumes.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::matrix::{ComplexVector, DenseMatrix};
use super::schur::{pair_eigenvalues, real_schur, RealSchur, SchurBlock};
use crate::error::{Error, Result};

/// Moduli within this relative distance are treated as tied.
const MODULUS_TIE_RTOL: f64 = 1e-12;

/// Dominant eigenvalue `λ = α + iβ` of a real matrix with its right and left
/// eigenvectors and the derivative matrices of `λ` with respect to the entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominantEigenData {
    /// Spectral radius `|λ|`.
    pub rho: f64,
    pub alpha: f64,
    /// Imaginary part, canonicalized to be nonnegative.
    pub beta: f64,
    /// Right eigenvector, `T u = λ u`, unit norm.
    pub u: ComplexVector,
    /// Left eigenvector, `v* T = λ v*`, unit norm.
    pub v: ComplexVector,
    /// Real part of `S = v̄ uᵀ / (v* u)`, i.e. `∂α/∂T`.
    pub s_re: DenseMatrix,
    /// Imaginary part of `S`, i.e. `∂β/∂T`.
    pub s_im: DenseMatrix,
    /// `C = α Re(S) + β Im(S)`, so that `∂ρ/∂T = C / ρ`.
    pub c: DenseMatrix,
    /// `|v* u| / (‖u‖ ‖v‖)`; near zero for (nearly) defective eigenvalues.
    pub defect_score: f64,
}

impl DominantEigenData {
    pub fn lambda(&self) -> Complex64 {
        Complex64::new(self.alpha, self.beta)
    }

    /// The same eigen-data expressed with the conjugate eigenvalue `λ̄` and the
    /// conjugated eigenvectors `ū`, `v̄`.
    pub fn conjugated(&self) -> Self {
        let u = self.u.conj();
        let v = self.v.conj();
        let (s_re, s_im, c, defect_score) = derivative_matrices(self.alpha, -self.beta, &u, &v);
        Self { rho: self.rho, alpha: self.alpha, beta: -self.beta, u, v, s_re, s_im, c, defect_score }
    }
}

/// Full spectrum of a square matrix from its real Schur form.
pub fn eigenvalues(t: &DenseMatrix) -> Result<Vec<Complex64>> {
    Ok(real_schur(t)?.eigenvalues())
}

/// Maximum eigenvalue modulus over the Schur spectrum; 0 for an empty matrix.
pub fn spectral_radius(t: &DenseMatrix) -> Result<f64> {
    Ok(eigenvalues(t)?.iter().fold(0.0, |m, z| m.max(z.norm())))
}

/// Picks the index of the dominant eigenvalue: maximum modulus, ties broken by
/// largest real part and then by positive imaginary part.
fn dominant_index(eigs: &[Complex64]) -> usize {
    let max_mod = eigs.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let threshold = max_mod * (1.0 - MODULUS_TIE_RTOL);
    let mut best: Option<usize> = None;
    for (i, z) in eigs.iter().enumerate() {
        if z.norm() < threshold {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(b) => {
                let zb = eigs[b];
                let better = z.re > zb.re || (z.re == zb.re && z.im > zb.im);
                Some(if better { i } else { b })
            }
        };
    }
    best.expect("non-empty spectrum")
}

/// Locates the Schur block holding `target` and returns `(block, λ)`, where `λ`
/// is the block's own eigenvalue closest to `target`.
fn block_for(schur: &RealSchur, target: Complex64) -> (SchurBlock, Complex64) {
    let mut best = None;
    let mut best_dist = f64::INFINITY;
    for block in schur.blocks() {
        let candidates = match block {
            SchurBlock::Single(i) => vec![Complex64::new(schur.r[(i, i)], 0.0)],
            SchurBlock::Pair(i) => {
                let (a, b) = pair_eigenvalues(&schur.r, i);
                vec![a, b]
            }
        };
        for lam in candidates {
            let d = (lam - target).norm();
            if d < best_dist {
                best_dist = d;
                best = Some((block, lam));
            }
        }
    }
    best.expect("non-empty Schur form")
}

/// Right eigenvector of the quasi-triangular factor for eigenvalue `lam` of
/// `block`, by back-substitution; rotated back by `Q` and normalized.
fn schur_eigenvector(schur: &RealSchur, block: SchurBlock, lam: Complex64) -> Vec<Complex64> {
    let r = &schur.r;
    let n = r.rows();
    let smin = (f64::EPSILON * r.max_abs()).max(f64::MIN_POSITIVE * 1e3);
    let mut y = vec![Complex64::new(0.0, 0.0); n];
    let top = match block {
        SchurBlock::Single(k) => {
            y[k] = Complex64::new(1.0, 0.0);
            k
        }
        SchurBlock::Pair(k) => {
            let a = r[(k, k)];
            let b = r[(k, k + 1)];
            y[k] = Complex64::new(b, 0.0);
            y[k + 1] = lam - a;
            k
        }
    };
    let protect = |d: Complex64| if d.norm() < smin { Complex64::new(smin, 0.0) } else { d };
    let mut i = top;
    while i > 0 {
        let hi = i - 1;
        let is_pair = hi > 0 && r[(hi, hi - 1)] != 0.0;
        let rhs = |row: usize, y: &[Complex64]| -> Complex64 {
            (row + 1..n).fold(Complex64::new(0.0, 0.0), |acc, j| {
                if j <= hi {
                    acc
                } else {
                    acc + y[j] * r[(row, j)]
                }
            })
        };
        if is_pair {
            let lo = hi - 1;
            let r0 = -rhs(lo, &y);
            let r1 = -rhs(hi, &y);
            let a11 = r[(lo, lo)] - lam;
            let a12 = Complex64::new(r[(lo, hi)], 0.0);
            let a21 = Complex64::new(r[(hi, lo)], 0.0);
            let a22 = r[(hi, hi)] - lam;
            let det = protect(a11 * a22 - a12 * a21);
            y[lo] = (r0 * a22 - a12 * r1) / det;
            y[hi] = (a11 * r1 - a21 * r0) / det;
            i = lo;
        } else {
            let d = protect(r[(hi, hi)] - lam);
            y[hi] = -rhs(hi, &y) / d;
            i = hi;
        }
        // Rescale to keep the partial solution bounded.
        let big = y.iter().fold(0.0f64, |m, z| m.max(z.norm()));
        if big > 1e100 {
            for z in &mut y {
                *z /= big;
            }
        }
    }
    let mut u: Vec<Complex64> = (0..n)
        .map(|row| (0..n).fold(Complex64::new(0.0, 0.0), |acc, j| acc + y[j] * schur.q[(row, j)]))
        .collect();
    let norm = u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    for z in &mut u {
        *z /= norm;
    }
    u
}

fn derivative_matrices(
    alpha: f64,
    beta: f64,
    u: &ComplexVector,
    v: &ComplexVector,
) -> (DenseMatrix, DenseMatrix, DenseMatrix, f64) {
    let n = u.len();
    let uc = u.to_complex();
    let vc = v.to_complex();
    let vstar_u = vc.iter().zip(&uc).fold(Complex64::new(0.0, 0.0), |acc, (vi, ui)| acc + vi.conj() * ui);
    let defect_score = vstar_u.norm() / (u.norm() * v.norm());
    let mut s_re = DenseMatrix::zeros(n, n);
    let mut s_im = DenseMatrix::zeros(n, n);
    let mut c = DenseMatrix::zeros(n, n);
    if vstar_u.norm() == 0.0 {
        return (s_re, s_im, c, 0.0);
    }
    for i in 0..n {
        let vi = vc[i].conj() / vstar_u;
        for j in 0..n {
            let s = vi * uc[j];
            s_re[(i, j)] = s.re;
            s_im[(i, j)] = s.im;
            c[(i, j)] = alpha * s.re + beta * s.im;
        }
    }
    if !(s_re.is_finite() && s_im.is_finite() && c.is_finite()) {
        return (DenseMatrix::zeros(n, n), DenseMatrix::zeros(n, n), DenseMatrix::zeros(n, n), 0.0);
    }
    (s_re, s_im, c, defect_score)
}

/// Dominant eigenvalue with right/left eigenvectors and derivative data.
///
/// The right eigenvector comes from the Schur form of `T`; the left one is the
/// right eigenvector of `Tᵀ` (also via its Schur form), since `v* T = λ v*` is
/// `Tᵀ v̄ = λ v̄`.
pub fn dominant_eigenpair(t: &DenseMatrix) -> Result<DominantEigenData> {
    if !t.is_square() {
        return Err(Error::contract("dominant_eigenpair: matrix must be square"));
    }
    if t.rows() == 0 {
        return Err(Error::contract("dominant_eigenpair: empty matrix"));
    }
    let schur = real_schur(t)?;
    let eigs = schur.eigenvalues();
    let lam = eigs[dominant_index(&eigs)];
    let (block, lam) = block_for(&schur, lam);
    let u = schur_eigenvector(&schur, block, lam);

    let schur_t = real_schur(&t.transpose())?;
    let (block_t, lam_t) = block_for(&schur_t, lam);
    let v_bar = schur_eigenvector(&schur_t, block_t, lam_t);
    let v: Vec<Complex64> = v_bar.iter().map(|z| z.conj()).collect();

    let u = ComplexVector::from_complex(&u);
    let v = ComplexVector::from_complex(&v);
    let (alpha, beta) = (lam.re, lam.im);
    let (s_re, s_im, c, defect_score) = derivative_matrices(alpha, beta, &u, &v);
    Ok(DominantEigenData { rho: lam.norm(), alpha, beta, u, v, s_re, s_im, c, defect_score })
}
