use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{matmul, solve, DenseMatrix};

/// Orthogonal long-term matrix `W = (I + A)⁻¹(I − A)·D` with `A` skew-symmetric.
///
/// Only the strict upper triangle of `A` is stored, row by row.
#[derive(Clone, Debug)]
pub struct CayleyOrthogonalBlock {
    n: usize,
    upper: Vec<f64>,
    d: Vec<f64>,
    w: DenseMatrix,
}

/// Number of free entries of an `n × n` skew-symmetric matrix.
pub fn upper_len(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

impl CayleyOrthogonalBlock {
    /// `upper` holds `A_ij` for `i < j` in row-major order; `d` holds ±1 signs.
    pub fn new(upper: Vec<f64>, d: Vec<f64>) -> Result<Self> {
        let n = d.len();
        if upper.len() != upper_len(n) {
            return Err(Error::contract("CayleyOrthogonalBlock: upper-triangle length mismatch"));
        }
        if d.iter().any(|&s| s != 1.0 && s != -1.0) {
            return Err(Error::contract("CayleyOrthogonalBlock: D entries must be ±1"));
        }
        if upper.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("CayleyOrthogonalBlock A"));
        }
        let mut block = Self { n, upper, d, w: DenseMatrix::zeros(n, n) };
        block.w = block.cayley_forward()?;
        Ok(block)
    }

    /// Random initialization: `A` block-diagonal with 2×2 blocks `[[0, s], [−s, 0]]`,
    /// `s = √((1 − cos t)/(1 + cos t))`, `t ~ U[0, π/2]`, and the first `neg_ones`
    /// entries of `D` set to −1.
    pub fn init<R: Rng + ?Sized>(n: usize, neg_ones: usize, rng: &mut R) -> Result<Self> {
        if neg_ones > n {
            return Err(Error::contract("CayleyOrthogonalBlock: more −1 entries than dimensions"));
        }
        let mut a = DenseMatrix::zeros(n, n);
        for k in (0..n.saturating_sub(1)).step_by(2) {
            let t: f64 = rng.gen_range(0.0..=std::f64::consts::FRAC_PI_2);
            let s = ((1.0 - t.cos()) / (1.0 + t.cos())).sqrt();
            a[(k, k + 1)] = s;
            a[(k + 1, k)] = -s;
        }
        let d = (0..n).map(|i| if i < neg_ones { -1.0 } else { 1.0 }).collect();
        Self::new(upper_of(&a), d)
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn w(&self) -> &DenseMatrix {
        &self.w
    }

    /// The skew-symmetric `A` materialized from its upper triangle.
    pub fn a(&self) -> DenseMatrix {
        let mut a = DenseMatrix::zeros(self.n, self.n);
        let mut k = 0;
        for i in 0..self.n {
            for j in i + 1..self.n {
                a[(i, j)] = self.upper[k];
                a[(j, i)] = -self.upper[k];
                k += 1;
            }
        }
        a
    }

    fn d_matrix(&self) -> DenseMatrix {
        DenseMatrix::diag(&self.d)
    }

    pub fn cayley_forward(&self) -> Result<DenseMatrix> {
        let a = self.a();
        let eye = DenseMatrix::identity(self.n);
        let rhs = matmul(&eye.sub(&a)?, &self.d_matrix())?;
        solve(&eye.add(&a)?, &rhs)
    }

    /// Skew part `(M − Mᵀ)/2` of `M = −(I + A)⁻ᵀ G (W + D)ᵀ`.
    pub fn cayley_gradient(&self, dl_dw: &DenseMatrix) -> Result<DenseMatrix> {
        let m = self.full_gradient(dl_dw)?;
        let mt = m.transpose();
        Ok(m.sub(&mt)?.scale(0.5))
    }

    /// Gradient with respect to the stored upper-triangle parameters, `M_ij − M_ji`.
    pub fn upper_gradient(&self, dl_dw: &DenseMatrix) -> Result<Vec<f64>> {
        let m = self.full_gradient(dl_dw)?;
        Ok(upper_of(&m.sub(&m.transpose())?))
    }

    fn full_gradient(&self, dl_dw: &DenseMatrix) -> Result<DenseMatrix> {
        if dl_dw.shape() != (self.n, self.n) {
            return Err(Error::contract("cayley_gradient: gradient shape mismatch"));
        }
        let a = self.a();
        let eye = DenseMatrix::identity(self.n);
        let wd = self.w.add(&self.d_matrix())?;
        let rhs = matmul(dl_dw, &wd.transpose())?;
        Ok(solve(&eye.sub(&a)?, &rhs)?.scale(-1.0))
    }

    /// One optimizer step on the upper-triangle parameters, then recompute `W`.
    pub fn update_step(&mut self, dl_dw: &DenseMatrix, mut apply: impl FnMut(&mut [f64], &[f64])) -> Result<()> {
        let grad = self.upper_gradient(dl_dw)?;
        apply(&mut self.upper, &grad);
        if self.upper.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("CayleyOrthogonalBlock A"));
        }
        self.w = self.cayley_forward()?;
        Ok(())
    }
}

/// Strict upper triangle of a square matrix, row by row.
pub fn upper_of(m: &DenseMatrix) -> Vec<f64> {
    let n = m.rows();
    let mut out = Vec::with_capacity(upper_len(n));
    for i in 0..n {
        for j in i + 1..n {
            out.push(m[(i, j)]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn orthogonality_residual(w: &DenseMatrix) -> f64 {
        let n = w.rows();
        matmul(&w.transpose(), w).unwrap().sub(&DenseMatrix::identity(n)).unwrap().frobenius_norm()
    }

    fn random_block(n: usize, rng: &mut ChaCha8Rng) -> CayleyOrthogonalBlock {
        let upper = (0..upper_len(n)).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let d = (0..n).map(|_| if rng.gen_bool(0.5) { -1.0 } else { 1.0 }).collect();
        CayleyOrthogonalBlock::new(upper, d).unwrap()
    }

    #[test]
    fn zero_a_gives_identity() {
        let b = CayleyOrthogonalBlock::new(vec![0.0; 6], vec![1.0; 4]).unwrap();
        assert_eq!(b.w(), &DenseMatrix::identity(4));
    }

    #[test]
    fn two_by_two_is_rotation() {
        let a = 0.4f64;
        let b = CayleyOrthogonalBlock::new(vec![a], vec![1.0, 1.0]).unwrap();
        let k = 1.0 / (1.0 + a * a);
        let direct = DenseMatrix::from_rows(&[&[(1.0 - a * a) * k, -2.0 * a * k], &[2.0 * a * k, (1.0 - a * a) * k]]);
        assert!(b.w().sub(&direct).unwrap().max_abs() < 1e-15);
        // clockwise rotation by 2·atan(a)
        let phi = 2.0 * a.atan();
        let cw = DenseMatrix::from_rows(&[&[phi.cos(), phi.sin()], &[-phi.sin(), phi.cos()]]);
        assert!(b.w().transpose().sub(&cw).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn random_blocks_are_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for n in 1..20 {
            let b = random_block(n, &mut rng);
            assert!(orthogonality_residual(b.w()) <= 1e-10);
            let a = b.a();
            assert_eq!(a, a.transpose().scale(-1.0));
        }
        for neg in [0, 3, 5, 10] {
            let b = CayleyOrthogonalBlock::init(10, neg, &mut rng).unwrap();
            assert_eq!(b.d().iter().filter(|&&s| s < 0.0).count(), neg);
            assert!(orthogonality_residual(b.w()) <= 1e-10);
        }
    }

    fn fd_relative_error(b: &CayleyOrthogonalBlock, g: &DenseMatrix, h: f64) -> f64 {
        let analytic = b.upper_gradient(g).unwrap();
        let loss = |upper: Vec<f64>| {
            let blk = CayleyOrthogonalBlock::new(upper, b.d().to_vec()).unwrap();
            blk.w().hadamard(g).unwrap().sum()
        };
        let mut err = 0.0f64;
        let mut scale = 0.0f64;
        for k in 0..analytic.len() {
            let mut p = b.upper().to_vec();
            p[k] += h;
            let mut m = b.upper().to_vec();
            m[k] -= h;
            let numeric = (loss(p) - loss(m)) / (2.0 * h);
            err = err.max((numeric - analytic[k]).abs());
            scale = scale.max(numeric.abs()).max(analytic[k].abs());
        }
        err / scale
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = DenseMatrix::from_fn(4, 4, |_, _| rng.gen_range(-1.0..1.0));
        let b = CayleyOrthogonalBlock::new(vec![0.0; 6], vec![1.0; 4]).unwrap();
        assert!(fd_relative_error(&b, &g, 1e-6) <= 1e-5);

        for _ in 0..5 {
            let b = random_block(6, &mut rng);
            let g = DenseMatrix::from_fn(6, 6, |_, _| rng.gen_range(-1.0..1.0));
            assert!(fd_relative_error(&b, &g, 1e-6) <= 1e-5);
        }
    }

    #[test]
    fn skew_gradient_relation() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let b = random_block(5, &mut rng);
        let g = DenseMatrix::from_fn(5, 5, |_, _| rng.gen_range(-1.0..1.0));
        let k = b.cayley_gradient(&g).unwrap();
        assert_eq!(k, k.transpose().scale(-1.0));
        let up = b.upper_gradient(&g).unwrap();
        let twice: Vec<f64> = upper_of(&k).iter().map(|x| 2.0 * x).collect();
        for (a, c) in up.iter().zip(&twice) {
            assert!((a - c).abs() < 1e-14);
        }
        assert_eq!(b.cayley_gradient(&DenseMatrix::zeros(5, 5)).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn update_keeps_orthogonality() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut b = CayleyOrthogonalBlock::init(8, 4, &mut rng).unwrap();
        for _ in 0..20 {
            let g = DenseMatrix::from_fn(8, 8, |_, _| rng.gen_range(-1.0..1.0));
            b.update_step(&g, |p, d| p.iter_mut().zip(d).for_each(|(x, y)| *x -= 0.05 * y)).unwrap();
            assert!(orthogonality_residual(b.w()) <= 1e-10);
        }
    }
}
