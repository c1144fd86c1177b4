use std::f64::consts::FRAC_PI_2;

use rand::Rng;

use crate::linalg::DenseMatrix;

/// Sampled parameters of a block-diagonal scaled-rotation matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct RotationBlockInit {
    /// Rotation angles, one per 2×2 block, in `[0, π/2)`.
    pub thetas: Vec<f64>,
    /// Block scales in `[-1, 1)`, one per 2×2 block.
    pub gammas: Vec<f64>,
    /// Value of the trailing 1×1 block for odd sizes.
    pub tail: Option<f64>,
}

impl RotationBlockInit {
    pub fn sample<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let pairs = n / 2;
        let mut thetas = Vec::with_capacity(pairs);
        let mut gammas = Vec::with_capacity(pairs);
        for _ in 0..pairs {
            thetas.push(rng.gen_range(0.0..FRAC_PI_2));
            gammas.push(rng.gen_range(-1.0..1.0));
        }
        let tail = (n % 2 == 1).then(|| rng.gen_range(-1.0..1.0));
        Self { thetas, gammas, tail }
    }

    pub fn size(&self) -> usize {
        2 * self.thetas.len() + usize::from(self.tail.is_some())
    }

    pub fn to_matrix(&self) -> DenseMatrix {
        let n = self.size();
        let mut m = DenseMatrix::zeros(n, n);
        for (j, (&t, &g)) in self.thetas.iter().zip(&self.gammas).enumerate() {
            let k = 2 * j;
            m[(k, k)] = g * t.cos();
            m[(k, k + 1)] = -g * t.sin();
            m[(k + 1, k)] = g * t.sin();
            m[(k + 1, k + 1)] = g * t.cos();
        }
        if let Some(g) = self.tail {
            m[(n - 1, n - 1)] = g;
        }
        m
    }

    /// The eigenvalues `γ_j e^{±i t_j}` (and the trailing `γ`), as `(re, im)` pairs.
    pub fn eigenvalues(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.size());
        for (&t, &g) in self.thetas.iter().zip(&self.gammas) {
            out.push((g * t.cos(), g * t.sin()));
            out.push((g * t.cos(), -g * t.sin()));
        }
        if let Some(g) = self.tail {
            out.push((g, 0.0));
        }
        out
    }
}

/// Block-diagonal matrix of 2×2 scaled rotations with eigenvalues spread over the unit disc.
pub fn init_rotation_blocks<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DenseMatrix {
    RotationBlockInit::sample(n, rng).to_matrix()
}

/// Glorot/Xavier uniform: entries drawn from `U[-s, s]`, `s = √(6 / (rows + cols))`.
pub fn glorot_uniform<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DenseMatrix {
    if rows == 0 || cols == 0 {
        return DenseMatrix::zeros(rows, cols);
    }
    let s = (6.0 / (rows + cols) as f64).sqrt();
    DenseMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-s..=s))
}
