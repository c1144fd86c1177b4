//! Real Schur decomposition `T = Q R Qᵀ`.
//!
//! Householder reduction to upper Hessenberg form, followed by the Francis
//! implicit double-shift QR iteration with deflation (EISPACK `hqr2` layout,
//! Schur-vector accumulation only). Real 2×2 blocks are split by a plane
//! rotation so every remaining 2×2 diagonal block carries a complex pair.

use num_complex::Complex64;

use super::matrix::DenseMatrix;
use crate::error::{Error, Result};

/// Quasi-upper-triangular factorization of a real square matrix.
#[derive(Clone, Debug)]
pub struct RealSchur {
    /// Orthogonal Schur vectors.
    pub q: DenseMatrix,
    /// Quasi-upper-triangular factor with 1×1 and 2×2 diagonal blocks.
    pub r: DenseMatrix,
}

/// A diagonal block of the Schur factor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SchurBlock {
    Single(usize),
    /// Starting index of a 2×2 block with a complex-conjugate eigenvalue pair.
    Pair(usize),
}

impl RealSchur {
    pub fn blocks(&self) -> Vec<SchurBlock> {
        schur_blocks(&self.r)
    }

    /// Eigenvalues in block order; conjugate pairs listed positive-imaginary first.
    pub fn eigenvalues(&self) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.r.rows());
        for block in self.blocks() {
            match block {
                SchurBlock::Single(i) => out.push(Complex64::new(self.r[(i, i)], 0.0)),
                SchurBlock::Pair(i) => {
                    let (lam, _) = pair_eigenvalues(&self.r, i);
                    out.push(lam);
                    out.push(lam.conj());
                }
            }
        }
        out
    }
}

pub(crate) fn schur_blocks(r: &DenseMatrix) -> Vec<SchurBlock> {
    let n = r.rows();
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && r[(i + 1, i)] != 0.0 {
            blocks.push(SchurBlock::Pair(i));
            i += 2;
        } else {
            blocks.push(SchurBlock::Single(i));
            i += 1;
        }
    }
    blocks
}

/// Eigenvalues of the 2×2 block at `(i, i)`, returned as `(λ, λ̄)` with `Im λ ≥ 0`.
pub(crate) fn pair_eigenvalues(r: &DenseMatrix, i: usize) -> (Complex64, Complex64) {
    let (a, b, c, d) = (r[(i, i)], r[(i, i + 1)], r[(i + 1, i)], r[(i + 1, i + 1)]);
    let p = 0.5 * (a - d);
    let disc = p * p + b * c;
    let mid = 0.5 * (a + d);
    let im = (-disc).max(0.0).sqrt();
    (Complex64::new(mid, im), Complex64::new(mid, -im))
}

/// Computes the real Schur decomposition of a square finite matrix.
///
/// The QR sweep budget is `30·n` iterations in total; exceeding it returns a
/// solver failure carrying the size of the last undeflated subdiagonal entry.
pub fn real_schur(t: &DenseMatrix) -> Result<RealSchur> {
    if !t.is_square() {
        return Err(Error::contract(format!("real_schur: matrix is {}x{}", t.rows(), t.cols())));
    }
    if !t.is_finite() {
        return Err(Error::NonFinite("real_schur input"));
    }
    let n = t.rows();
    let mut h = t.clone();
    let mut q = DenseMatrix::identity(n);
    hessenberg(&mut h, &mut q);
    francis_qr(&mut h, &mut q)?;
    for i in 0..n {
        for j in 0..i.saturating_sub(1) {
            h[(i, j)] = 0.0;
        }
    }
    Ok(RealSchur { q, r: h })
}

fn hessenberg(h: &mut DenseMatrix, q: &mut DenseMatrix) {
    let n = h.rows();
    if n < 3 {
        return;
    }
    let mut v = vec![0.0; n];
    for k in 0..n - 2 {
        let len = n - k - 1;
        let x_norm = (k + 1..n).map(|i| h[(i, k)] * h[(i, k)]).sum::<f64>().sqrt();
        if x_norm == 0.0 {
            continue;
        }
        let x0 = h[(k + 1, k)];
        let alpha = if x0 >= 0.0 { -x_norm } else { x_norm };
        for (idx, i) in (k + 1..n).enumerate() {
            v[idx] = h[(i, k)];
        }
        v[0] -= alpha;
        let v_norm = v[..len].iter().map(|x| x * x).sum::<f64>().sqrt();
        if v_norm == 0.0 {
            continue;
        }
        for x in &mut v[..len] {
            *x /= v_norm;
        }
        // H <- P H
        for j in 0..n {
            let dot: f64 = (0..len).map(|idx| v[idx] * h[(k + 1 + idx, j)]).sum();
            for idx in 0..len {
                h[(k + 1 + idx, j)] -= 2.0 * v[idx] * dot;
            }
        }
        // H <- H P and Q <- Q P
        for m in [&mut *h, &mut *q] {
            for i in 0..n {
                let dot: f64 = (0..len).map(|idx| m[(i, k + 1 + idx)] * v[idx]).sum();
                for idx in 0..len {
                    m[(i, k + 1 + idx)] -= 2.0 * dot * v[idx];
                }
            }
        }
        h[(k + 1, k)] = alpha;
        for i in k + 2..n {
            h[(i, k)] = 0.0;
        }
    }
}

#[allow(clippy::many_single_char_names)]
fn francis_qr(h: &mut DenseMatrix, v: &mut DenseMatrix) -> Result<()> {
    let nn = h.rows();
    if nn == 0 {
        return Ok(());
    }
    let low = 0usize;
    let eps = f64::EPSILON;
    let budget = 30 * nn;
    let mut total_iter = 0usize;
    let mut exshift = 0.0;
    let (mut p, mut q, mut r, mut s, mut z): (f64, f64, f64, f64, f64);
    let (mut w, mut x, mut y);

    let mut norm = 0.0;
    for i in 0..nn {
        for j in i.saturating_sub(1)..nn {
            norm += h[(i, j)].abs();
        }
    }

    let mut n = nn as isize - 1;
    let mut iter = 0;
    while n >= low as isize {
        let nu = n as usize;
        // Look for a single small subdiagonal element.
        let mut l = nu;
        while l > low {
            s = h[(l - 1, l - 1)].abs() + h[(l, l)].abs();
            if s == 0.0 {
                s = norm;
            }
            if h[(l, l - 1)].abs() <= eps * s {
                break;
            }
            l -= 1;
        }
        if l > low {
            h[(l, l - 1)] = 0.0;
        }

        if l == nu {
            h[(nu, nu)] += exshift;
            n -= 1;
            iter = 0;
        } else if l + 1 == nu {
            w = h[(nu, nu - 1)] * h[(nu - 1, nu)];
            p = (h[(nu - 1, nu - 1)] - h[(nu, nu)]) / 2.0;
            q = p * p + w;
            z = q.abs().sqrt();
            h[(nu, nu)] += exshift;
            h[(nu - 1, nu - 1)] += exshift;
            if q >= 0.0 {
                // Real pair: rotate the block to upper-triangular form.
                z = if p >= 0.0 { p + z } else { p - z };
                x = h[(nu, nu - 1)];
                s = x.abs() + z.abs();
                p = x / s;
                q = z / s;
                r = (p * p + q * q).sqrt();
                p /= r;
                q /= r;
                for j in nu - 1..nn {
                    z = h[(nu - 1, j)];
                    h[(nu - 1, j)] = q * z + p * h[(nu, j)];
                    h[(nu, j)] = q * h[(nu, j)] - p * z;
                }
                for i in 0..=nu {
                    z = h[(i, nu - 1)];
                    h[(i, nu - 1)] = q * z + p * h[(i, nu)];
                    h[(i, nu)] = q * h[(i, nu)] - p * z;
                }
                for i in 0..nn {
                    z = v[(i, nu - 1)];
                    v[(i, nu - 1)] = q * z + p * v[(i, nu)];
                    v[(i, nu)] = q * v[(i, nu)] - p * z;
                }
                h[(nu, nu - 1)] = 0.0;
            }
            n -= 2;
            iter = 0;
        } else {
            total_iter += 1;
            if total_iter > budget {
                return Err(Error::SolverFailure {
                    solver: "real Schur QR iteration",
                    residual: h[(nu, nu - 1)].abs(),
                });
            }
            x = h[(nu, nu)];
            y = 0.0;
            w = 0.0;
            if l < nu {
                y = h[(nu - 1, nu - 1)];
                w = h[(nu, nu - 1)] * h[(nu - 1, nu)];
            }
            // Exceptional shifts.
            if iter == 10 {
                exshift += x;
                for i in low..=nu {
                    h[(i, i)] -= x;
                }
                s = h[(nu, nu - 1)].abs() + h[(nu - 1, nu - 2)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            if iter == 30 {
                s = (y - x) / 2.0;
                s = s * s + w;
                if s > 0.0 {
                    s = s.sqrt();
                    if y < x {
                        s = -s;
                    }
                    s = x - w / ((y - x) / 2.0 + s);
                    for i in low..=nu {
                        h[(i, i)] -= s;
                    }
                    exshift += s;
                    x = 0.964;
                    y = x;
                    w = x;
                }
            }
            iter += 1;

            // Look for two consecutive small subdiagonal elements.
            let mut m = nu - 2;
            loop {
                z = h[(m, m)];
                r = x - z;
                s = y - z;
                p = (r * s - w) / h[(m + 1, m)] + h[(m, m + 1)];
                q = h[(m + 1, m + 1)] - z - r - s;
                r = h[(m + 2, m + 1)];
                s = p.abs() + q.abs() + r.abs();
                if s != 0.0 {
                    p /= s;
                    q /= s;
                    r /= s;
                }
                if m == l {
                    break;
                }
                if h[(m, m - 1)].abs() * (q.abs() + r.abs())
                    < eps * (p.abs() * (h[(m - 1, m - 1)].abs() + z.abs() + h[(m + 1, m + 1)].abs()))
                {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=nu {
                h[(i, i - 2)] = 0.0;
                if i > m + 2 {
                    h[(i, i - 3)] = 0.0;
                }
            }

            // Double QR step on rows l..=n and columns m..=n.
            for k in m..nu {
                let notlast = k != nu - 1;
                if k != m {
                    p = h[(k, k - 1)];
                    q = h[(k + 1, k - 1)];
                    r = if notlast { h[(k + 2, k - 1)] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x == 0.0 {
                        continue;
                    }
                    p /= x;
                    q /= x;
                    r /= x;
                }
                s = (p * p + q * q + r * r).sqrt();
                if p < 0.0 {
                    s = -s;
                }
                if s != 0.0 {
                    if k != m {
                        h[(k, k - 1)] = -s * x;
                    } else if l != m {
                        h[(k, k - 1)] = -h[(k, k - 1)];
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;

                    for j in k..nn {
                        p = h[(k, j)] + q * h[(k + 1, j)];
                        if notlast {
                            p += r * h[(k + 2, j)];
                            h[(k + 2, j)] -= p * z;
                        }
                        h[(k, j)] -= p * x;
                        h[(k + 1, j)] -= p * y;
                    }
                    for i in 0..=nu.min(k + 3) {
                        p = x * h[(i, k)] + y * h[(i, k + 1)];
                        if notlast {
                            p += z * h[(i, k + 2)];
                            h[(i, k + 2)] -= p * r;
                        }
                        h[(i, k)] -= p;
                        h[(i, k + 1)] -= p * q;
                    }
                    for i in 0..nn {
                        p = x * v[(i, k)] + y * v[(i, k + 1)];
                        if notlast {
                            p += z * v[(i, k + 2)];
                            v[(i, k + 2)] -= p * r;
                        }
                        v[(i, k)] -= p;
                        v[(i, k + 1)] -= p * q;
                    }
                }
            }
        }
    }
    Ok(())
}
