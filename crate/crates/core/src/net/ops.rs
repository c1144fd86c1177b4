//! Batched dense kernels shared by the recurrent cells.

use crate::linalg::DenseMatrix;

/// `acc += aᵀ b` for `a: r×i`, `b: r×j`, accumulating over rows in order.
pub(crate) fn add_at_b(acc: &mut DenseMatrix, a: &DenseMatrix, b: &DenseMatrix) {
    debug_assert_eq!(a.rows(), b.rows());
    debug_assert_eq!(acc.shape(), (a.cols(), b.cols()));
    let m = b.cols();
    let data = acc.data_mut();
    for r in 0..a.rows() {
        let brow = b.row(r);
        for (i, &ari) in a.row(r).iter().enumerate() {
            if ari == 0.0 {
                continue;
            }
            for (o, &bj) in data[i * m..(i + 1) * m].iter_mut().zip(brow) {
                *o += ari * bj;
            }
        }
    }
}

/// `acc += Σ_rows a`.
pub(crate) fn add_colsum(acc: &mut [f64], a: &DenseMatrix) {
    debug_assert_eq!(acc.len(), a.cols());
    for r in 0..a.rows() {
        for (o, v) in acc.iter_mut().zip(a.row(r)) {
            *o += v;
        }
    }
}

/// `acc += a` entrywise.
pub(crate) fn add_assign(acc: &mut DenseMatrix, a: &DenseMatrix) {
    debug_assert_eq!(acc.shape(), a.shape());
    for (o, v) in acc.data_mut().iter_mut().zip(a.data()) {
        *o += v;
    }
}

/// Adds `bias` to every row.
pub(crate) fn add_row_bias(a: &mut DenseMatrix, bias: &[f64]) {
    let cols = a.cols();
    for row in a.data_mut().chunks_mut(cols.max(1)) {
        for (o, b) in row.iter_mut().zip(bias) {
            *o += b;
        }
    }
}

/// Global L2 norm over a set of gradient slices.
pub fn global_norm<'a>(parts: impl IntoIterator<Item = &'a [f64]>) -> f64 {
    parts.into_iter().flat_map(|p| p.iter()).map(|x| x * x).sum::<f64>().sqrt()
}

/// Rescales all slices so their joint L2 norm is at most `threshold`; returns the norm before clipping.
pub fn clip_global_norm(parts: &mut [&mut [f64]], threshold: f64) -> f64 {
    let norm = global_norm(parts.iter().map(|p| &**p));
    if norm > threshold && norm > 0.0 {
        let s = threshold / norm;
        for p in parts.iter_mut() {
            p.iter_mut().for_each(|x| *x *= s);
        }
    }
    norm
}
