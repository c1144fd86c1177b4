use num_complex::Complex64;

use crate::error::Result;
use crate::linalg::eigenvalues;
use crate::params::EigenNormBlock;

/// Spectrum of the effective short-state matrix, by descending modulus
/// (conjugate pairs with the positive imaginary part first).
pub fn spectrum_dump(block: &EigenNormBlock) -> Result<Vec<Complex64>> {
    let mut eig = eigenvalues(block.w())?;
    eig.sort_by(|a, b| b.norm().total_cmp(&a.norm()).then(b.im.total_cmp(&a.im)));
    Ok(eig)
}

pub fn spectrum_csv(eig: &[Complex64]) -> String {
    let mut out = String::from("re,im,modulus\n");
    for z in eig {
        out.push_str(&format!("{},{},{}\n", z.re, z.im, z.norm()));
    }
    out
}
