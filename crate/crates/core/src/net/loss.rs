use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Mean squared error over all entries, with its gradient.
pub fn loss_mse_terminal(y: &DenseMatrix, target: &DenseMatrix) -> Result<(f64, DenseMatrix)> {
    if y.shape() != target.shape() {
        return Err(Error::contract("loss_mse_terminal: shape mismatch"));
    }
    let count = y.data().len().max(1) as f64;
    let diff = y.sub(target)?;
    let loss = diff.data().iter().map(|d| d * d).sum::<f64>() / count;
    Ok((loss, diff.scale(2.0 / count)))
}

/// Softmax cross-entropy averaged over unmasked (example, step) positions.
///
/// `logits[t]` is `batch × classes`; `targets[b][t]` are class indices; `mask[b][t]`
/// selects scored positions (all positions when absent).
pub fn loss_xent_sequence(
    logits: &[DenseMatrix],
    targets: &[Vec<usize>],
    mask: Option<&[Vec<bool>]>,
) -> Result<(f64, Vec<DenseMatrix>)> {
    let steps = logits.len();
    let (batch, classes) = logits.first().map(|m| m.shape()).unwrap_or((0, 0));
    if logits.iter().any(|m| m.shape() != (batch, classes)) || targets.len() != batch {
        return Err(Error::contract("loss_xent_sequence: inconsistent shapes"));
    }
    if targets.iter().any(|row| row.len() != steps) {
        return Err(Error::contract("loss_xent_sequence: target length mismatch"));
    }
    if let Some(m) = mask {
        if m.len() != batch || m.iter().any(|row| row.len() != steps) {
            return Err(Error::contract("loss_xent_sequence: mask shape mismatch"));
        }
    }
    if targets.iter().flatten().any(|&c| c >= classes) {
        return Err(Error::contract("loss_xent_sequence: class index out of range"));
    }
    let scored = |b: usize, t: usize| mask.map_or(true, |m| m[b][t]);
    let count = (0..batch).flat_map(|b| (0..steps).map(move |t| (b, t))).filter(|&(b, t)| scored(b, t)).count();
    let mut grads: Vec<DenseMatrix> = (0..steps).map(|_| DenseMatrix::zeros(batch, classes)).collect();
    if count == 0 {
        return Ok((0.0, grads));
    }
    let inv = 1.0 / count as f64;
    let mut loss = 0.0;
    for (t, (z, g)) in logits.iter().zip(grads.iter_mut()).enumerate() {
        for b in 0..batch {
            if !scored(b, t) {
                continue;
            }
            let row = z.row(b);
            let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let log_norm = max + sum.ln();
            let target = targets[b][t];
            loss += log_norm - row[target];
            for k in 0..classes {
                let p = (row[k] - log_norm).exp();
                g[(b, k)] = (p - f64::from(u8::from(k == target))) * inv;
            }
        }
    }
    let loss = loss * inv;
    if !loss.is_finite() {
        return Err(Error::NonFinite("cross-entropy loss"));
    }
    Ok((loss, grads))
}
