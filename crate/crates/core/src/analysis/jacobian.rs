use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, matmul, power_iteration_psd, DenseMatrix, SPECTRAL_NORM_MAX_ITER};
use crate::net::{sequence_forward, Activation, EnrnnParams, EnrnnTensors, ForwardTape, OutputMode, SequenceBatch};

/// Relative eigen-residual at which Jacobian block norms stop iterating.
pub const JACOBIAN_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StateBlock {
    Short,
    Long,
}

/// Square grid of Jacobian norms: entry `(τ, t)` is `‖∂h_τ/∂x_t‖₂` for one state
/// block, zero for `τ < t`.
#[derive(Clone, Debug, PartialEq)]
pub struct HeatmapGrid {
    pub values: DenseMatrix,
    pub which: StateBlock,
}

impl HeatmapGrid {
    pub fn steps(&self) -> usize {
        self.values.rows()
    }

    pub fn get(&self, tau: usize, t: usize) -> f64 {
        self.values[(tau, t)]
    }

    /// Largest entry at lag `τ − t = lag`.
    pub fn lag_max(&self, lag: usize) -> f64 {
        (0..self.steps().saturating_sub(lag)).fold(0.0, |m, t| m.max(self.get(t + lag, t)))
    }

    /// Square CSV: one line per `τ`, one column per `t`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for tau in 0..self.steps() {
            let row: Vec<String> = self.values.row(tau).iter().map(f64::to_string).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Multiplies row `i` of `m` by `mask[i]`.
fn scale_rows(m: &mut DenseMatrix, mask: &[f64]) {
    let cols = m.cols();
    for (row, &s) in m.data_mut().chunks_mut(cols.max(1)).zip(mask) {
        row.iter_mut().for_each(|x| *x *= s);
    }
}

/// Activation slopes `∂h/∂z` of example `b` at one step.
fn slopes(act: Activation, z: &DenseMatrix, bias: &[f64], b: usize) -> Vec<f64> {
    z.row(b).iter().zip(bias).map(|(&zj, &bj)| act.derivatives(zj, bj).0).collect()
}

/// Largest singular value of `j`, by power iteration on the smaller Gram operator.
pub(crate) fn block_norm(j: &DenseMatrix) -> Result<f64> {
    if j.rows() == 0 || j.cols() == 0 || j.max_abs() == 0.0 {
        return Ok(0.0);
    }
    let mu = if j.cols() <= j.rows() {
        power_iteration_psd(j.cols(), JACOBIAN_TOL, SPECTRAL_NORM_MAX_ITER, |x| j.matvec_transposed(&j.matvec(x)))
    } else {
        power_iteration_psd(j.rows(), JACOBIAN_TOL, SPECTRAL_NORM_MAX_ITER, |y| j.matvec(&j.matvec_transposed(y)))
    };
    let mu = match mu {
        Ok(mu) => mu,
        Err(Error::SolverFailure { .. }) => {
            let gram = if j.cols() <= j.rows() { matmul(&j.transpose(), j)? } else { matmul(j, &j.transpose())? };
            eigenvalues(&gram)?.iter().fold(0.0f64, |m, z| m.max(z.re))
        }
        Err(e) => return Err(e),
    };
    Ok(mu.max(0.0).sqrt())
}

/// Tangent propagation for example `b`: the Jacobians `∂h_τ/∂x_t` for `τ = t..steps`,
/// as `(short, long)` pairs of `state × inputs` matrices.
fn input_jacobians(
    w: &EnrnnTensors,
    act: Activation,
    tape: &ForwardTape,
    b: usize,
    t: usize,
) -> Result<Vec<(DenseMatrix, DenseMatrix)>> {
    let mut dh_s = w.u_s.clone();
    let mut dh_l = w.u_l.clone();
    scale_rows(&mut dh_s, &slopes(act, &tape.z_s[t], &w.b_s, b));
    scale_rows(&mut dh_l, &slopes(act, &tape.z_l[t], &w.b_l, b));
    let mut out = Vec::with_capacity(tape.steps() - t);
    out.push((dh_s.clone(), dh_l.clone()));
    for s in t + 1..tape.steps() {
        let mut next_l = matmul(&w.w_l, &dh_l)?;
        if let Some(w_c) = &w.w_c {
            let coupled = matmul(w_c, &dh_s)?;
            next_l.data_mut().iter_mut().zip(coupled.data()).for_each(|(a, c)| *a += c);
        }
        let mut next_s = matmul(&w.w_s, &dh_s)?;
        scale_rows(&mut next_s, &slopes(act, &tape.z_s[s], &w.b_s, b));
        scale_rows(&mut next_l, &slopes(act, &tape.z_l[s], &w.b_l, b));
        dh_s = next_s;
        dh_l = next_l;
        out.push((dh_s.clone(), dh_l.clone()));
    }
    Ok(out)
}

/// Norms `‖∂h⁽ˢ⁾_{t+k}/∂h⁽ˢ⁾_t‖₂` for `k = 0..=max_lag` (while `t + k` is in range)
/// for example `b`; row `t` of the result holds the lags of start step `t`.
pub(crate) fn short_state_norms(
    w: &EnrnnTensors,
    act: Activation,
    tape: &ForwardTape,
    b: usize,
    max_lag: usize,
) -> Result<Vec<Vec<f64>>> {
    let q = w.short_size();
    let steps = tape.steps();
    let mut out = Vec::with_capacity(steps);
    for t in 0..steps {
        let mut j = DenseMatrix::identity(q);
        let mut row = vec![block_norm(&j)?];
        for s in t + 1..steps.min(t + max_lag + 1) {
            j = matmul(&w.w_s, &j)?;
            scale_rows(&mut j, &slopes(act, &tape.z_s[s], &w.b_s, b));
            row.push(block_norm(&j)?);
        }
        out.push(row);
    }
    Ok(out)
}

pub(crate) fn forward_for_analysis(params: &EnrnnParams, inputs: &SequenceBatch) -> Result<(EnrnnTensors, ForwardTape)> {
    let w = params.effective();
    let tape = sequence_forward(&w, params.activation, inputs, OutputMode::Terminal)?;
    Ok((w, tape))
}

/// Short- and long-state heatmaps of each example in the batch.
pub fn jacobian_norms_per_example(
    params: &EnrnnParams,
    inputs: &SequenceBatch,
) -> Result<Vec<(HeatmapGrid, HeatmapGrid)>> {
    let (w, tape) = forward_for_analysis(params, inputs)?;
    let steps = tape.steps();
    let mut grids = Vec::with_capacity(inputs.batch());
    for b in 0..inputs.batch() {
        let mut short = DenseMatrix::zeros(steps, steps);
        let mut long = DenseMatrix::zeros(steps, steps);
        for t in 0..steps {
            for (k, (j_s, j_l)) in input_jacobians(&w, params.activation, &tape, b, t)?.iter().enumerate() {
                short[(t + k, t)] = block_norm(j_s)?;
                long[(t + k, t)] = block_norm(j_l)?;
            }
        }
        grids.push((
            HeatmapGrid { values: short, which: StateBlock::Short },
            HeatmapGrid { values: long, which: StateBlock::Long },
        ));
    }
    Ok(grids)
}

/// Batch-averaged short- and long-state heatmaps.
pub fn jacobian_norms(params: &EnrnnParams, inputs: &SequenceBatch) -> Result<(HeatmapGrid, HeatmapGrid)> {
    if inputs.batch() == 0 {
        return Err(Error::contract("jacobian_norms: empty batch"));
    }
    let per = jacobian_norms_per_example(params, inputs)?;
    let steps = inputs.steps();
    let mut short = DenseMatrix::zeros(steps, steps);
    let mut long = DenseMatrix::zeros(steps, steps);
    let scale = 1.0 / per.len() as f64;
    for (s, l) in &per {
        for (acc, v) in short.data_mut().iter_mut().zip(s.values.data()) {
            *acc += scale * v;
        }
        for (acc, v) in long.data_mut().iter_mut().zip(l.values.data()) {
            *acc += scale * v;
        }
    }
    Ok((HeatmapGrid { values: short, which: StateBlock::Short }, HeatmapGrid { values: long, which: StateBlock::Long }))
}
