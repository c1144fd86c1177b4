use rand::Rng;

use super::batch::SequenceBatch;
use super::enrnn::OutputMode;
use super::ops::{add_assign, add_at_b, add_colsum, add_row_bias};
use crate::error::{Error, Result};
use crate::linalg::{matmul, DenseMatrix};
use crate::params::glorot_uniform;

/// LSTM weights (also used for their gradients). Gate blocks are stacked as `i, f, g, o`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    /// `4h × m`
    pub w_x: DenseMatrix,
    /// `4h × h`
    pub w_h: DenseMatrix,
    pub b: Vec<f64>,
    /// `p × h`
    pub v: DenseMatrix,
    pub c: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl LstmParams {
    pub fn init<R: Rng + ?Sized>(inputs: usize, hidden: usize, outputs: usize, forget_bias: f64, rng: &mut R) -> Self {
        let mut b = vec![0.0; 4 * hidden];
        b[hidden..2 * hidden].iter_mut().for_each(|x| *x = forget_bias);
        Self {
            w_x: glorot_uniform(4 * hidden, inputs, rng),
            w_h: glorot_uniform(4 * hidden, hidden, rng),
            b,
            v: glorot_uniform(outputs, hidden, rng),
            c: vec![0.0; outputs],
        }
    }

    pub fn zeros_like(other: &Self) -> Self {
        let z = |m: &DenseMatrix| DenseMatrix::zeros(m.rows(), m.cols());
        Self {
            w_x: z(&other.w_x),
            w_h: z(&other.w_h),
            b: vec![0.0; other.b.len()],
            v: z(&other.v),
            c: vec![0.0; other.c.len()],
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_h.cols()
    }

    pub fn inputs(&self) -> usize {
        self.w_x.cols()
    }

    pub fn parameter_count(&self) -> usize {
        self.named().iter().map(|(_, v)| v.len()).sum()
    }

    pub fn named(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("W_x", self.w_x.data()),
            ("W_h", self.w_h.data()),
            ("b", self.b.as_slice()),
            ("V", self.v.data()),
            ("c", self.c.as_slice()),
        ]
    }

    pub fn named_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("W_x", self.w_x.data_mut()),
            ("W_h", self.w_h.data_mut()),
            ("b", self.b.as_mut_slice()),
            ("V", self.v.data_mut()),
            ("c", self.c.as_mut_slice()),
        ]
    }

    fn check(&self) -> Result<()> {
        let h = self.hidden();
        let ok = self.w_x.rows() == 4 * h
            && self.w_h.shape() == (4 * h, h)
            && self.b.len() == 4 * h
            && self.v.shape() == (self.c.len(), h);
        if ok {
            Ok(())
        } else {
            Err(Error::contract("LstmParams: inconsistent shapes"))
        }
    }
}

/// One LSTM step: post-activation gates `[i f g o]` (`batch × 4h`), cell and hidden state, output.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmStep {
    pub gates: DenseMatrix,
    pub c: DenseMatrix,
    pub h: DenseMatrix,
    pub y: DenseMatrix,
}

#[derive(Clone, Debug)]
pub struct LstmTape {
    pub mode: OutputMode,
    pub inputs: Vec<DenseMatrix>,
    pub gates: Vec<DenseMatrix>,
    /// Cell states with the zero initial state at index 0.
    pub c: Vec<DenseMatrix>,
    pub h: Vec<DenseMatrix>,
    pub outputs: Vec<DenseMatrix>,
}

fn step_with(
    p: &LstmParams,
    w_xt: &DenseMatrix,
    w_ht: &DenseMatrix,
    vt: &DenseMatrix,
    x: &DenseMatrix,
    h_prev: &DenseMatrix,
    c_prev: &DenseMatrix,
    emit: bool,
) -> Result<LstmStep> {
    let hd = p.hidden();
    let mut a = matmul(x, w_xt)?;
    add_assign(&mut a, &matmul(h_prev, w_ht)?);
    add_row_bias(&mut a, &p.b);
    let batch = x.rows();
    let mut gates = a;
    let mut c = DenseMatrix::zeros(batch, hd);
    let mut h = DenseMatrix::zeros(batch, hd);
    for r in 0..batch {
        for j in 0..hd {
            let i = sigmoid(gates[(r, j)]);
            let f = sigmoid(gates[(r, hd + j)]);
            let g = gates[(r, 2 * hd + j)].tanh();
            let o = sigmoid(gates[(r, 3 * hd + j)]);
            gates[(r, j)] = i;
            gates[(r, hd + j)] = f;
            gates[(r, 2 * hd + j)] = g;
            gates[(r, 3 * hd + j)] = o;
            let cv = f * c_prev[(r, j)] + i * g;
            c[(r, j)] = cv;
            h[(r, j)] = o * cv.tanh();
        }
    }
    let y = if emit {
        let mut y = matmul(&h, vt)?;
        add_row_bias(&mut y, &p.c);
        y
    } else {
        DenseMatrix::zeros(0, 0)
    };
    Ok(LstmStep { gates, c, h, y })
}

pub fn lstm_cell_forward(p: &LstmParams, x: &DenseMatrix, h_prev: &DenseMatrix, c_prev: &DenseMatrix) -> Result<LstmStep> {
    p.check()?;
    let shape = (x.rows(), p.hidden());
    if x.cols() != p.inputs() || h_prev.shape() != shape || c_prev.shape() != shape {
        return Err(Error::contract("lstm_cell_forward: shape mismatch"));
    }
    step_with(p, &p.w_x.transpose(), &p.w_h.transpose(), &p.v.transpose(), x, h_prev, c_prev, true)
}

pub fn lstm_forward(p: &LstmParams, inputs: &SequenceBatch, mode: OutputMode) -> Result<LstmTape> {
    p.check()?;
    if inputs.steps() == 0 || inputs.features() != p.inputs() {
        return Err(Error::contract("lstm_forward: input shape mismatch"));
    }
    let (w_xt, w_ht, vt) = (p.w_x.transpose(), p.w_h.transpose(), p.v.transpose());
    let (batch, steps) = (inputs.batch(), inputs.steps());
    let mut tape = LstmTape {
        mode,
        inputs: Vec::with_capacity(steps),
        gates: Vec::with_capacity(steps),
        c: vec![DenseMatrix::zeros(batch, p.hidden())],
        h: vec![DenseMatrix::zeros(batch, p.hidden())],
        outputs: Vec::new(),
    };
    for t in 0..steps {
        let x = inputs.step(t);
        let emit = mode == OutputMode::Sequence || t + 1 == steps;
        let s = step_with(p, &w_xt, &w_ht, &vt, &x, &tape.h[t], &tape.c[t], emit)?;
        tape.inputs.push(x);
        tape.gates.push(s.gates);
        tape.c.push(s.c);
        tape.h.push(s.h);
        if emit {
            tape.outputs.push(s.y);
        }
    }
    if !tape.outputs.iter().all(DenseMatrix::is_finite) {
        return Err(Error::NonFinite("lstm forward pass"));
    }
    Ok(tape)
}

pub fn lstm_backward(p: &LstmParams, tape: &LstmTape, dl_dy: &[DenseMatrix]) -> Result<LstmParams> {
    p.check()?;
    if dl_dy.len() != tape.outputs.len() || dl_dy.iter().zip(&tape.outputs).any(|(g, y)| g.shape() != y.shape()) {
        return Err(Error::contract("lstm_backward: output gradient shape mismatch"));
    }
    let hd = p.hidden();
    let steps = tape.inputs.len();
    let batch = tape.inputs.first().map_or(0, DenseMatrix::rows);
    let mut grads = LstmParams::zeros_like(p);
    let mut dh = DenseMatrix::zeros(batch, hd);
    let mut dc = DenseMatrix::zeros(batch, hd);
    for t in (0..steps).rev() {
        let out_idx = match tape.mode {
            OutputMode::Sequence => Some(t),
            OutputMode::Terminal => (t + 1 == steps).then_some(0),
        };
        if let Some(k) = out_idx {
            let dy = &dl_dy[k];
            add_at_b(&mut grads.v, dy, &tape.h[t + 1]);
            add_colsum(&mut grads.c, dy);
            add_assign(&mut dh, &matmul(dy, &p.v)?);
        }
        let gates = &tape.gates[t];
        let c_prev = &tape.c[t];
        let c_t = &tape.c[t + 1];
        let mut da = DenseMatrix::zeros(batch, 4 * hd);
        for r in 0..batch {
            for j in 0..hd {
                let (i, f, g, o) = (gates[(r, j)], gates[(r, hd + j)], gates[(r, 2 * hd + j)], gates[(r, 3 * hd + j)]);
                let tc = c_t[(r, j)].tanh();
                let dhr = dh[(r, j)];
                let dcr = dc[(r, j)] + dhr * o * (1.0 - tc * tc);
                da[(r, j)] = dcr * g * i * (1.0 - i);
                da[(r, hd + j)] = dcr * c_prev[(r, j)] * f * (1.0 - f);
                da[(r, 2 * hd + j)] = dcr * i * (1.0 - g * g);
                da[(r, 3 * hd + j)] = dhr * tc * o * (1.0 - o);
                dc[(r, j)] = dcr * f;
            }
        }
        add_at_b(&mut grads.w_x, &da, &tape.inputs[t]);
        add_at_b(&mut grads.w_h, &da, &tape.h[t]);
        add_colsum(&mut grads.b, &da);
        dh = matmul(&da, &p.w_h)?;
    }
    if grads.named().iter().any(|(_, v)| v.iter().any(|x| !x.is_finite())) {
        return Err(Error::NonFinite("lstm backward pass"));
    }
    Ok(grads)
}
