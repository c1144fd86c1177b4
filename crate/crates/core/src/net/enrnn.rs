use rand::Rng;
use serde::{Deserialize, Serialize};

use super::activation::Activation;
use super::batch::SequenceBatch;
use super::ops::{add_assign, add_at_b, add_colsum, add_row_bias};
use crate::error::{Error, Result};
use crate::linalg::{matmul, DenseMatrix};
use crate::params::{glorot_uniform, init_rotation_blocks, CayleyOrthogonalBlock, EigenNormBlock};

/// Whether the network is scored at every step or only after the last one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputMode {
    Terminal,
    Sequence,
}

/// Sizes and options for a freshly initialized network.
#[derive(Clone, Debug, PartialEq)]
pub struct EnrnnConfig {
    pub inputs: usize,
    pub outputs: usize,
    /// Total hidden size `n`.
    pub hidden: usize,
    /// Long-term (orthogonal) block size `q`.
    pub long: usize,
    pub coupling: bool,
    pub epsilon: f64,
    /// Number of −1 entries in the Cayley scaling matrix.
    pub neg_ones: usize,
    pub activation: Activation,
}

/// Dense tensors of one network: either effective weights or their gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct EnrnnTensors {
    pub u_l: DenseMatrix,
    pub u_s: DenseMatrix,
    pub w_l: DenseMatrix,
    pub w_s: DenseMatrix,
    pub w_c: Option<DenseMatrix>,
    pub b_l: Vec<f64>,
    pub b_s: Vec<f64>,
    pub v_l: DenseMatrix,
    pub v_s: DenseMatrix,
    pub c: Vec<f64>,
}

/// Gradients with respect to the effective weights, shaped like [`EnrnnTensors`].
pub type GradientSet = EnrnnTensors;

impl EnrnnTensors {
    pub fn zeros_like(other: &Self) -> Self {
        let z = |m: &DenseMatrix| DenseMatrix::zeros(m.rows(), m.cols());
        Self {
            u_l: z(&other.u_l),
            u_s: z(&other.u_s),
            w_l: z(&other.w_l),
            w_s: z(&other.w_s),
            w_c: other.w_c.as_ref().map(z),
            b_l: vec![0.0; other.b_l.len()],
            b_s: vec![0.0; other.b_s.len()],
            v_l: z(&other.v_l),
            v_s: z(&other.v_s),
            c: vec![0.0; other.c.len()],
        }
    }

    pub fn long_size(&self) -> usize {
        self.w_l.rows()
    }

    pub fn short_size(&self) -> usize {
        self.w_s.rows()
    }

    pub fn inputs(&self) -> usize {
        self.u_l.cols()
    }

    pub fn outputs(&self) -> usize {
        self.c.len()
    }

    /// Every tensor with a stable name, in a fixed order.
    pub fn named(&self) -> Vec<(&'static str, &[f64])> {
        let mut out = vec![
            ("U_L", self.u_l.data()),
            ("U_S", self.u_s.data()),
            ("W_L", self.w_l.data()),
            ("W_S", self.w_s.data()),
        ];
        if let Some(w_c) = &self.w_c {
            out.push(("W_C", w_c.data()));
        }
        out.extend([
            ("b_L", self.b_l.as_slice()),
            ("b_S", self.b_s.as_slice()),
            ("V_L", self.v_l.data()),
            ("V_S", self.v_s.data()),
            ("c", self.c.as_slice()),
        ]);
        out
    }

    pub fn named_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut out: Vec<(&'static str, &mut [f64])> = vec![
            ("U_L", self.u_l.data_mut()),
            ("U_S", self.u_s.data_mut()),
            ("W_L", self.w_l.data_mut()),
            ("W_S", self.w_s.data_mut()),
        ];
        if let Some(w_c) = &mut self.w_c {
            out.push(("W_C", w_c.data_mut()));
        }
        out.extend([
            ("b_L", self.b_l.as_mut_slice()),
            ("b_S", self.b_s.as_mut_slice()),
            ("V_L", self.v_l.data_mut()),
            ("V_S", self.v_s.data_mut()),
            ("c", self.c.as_mut_slice()),
        ]);
        out
    }

    fn check(&self) -> Result<()> {
        let (q, s, m, p) = (self.long_size(), self.short_size(), self.inputs(), self.outputs());
        let ok = self.u_l.shape() == (q, m)
            && self.u_s.shape() == (s, m)
            && self.w_l.shape() == (q, q)
            && self.w_s.shape() == (s, s)
            && self.w_c.as_ref().map_or(true, |w| w.shape() == (q, s))
            && self.b_l.len() == q
            && self.b_s.len() == s
            && self.v_l.shape() == (p, q)
            && self.v_s.shape() == (p, s);
        if ok {
            Ok(())
        } else {
            Err(Error::contract("EnrnnTensors: inconsistent shapes"))
        }
    }
}

/// Trainable parameters: the recurrent blocks are held in their parameterized form.
#[derive(Clone, Debug)]
pub struct EnrnnParams {
    pub u_l: DenseMatrix,
    pub u_s: DenseMatrix,
    pub w_l: CayleyOrthogonalBlock,
    pub w_s: EigenNormBlock,
    pub w_c: Option<DenseMatrix>,
    pub b_l: Vec<f64>,
    pub b_s: Vec<f64>,
    pub v_l: DenseMatrix,
    pub v_s: DenseMatrix,
    pub c: Vec<f64>,
    pub activation: Activation,
}

impl EnrnnParams {
    pub fn init<R: Rng + ?Sized>(cfg: &EnrnnConfig, rng: &mut R) -> Result<Self> {
        if cfg.long > cfg.hidden {
            return Err(Error::Config(format!(
                "long-term size {} exceeds hidden size {}",
                cfg.long, cfg.hidden
            )));
        }
        let (q, s, m, p) = (cfg.long, cfg.hidden - cfg.long, cfg.inputs, cfg.outputs);
        let u_l = glorot_uniform(q, m, rng);
        let u_s = glorot_uniform(s, m, rng);
        let w_l = CayleyOrthogonalBlock::init(q, cfg.neg_ones.min(q), rng)?;
        let w_s = EigenNormBlock::new(init_rotation_blocks(s, rng), cfg.epsilon)?;
        let w_c = cfg.coupling.then(|| glorot_uniform(q, s, rng));
        let b_l = (0..q).map(|_| rng.gen_range(-0.01..=0.01)).collect();
        let b_s = (0..s).map(|_| rng.gen_range(-0.01..=0.01)).collect();
        let v_l = glorot_uniform(p, q, rng);
        let v_s = glorot_uniform(p, s, rng);
        Ok(Self { u_l, u_s, w_l, w_s, w_c, b_l, b_s, v_l, v_s, c: vec![0.0; p], activation: cfg.activation })
    }

    pub fn hidden(&self) -> usize {
        self.w_l.size() + self.w_s.size()
    }

    /// Snapshot of the effective weights used by the forward pass.
    pub fn effective(&self) -> EnrnnTensors {
        EnrnnTensors {
            u_l: self.u_l.clone(),
            u_s: self.u_s.clone(),
            w_l: self.w_l.w().clone(),
            w_s: self.w_s.w().clone(),
            w_c: self.w_c.clone(),
            b_l: self.b_l.clone(),
            b_s: self.b_s.clone(),
            v_l: self.v_l.clone(),
            v_s: self.v_s.clone(),
            c: self.c.clone(),
        }
    }

    /// Number of trainable scalars (the Cayley block counts its upper triangle).
    pub fn parameter_count(&self) -> usize {
        self.u_l.data().len()
            + self.u_s.data().len()
            + self.w_l.upper().len()
            + self.w_s.t().data().len()
            + self.w_c.as_ref().map_or(0, |w| w.data().len())
            + self.b_l.len()
            + self.b_s.len()
            + self.v_l.data().len()
            + self.v_s.data().len()
            + self.c.len()
    }
}

/// Intermediates of one cell step.
#[derive(Clone, Debug, PartialEq)]
pub struct CellStep {
    pub z_l: DenseMatrix,
    pub z_s: DenseMatrix,
    pub h_l: DenseMatrix,
    pub h_s: DenseMatrix,
    pub y: DenseMatrix,
}

/// Everything the backward pass needs, one entry per step.
#[derive(Clone, Debug)]
pub struct ForwardTape {
    pub mode: OutputMode,
    pub inputs: Vec<DenseMatrix>,
    /// Pre-activations (without bias), `batch × q` and `batch × (n − q)`.
    pub z_l: Vec<DenseMatrix>,
    pub z_s: Vec<DenseMatrix>,
    /// States with the zero initial state at index 0, so `h_l[t + 1]` follows step `t`.
    pub h_l: Vec<DenseMatrix>,
    pub h_s: Vec<DenseMatrix>,
    /// Per-step outputs, or only the last one in terminal mode.
    pub outputs: Vec<DenseMatrix>,
}

impl ForwardTape {
    pub fn steps(&self) -> usize {
        self.inputs.len()
    }

    pub fn batch(&self) -> usize {
        self.inputs.first().map_or(0, |x| x.rows())
    }

    /// Step index that produced `outputs[k]`.
    pub fn output_step(&self, k: usize) -> usize {
        match self.mode {
            OutputMode::Sequence => k,
            OutputMode::Terminal => self.steps() - 1,
        }
    }
}

fn activate(act: Activation, z: &DenseMatrix, b: &[f64]) -> DenseMatrix {
    let cols = z.cols();
    DenseMatrix::from_fn(z.rows(), cols, |i, j| act.apply(z[(i, j)], b[j]))
}

struct Transposed {
    u_l: DenseMatrix,
    u_s: DenseMatrix,
    w_l: DenseMatrix,
    w_s: DenseMatrix,
    w_c: Option<DenseMatrix>,
    v_l: DenseMatrix,
    v_s: DenseMatrix,
}

impl Transposed {
    fn of(w: &EnrnnTensors) -> Self {
        Self {
            u_l: w.u_l.transpose(),
            u_s: w.u_s.transpose(),
            w_l: w.w_l.transpose(),
            w_s: w.w_s.transpose(),
            w_c: w.w_c.as_ref().map(DenseMatrix::transpose),
            v_l: w.v_l.transpose(),
            v_s: w.v_s.transpose(),
        }
    }
}

fn step_with(
    wt: &Transposed,
    w: &EnrnnTensors,
    act: Activation,
    x: &DenseMatrix,
    h_l_prev: &DenseMatrix,
    h_s_prev: &DenseMatrix,
    emit: bool,
) -> Result<CellStep> {
    let mut z_s = matmul(x, &wt.u_s)?;
    add_assign(&mut z_s, &matmul(h_s_prev, &wt.w_s)?);
    let mut z_l = matmul(x, &wt.u_l)?;
    add_assign(&mut z_l, &matmul(h_l_prev, &wt.w_l)?);
    if let Some(w_ct) = &wt.w_c {
        add_assign(&mut z_l, &matmul(h_s_prev, w_ct)?);
    }
    let h_l = activate(act, &z_l, &w.b_l);
    let h_s = activate(act, &z_s, &w.b_s);
    let y = if emit {
        let mut y = matmul(&h_l, &wt.v_l)?;
        add_assign(&mut y, &matmul(&h_s, &wt.v_s)?);
        add_row_bias(&mut y, &w.c);
        y
    } else {
        DenseMatrix::zeros(0, 0)
    };
    Ok(CellStep { z_l, z_s, h_l, h_s, y })
}

/// One recurrence step for a batch of inputs (`batch × m`).
pub fn cell_forward(
    w: &EnrnnTensors,
    act: Activation,
    x: &DenseMatrix,
    h_l_prev: &DenseMatrix,
    h_s_prev: &DenseMatrix,
) -> Result<CellStep> {
    w.check()?;
    let batch = x.rows();
    if x.cols() != w.inputs()
        || h_l_prev.shape() != (batch, w.long_size())
        || h_s_prev.shape() != (batch, w.short_size())
    {
        return Err(Error::contract("cell_forward: input or state shape mismatch"));
    }
    step_with(&Transposed::of(w), w, act, x, h_l_prev, h_s_prev, true)
}

/// Unrolls the network over a batch from zero initial states.
pub fn sequence_forward(
    w: &EnrnnTensors,
    act: Activation,
    inputs: &SequenceBatch,
    mode: OutputMode,
) -> Result<ForwardTape> {
    w.check()?;
    if inputs.steps() == 0 {
        return Err(Error::contract("sequence_forward: empty sequence"));
    }
    if inputs.features() != w.inputs() {
        return Err(Error::contract("sequence_forward: input feature size mismatch"));
    }
    let wt = Transposed::of(w);
    let (batch, steps) = (inputs.batch(), inputs.steps());
    let mut tape = ForwardTape {
        mode,
        inputs: Vec::with_capacity(steps),
        z_l: Vec::with_capacity(steps),
        z_s: Vec::with_capacity(steps),
        h_l: vec![DenseMatrix::zeros(batch, w.long_size())],
        h_s: vec![DenseMatrix::zeros(batch, w.short_size())],
        outputs: Vec::new(),
    };
    for t in 0..steps {
        let x = inputs.step(t);
        let emit = mode == OutputMode::Sequence || t + 1 == steps;
        let step = step_with(&wt, w, act, &x, &tape.h_l[t], &tape.h_s[t], emit)?;
        tape.inputs.push(x);
        tape.z_l.push(step.z_l);
        tape.z_s.push(step.z_s);
        tape.h_l.push(step.h_l);
        tape.h_s.push(step.h_s);
        if emit {
            tape.outputs.push(step.y);
        }
    }
    let finite = tape.h_l.iter().chain(&tape.h_s).chain(&tape.outputs).all(DenseMatrix::is_finite);
    if !finite {
        return Err(Error::NonFinite("forward pass"));
    }
    Ok(tape)
}

/// Applies the activation derivatives to an upstream state gradient: returns
/// `∂L/∂z` and accumulates `∂L/∂b`.
fn activation_backward(act: Activation, g: &DenseMatrix, z: &DenseMatrix, b: &[f64], db: &mut [f64]) -> DenseMatrix {
    let mut dz = DenseMatrix::zeros(g.rows(), g.cols());
    for i in 0..g.rows() {
        for j in 0..g.cols() {
            let (dhdz, dhdb) = act.derivatives(z[(i, j)], b[j]);
            let gij = g[(i, j)];
            dz[(i, j)] = gij * dhdz;
            db[j] += gij * dhdb;
        }
    }
    dz
}

/// Reverse-mode gradients with respect to every effective weight.
///
/// `dl_dy[k]` is the gradient for `tape.outputs[k]`.
pub fn sequence_backward(
    w: &EnrnnTensors,
    act: Activation,
    tape: &ForwardTape,
    dl_dy: &[DenseMatrix],
) -> Result<GradientSet> {
    w.check()?;
    let steps = tape.steps();
    let batch = tape.batch();
    if dl_dy.len() != tape.outputs.len()
        || dl_dy.iter().zip(&tape.outputs).any(|(g, y)| g.shape() != y.shape())
    {
        return Err(Error::contract("sequence_backward: output gradient shape mismatch"));
    }
    if tape.h_l.len() != steps + 1
        || tape.h_l[0].shape() != (batch, w.long_size())
        || tape.h_s[0].shape() != (batch, w.short_size())
    {
        return Err(Error::contract("sequence_backward: tape does not match parameters"));
    }
    let mut grads = EnrnnTensors::zeros_like(w);
    let mut g_l = DenseMatrix::zeros(batch, w.long_size());
    let mut g_s = DenseMatrix::zeros(batch, w.short_size());
    for t in (0..steps).rev() {
        let out_idx = match tape.mode {
            OutputMode::Sequence => Some(t),
            OutputMode::Terminal => (t + 1 == steps).then_some(0),
        };
        if let Some(k) = out_idx {
            let dy = &dl_dy[k];
            add_at_b(&mut grads.v_l, dy, &tape.h_l[t + 1]);
            add_at_b(&mut grads.v_s, dy, &tape.h_s[t + 1]);
            add_colsum(&mut grads.c, dy);
            add_assign(&mut g_l, &matmul(dy, &w.v_l)?);
            add_assign(&mut g_s, &matmul(dy, &w.v_s)?);
        }
        let dz_l = activation_backward(act, &g_l, &tape.z_l[t], &w.b_l, &mut grads.b_l);
        let dz_s = activation_backward(act, &g_s, &tape.z_s[t], &w.b_s, &mut grads.b_s);
        let x = &tape.inputs[t];
        add_at_b(&mut grads.u_l, &dz_l, x);
        add_at_b(&mut grads.w_l, &dz_l, &tape.h_l[t]);
        add_at_b(&mut grads.u_s, &dz_s, x);
        add_at_b(&mut grads.w_s, &dz_s, &tape.h_s[t]);
        g_l = matmul(&dz_l, &w.w_l)?;
        g_s = matmul(&dz_s, &w.w_s)?;
        if let (Some(gw_c), Some(w_c)) = (grads.w_c.as_mut(), w.w_c.as_ref()) {
            add_at_b(gw_c, &dz_l, &tape.h_s[t]);
            add_assign(&mut g_s, &matmul(&dz_l, w_c)?);
        }
    }
    if grads.named().iter().any(|(_, v)| v.iter().any(|x| !x.is_finite())) {
        return Err(Error::NonFinite("backward pass"));
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zeros_net(q: usize, s: usize, m: usize, p: usize, coupling: bool) -> EnrnnTensors {
        EnrnnTensors {
            u_l: DenseMatrix::zeros(q, m),
            u_s: DenseMatrix::zeros(s, m),
            w_l: DenseMatrix::zeros(q, q),
            w_s: DenseMatrix::zeros(s, s),
            w_c: coupling.then(|| DenseMatrix::zeros(q, s)),
            b_l: vec![0.0; q],
            b_s: vec![0.0; s],
            v_l: DenseMatrix::zeros(p, q),
            v_s: DenseMatrix::zeros(p, s),
            c: vec![0.0; p],
        }
    }

    #[test]
    fn zero_weights_output_bias() {
        let mut w = zeros_net(3, 2, 4, 2, true);
        w.c = vec![0.5, -1.5];
        let x = DenseMatrix::from_fn(2, 4, |i, j| (i + j) as f64);
        let step = cell_forward(&w, Activation::Modrelu, &x, &DenseMatrix::zeros(2, 3), &DenseMatrix::zeros(2, 2)).unwrap();
        assert_eq!(step.h_l.max_abs() + step.h_s.max_abs(), 0.0);
        assert_eq!(step.y, DenseMatrix::from_rows(&[&[0.5, -1.5], &[0.5, -1.5]]));
    }

    #[test]
    fn pure_short_term_relu_by_hand() {
        let mut w = zeros_net(0, 2, 2, 1, false);
        w.u_s = DenseMatrix::identity(2);
        w.v_s = DenseMatrix::from_rows(&[&[3.0, 7.0]]);
        w.c = vec![0.25];
        let x = DenseMatrix::from_rows(&[&[1.0, -2.0]]);
        let step = cell_forward(&w, Activation::Relu, &x, &DenseMatrix::zeros(1, 0), &DenseMatrix::zeros(1, 2)).unwrap();
        assert_eq!(step.h_s.data(), &[1.0, 0.0]);
        assert_eq!(step.y.data(), &[3.25]);
    }

    #[test]
    fn coupling_carries_first_input_into_long_state() {
        let mut w = zeros_net(1, 1, 1, 1, true);
        w.u_s = DenseMatrix::from_rows(&[&[2.0]]);
        w.w_c = Some(DenseMatrix::from_rows(&[&[3.0]]));
        w.w_l = DenseMatrix::from_rows(&[&[0.5]]);
        w.w_s = DenseMatrix::from_rows(&[&[0.0]]);
        let x = SequenceBatch::new(1, 2, 1, vec![1.5, 0.0]).unwrap();
        let tape = sequence_forward(&w, Activation::Relu, &x, OutputMode::Sequence).unwrap();
        // h1_S = relu(2·1.5) = 3, h1_L = 0, h2_L = relu(0.5·0 + 3·3) = 9
        assert_eq!(tape.h_s[1].data(), &[3.0]);
        assert_eq!(tape.h_l[1].data(), &[0.0]);
        assert_eq!(tape.h_l[2].data(), &[9.0]);
    }

    fn random_tensors(q: usize, s: usize, m: usize, p: usize, rng: &mut ChaCha8Rng) -> EnrnnTensors {
        let mut r = |rows: usize, cols: usize, scale: f64| DenseMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-scale..scale));
        EnrnnTensors {
            u_l: r(q, m, 1.0),
            u_s: r(s, m, 1.0),
            w_l: r(q, q, 0.4),
            w_s: r(s, s, 0.4),
            w_c: Some(r(q, s, 0.4)),
            b_l: r(1, q, 0.3).into_vec(),
            b_s: r(1, s, 0.3).into_vec(),
            v_l: r(p, q, 1.0),
            v_s: r(p, s, 1.0),
            c: r(1, p, 0.5).into_vec(),
        }
    }

    #[test]
    fn sequence_matches_step_replay() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = random_tensors(3, 4, 2, 2, &mut rng);
        let x = SequenceBatch::new(2, 5, 2, (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let tape = sequence_forward(&w, Activation::Modrelu, &x, OutputMode::Terminal).unwrap();
        let mut h_l = DenseMatrix::zeros(2, 3);
        let mut h_s = DenseMatrix::zeros(2, 4);
        let mut y = DenseMatrix::zeros(0, 0);
        for t in 0..5 {
            let step = cell_forward(&w, Activation::Modrelu, &x.step(t), &h_l, &h_s).unwrap();
            h_l = step.h_l;
            h_s = step.h_s;
            y = step.y;
        }
        assert_eq!(tape.outputs.len(), 1);
        assert_eq!(tape.outputs[0], y);

        let one = SequenceBatch::new(2, 1, 2, x.step(0).into_vec()).unwrap();
        let tape1 = sequence_forward(&w, Activation::Modrelu, &one, OutputMode::Sequence).unwrap();
        let step = cell_forward(&w, Activation::Modrelu, &x.step(0), &DenseMatrix::zeros(2, 3), &DenseMatrix::zeros(2, 4)).unwrap();
        assert_eq!(tape1.outputs[0], step.y);
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = random_tensors(2, 3, 2, 2, &mut rng);
        let x = SequenceBatch::new(1, 4, 2, (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let tape = sequence_forward(&w, Activation::Relu, &x, OutputMode::Sequence).unwrap();
        let zeros: Vec<_> = tape.outputs.iter().map(|y| DenseMatrix::zeros(y.rows(), y.cols())).collect();
        let g = sequence_backward(&w, Activation::Relu, &tape, &zeros).unwrap();
        assert!(g.named().iter().all(|(_, v)| v.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn unreachable_short_block_has_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut w = random_tensors(3, 3, 2, 1, &mut rng);
        w.w_c = None;
        w.v_s = DenseMatrix::zeros(1, 3);
        let x = SequenceBatch::new(2, 6, 2, (0..24).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let tape = sequence_forward(&w, Activation::Modrelu, &x, OutputMode::Terminal).unwrap();
        let g = sequence_backward(&w, Activation::Modrelu, &tape, &[DenseMatrix::from_rows(&[&[1.0], &[-2.0]])]).unwrap();
        assert_eq!(g.u_s.max_abs() + g.w_s.max_abs(), 0.0);
        assert!(g.b_s.iter().all(|&x| x == 0.0));
        assert!(g.u_l.max_abs() > 0.0);
    }
}
