use rand::Rng;

use super::config::{ModelKind, TrainConfig};
use super::optimizer::OptimizerState;
use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, spectral_radius, DenseMatrix};
use crate::net::{
    clip_global_norm, loss_mse_terminal, loss_xent_sequence, lstm_backward, lstm_forward, sequence_backward,
    sequence_forward, EnrnnParams, GradientSet, LstmParams,
};
use crate::params::StepOutcome;
use crate::tasks::{TaskBatch, Targets};

/// Either network, as trained by the loop.
#[derive(Clone, Debug)]
pub enum Model {
    Enrnn(EnrnnParams),
    Lstm(LstmParams),
}

#[derive(Clone, Debug)]
pub enum ModelGrads {
    Enrnn(GradientSet),
    Lstm(LstmParams),
}

impl ModelGrads {
    pub fn named(&self) -> Vec<(&'static str, &[f64])> {
        match self {
            ModelGrads::Enrnn(g) => g.named(),
            ModelGrads::Lstm(g) => g.named(),
        }
    }

    fn parts_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            ModelGrads::Enrnn(g) => g.named_mut().into_iter().map(|(_, v)| v).collect(),
            ModelGrads::Lstm(g) => g.named_mut().into_iter().map(|(_, v)| v).collect(),
        }
    }
}

/// Loss and output gradients for a batch of network outputs.
pub fn task_loss(outputs: &[DenseMatrix], batch: &TaskBatch) -> Result<(f64, Vec<DenseMatrix>)> {
    match &batch.targets {
        Targets::Terminal(t) => {
            let y = outputs.last().ok_or_else(|| Error::contract("task_loss: no outputs"))?;
            let (loss, g) = loss_mse_terminal(y, t)?;
            Ok((loss, vec![g]))
        }
        Targets::Classes(c) => loss_xent_sequence(outputs, c, None),
    }
}

impl Model {
    pub fn init<R: Rng + ?Sized>(cfg: &TrainConfig, rng: &mut R) -> Result<Self> {
        match cfg.model {
            ModelKind::Enrnn => Ok(Model::Enrnn(EnrnnParams::init(&cfg.enrnn_config(), rng)?)),
            ModelKind::Lstm => Ok(Model::Lstm(LstmParams::init(
                cfg.task.input_size(),
                cfg.hidden,
                cfg.task.output_size(),
                cfg.forget_bias,
                rng,
            ))),
        }
    }

    pub fn parameter_count(&self) -> usize {
        match self {
            Model::Enrnn(p) => p.parameter_count(),
            Model::Lstm(p) => p.parameter_count(),
        }
    }

    fn outputs(&self, batch: &TaskBatch) -> Result<Vec<DenseMatrix>> {
        let mode = batch.task.output_mode();
        match self {
            Model::Enrnn(p) => Ok(sequence_forward(&p.effective(), p.activation, &batch.inputs, mode)?.outputs),
            Model::Lstm(p) => Ok(lstm_forward(p, &batch.inputs, mode)?.outputs),
        }
    }

    pub fn loss(&self, batch: &TaskBatch) -> Result<f64> {
        Ok(task_loss(&self.outputs(batch)?, batch)?.0)
    }

    /// Mean loss over a large batch, evaluated in chunks of `chunk` examples.
    pub fn evaluate(&self, data: &TaskBatch, chunk: usize) -> Result<f64> {
        let n = data.len();
        if n == 0 {
            return Err(Error::contract("evaluate: empty dataset"));
        }
        let mut total = 0.0;
        let mut start = 0;
        while start < n {
            let end = (start + chunk.max(1)).min(n);
            let idx: Vec<usize> = (start..end).collect();
            total += self.loss(&data.select(&idx))? * (end - start) as f64;
            start = end;
        }
        Ok(total / n as f64)
    }

    pub fn loss_and_grads(&self, batch: &TaskBatch) -> Result<(f64, ModelGrads)> {
        let mode = batch.task.output_mode();
        match self {
            Model::Enrnn(p) => {
                let w = p.effective();
                let tape = sequence_forward(&w, p.activation, &batch.inputs, mode)?;
                let (loss, dy) = task_loss(&tape.outputs, batch)?;
                let g = sequence_backward(&w, p.activation, &tape, &dy)?;
                Ok((loss, ModelGrads::Enrnn(g)))
            }
            Model::Lstm(p) => {
                let tape = lstm_forward(p, &batch.inputs, mode)?;
                let (loss, dy) = task_loss(&tape.outputs, batch)?;
                Ok((loss, ModelGrads::Lstm(lstm_backward(p, &tape, &dy)?)))
            }
        }
    }

    /// Applies one optimizer step. Recurrent parameterizations use `cfg.lr_recurrent`.
    pub fn apply(&mut self, mut grads: ModelGrads, opt: &mut OptimizerState, cfg: &TrainConfig) -> Result<Option<StepOutcome>> {
        if let Some(threshold) = cfg.clip {
            clip_global_norm(&mut grads.parts_mut(), threshold);
        }
        match (self, grads) {
            (Model::Enrnn(p), ModelGrads::Enrnn(g)) => {
                let lr = cfg.lr;
                opt.step("U_L", p.u_l.data_mut(), g.u_l.data(), lr)?;
                opt.step("U_S", p.u_s.data_mut(), g.u_s.data(), lr)?;
                if let (Some(w_c), Some(gw_c)) = (p.w_c.as_mut(), g.w_c.as_ref()) {
                    opt.step("W_C", w_c.data_mut(), gw_c.data(), lr)?;
                }
                opt.step("b_L", &mut p.b_l, &g.b_l, lr)?;
                opt.step("b_S", &mut p.b_s, &g.b_s, lr)?;
                opt.step("V_L", p.v_l.data_mut(), g.v_l.data(), lr)?;
                opt.step("V_S", p.v_s.data_mut(), g.v_s.data(), lr)?;
                opt.step("c", &mut p.c, &g.c, lr)?;

                let lr_rec = cfg.lr_recurrent;
                let mut failure = None;
                p.w_l.update_step(&g.w_l, |x, d| {
                    if let Err(e) = opt.step("A", x, d, lr_rec) {
                        failure = Some(e);
                    }
                })?;
                let outcome = p.w_s.update_step(&g.w_s, |x, d| {
                    if let Err(e) = opt.step("T", x, d, lr_rec) {
                        failure = Some(e);
                    }
                })?;
                match failure {
                    Some(e) => Err(e),
                    None => Ok(Some(outcome)),
                }
            }
            (Model::Lstm(p), ModelGrads::Lstm(g)) => {
                for ((name, param), (_, grad)) in p.named_mut().into_iter().zip(g.named()) {
                    opt.step(name, param, grad, cfg.lr)?;
                }
                Ok(None)
            }
            _ => Err(Error::contract("Model::apply: gradient type does not match model")),
        }
    }

    /// `(ρ(T), ‖W_S‖₂, active)` for the eigenvalue-normalized block.
    pub fn spectral_summary(&self) -> Result<Option<(f64, f64, bool)>> {
        match self {
            Model::Enrnn(p) => {
                let block = &p.w_s;
                let rho = spectral_radius(block.t())?;
                let norm = match spectral_norm(block.w()) {
                    Ok(v) => v,
                    Err(_) => {
                        let w = block.w();
                        spectral_radius(&crate::linalg::matmul(&w.transpose(), w)?)?.sqrt()
                    }
                };
                Ok(Some((rho, norm, block.is_active())))
            }
            Model::Lstm(_) => Ok(None),
        }
    }
}
