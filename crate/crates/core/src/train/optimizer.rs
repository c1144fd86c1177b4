use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Rmsprop,
    Adagrad,
    /// Plain gradient descent.
    Sgd,
}

impl std::str::FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "adam" => Ok(Self::Adam),
            "rmsprop" => Ok(Self::Rmsprop),
            "adagrad" => Ok(Self::Adagrad),
            "sgd" => Ok(Self::Sgd),
            other => Err(format!("unknown optimizer `{other}`")),
        }
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
pub const RMSPROP_DECAY: f64 = 0.9;
pub const RMSPROP_EPS: f64 = 1e-10;
pub const ADAGRAD_EPS: f64 = 1e-10;

/// Moment accumulators of one parameter tensor.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Slot {
    /// First moment (Adam only).
    pub m: Vec<f64>,
    /// Second moment / squared-gradient accumulator.
    pub v: Vec<f64>,
    pub step: u64,
}

/// Optimizer with one accumulator slot per named tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub slots: BTreeMap<String, Slot>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind) -> Self {
        Self { kind, slots: BTreeMap::new() }
    }

    /// Updates `param` in place from `grad` with learning rate `lr`.
    pub fn step(&mut self, name: &str, param: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
        if param.len() != grad.len() {
            return Err(Error::contract(format!("optimizer_step: `{name}` has {} values, gradient {}", param.len(), grad.len())));
        }
        let slot = self.slots.entry(name.to_string()).or_default();
        if slot.step == 0 && slot.v.is_empty() {
            slot.v = vec![0.0; param.len()];
            if self.kind == OptimizerKind::Adam {
                slot.m = vec![0.0; param.len()];
            }
        }
        if slot.v.len() != param.len() {
            return Err(Error::contract(format!("optimizer_step: `{name}` changed shape")));
        }
        optimizer_step(self.kind, slot, param, grad, lr);
        Ok(())
    }
}

/// One update of the standard recurrences on a single tensor.
pub fn optimizer_step(kind: OptimizerKind, slot: &mut Slot, param: &mut [f64], grad: &[f64], lr: f64) {
    slot.step += 1;
    match kind {
        OptimizerKind::Adam => {
            let t = slot.step as i32;
            let c1 = 1.0 - ADAM_BETA1.powi(t);
            let c2 = 1.0 - ADAM_BETA2.powi(t);
            for i in 0..param.len() {
                let g = grad[i];
                slot.m[i] = ADAM_BETA1 * slot.m[i] + (1.0 - ADAM_BETA1) * g;
                slot.v[i] = ADAM_BETA2 * slot.v[i] + (1.0 - ADAM_BETA2) * g * g;
                let m_hat = slot.m[i] / c1;
                let v_hat = slot.v[i] / c2;
                param[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
        OptimizerKind::Rmsprop => {
            for i in 0..param.len() {
                let g = grad[i];
                slot.v[i] = RMSPROP_DECAY * slot.v[i] + (1.0 - RMSPROP_DECAY) * g * g;
                param[i] -= lr * g / (slot.v[i].sqrt() + RMSPROP_EPS);
            }
        }
        OptimizerKind::Adagrad => {
            for i in 0..param.len() {
                let g = grad[i];
                slot.v[i] += g * g;
                param[i] -= lr * g / (slot.v[i].sqrt() + ADAGRAD_EPS);
            }
        }
        OptimizerKind::Sgd => {
            for (p, g) in param.iter_mut().zip(grad) {
                *p -= lr * g;
            }
        }
    }
}
