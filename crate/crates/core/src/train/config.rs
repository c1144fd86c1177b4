use std::path::Path;

use serde::{Deserialize, Serialize};

use super::optimizer::OptimizerKind;
use crate::error::{Error, Result};
use crate::net::{Activation, EnrnnConfig};
use crate::tasks::Task;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Enrnn,
    Lstm,
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "enrnn" => Ok(Self::Enrnn),
            "lstm" => Ok(Self::Lstm),
            other => Err(format!("unknown model `{other}` (expected enrnn or lstm)")),
        }
    }
}

/// Everything that determines a training run. Serialized as JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub task: Task,
    /// Adding: sequence length. Copying: delay (sequences have `seq_len + 20` steps).
    pub seq_len: usize,
    pub batch_size: usize,
    pub iterations: usize,
    pub model: ModelKind,
    /// Total hidden size `n`.
    pub hidden: usize,
    /// Long-term block size `q`; the short-term block has `hidden − split` units.
    pub split: usize,
    pub coupling: bool,
    pub epsilon: f64,
    /// Learning rate for every tensor except the recurrent parameterizations.
    pub lr: f64,
    /// Learning rate for the recurrent parameter matrices `T` and `A`.
    pub lr_recurrent: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    /// Count of −1 entries in the Cayley scaling matrix; `split / 2` when absent.
    pub neg_ones: Option<usize>,
    pub activation: Activation,
    /// Size of the fixed training set; 0 draws a fresh batch every iteration.
    pub train_size: usize,
    pub test_size: usize,
    /// Evaluation period in iterations; 0 evaluates once per epoch.
    pub eval_every: usize,
    /// LSTM forget-gate bias initialization.
    pub forget_bias: f64,
    /// Global gradient-norm clipping threshold.
    pub clip: Option<f64>,
    pub out: Option<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            task: Task::Adding,
            seq_len: 50,
            batch_size: 50,
            iterations: 10_000,
            model: ModelKind::Enrnn,
            hidden: 40,
            split: 24,
            coupling: true,
            epsilon: 0.0,
            lr: 1e-3,
            lr_recurrent: 1e-4,
            optimizer: OptimizerKind::Rmsprop,
            seed: 0,
            neg_ones: None,
            activation: Activation::Modrelu,
            train_size: 100_000,
            test_size: 10_000,
            eval_every: 0,
            forget_bias: 0.0,
            clip: None,
            out: None,
        }
    }
}

impl TrainConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Canonical JSON text (fixed field order).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.split > self.hidden {
            return fail(format!("split {} exceeds hidden size {}", self.split, self.hidden));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite() && self.lr_recurrent >= 0.0 && self.lr_recurrent.is_finite()) {
            return fail("learning rates must be finite and nonnegative".into());
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return fail("epsilon must be finite and nonnegative".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        match self.task {
            Task::Adding if self.seq_len < 2 => return fail("adding task needs seq_len ≥ 2".into()),
            Task::Copying if self.seq_len < 1 => return fail("copying task needs seq_len ≥ 1".into()),
            _ => {}
        }
        if self.train_size != 0 && self.train_size < self.batch_size {
            return fail("train_size must be 0 (fresh batches) or at least batch_size".into());
        }
        if let Some(k) = self.neg_ones {
            if k > self.split {
                return fail(format!("neg_ones {k} exceeds split {}", self.split));
            }
        }
        if let Some(c) = self.clip {
            if !(c > 0.0) {
                return fail("clip threshold must be positive".into());
            }
        }
        Ok(())
    }

    pub fn neg_ones(&self) -> usize {
        self.neg_ones.unwrap_or(self.split / 2)
    }

    pub fn enrnn_config(&self) -> EnrnnConfig {
        EnrnnConfig {
            inputs: self.task.input_size(),
            outputs: self.task.output_size(),
            hidden: self.hidden,
            long: self.split,
            coupling: self.coupling,
            epsilon: self.epsilon,
            neg_ones: self.neg_ones(),
            activation: self.activation,
        }
    }

    /// Iterations between evaluations.
    pub fn eval_period(&self) -> usize {
        if self.eval_every > 0 {
            self.eval_every
        } else if self.train_size > 0 {
            self.train_size.div_ceil(self.batch_size)
        } else {
            100
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let cfg = TrainConfig { seed: 7, clip: Some(2.0), ..TrainConfig::default() };
        assert_eq!(TrainConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn partial_json_uses_defaults() {
        let cfg = TrainConfig::from_json(r#"{"task": "copying", "seq_len": 100, "split": 10}"#).unwrap();
        assert_eq!(cfg.task, Task::Copying);
        assert_eq!(cfg.hidden, 40);
        assert_eq!(cfg.neg_ones(), 5);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(TrainConfig::from_json(r#"{"split": 41}"#).is_err());
        assert!(TrainConfig::from_json(r#"{"lr": -1.0}"#).is_err());
        assert!(TrainConfig::from_json(r#"{"bogus": 1}"#).is_err());
    }
}
