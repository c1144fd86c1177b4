//! Seeded generators for the adding and copying benchmarks.

mod dump;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::net::{OutputMode, SequenceBatch};

pub use dump::{read_enr1, write_enr1, Enr1Tensor, ENR1_MAGIC};

/// Number of data symbols the copying task must remember.
pub const COPY_LENGTH: usize = 10;
/// Copying input alphabet: blank, eight data symbols, marker.
pub const COPY_INPUTS: usize = 10;
/// Copying output classes: blank and eight data symbols.
pub const COPY_CLASSES: usize = 9;
pub const COPY_MARKER: usize = 9;
/// Constant-one predictor MSE on the adding task.
pub const ADDING_BASELINE: f64 = 0.167;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Adding,
    Copying,
}

impl Task {
    pub fn input_size(self) -> usize {
        match self {
            Task::Adding => 2,
            Task::Copying => COPY_INPUTS,
        }
    }

    pub fn output_size(self) -> usize {
        match self {
            Task::Adding => 1,
            Task::Copying => COPY_CLASSES,
        }
    }

    pub fn output_mode(self) -> OutputMode {
        match self {
            Task::Adding => OutputMode::Terminal,
            Task::Copying => OutputMode::Sequence,
        }
    }

    /// Sequence length fed to the network for delay/length parameter `t`.
    pub fn sequence_length(self, t: usize) -> usize {
        match self {
            Task::Adding => t,
            Task::Copying => t + 2 * COPY_LENGTH,
        }
    }

    pub fn generate<R: Rng + ?Sized>(self, batch: usize, t: usize, rng: &mut R) -> Result<TaskBatch> {
        match self {
            Task::Adding => gen_adding(batch, t, rng),
            Task::Copying => gen_copying(batch, t, rng),
        }
    }
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "adding" => Ok(Task::Adding),
            "copying" => Ok(Task::Copying),
            other => Err(format!("unknown task `{other}` (expected adding or copying)")),
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Adding => "adding",
            Task::Copying => "copying",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    /// One regression target per example, `batch × 1`.
    Terminal(DenseMatrix),
    /// Class index per example and step.
    Classes(Vec<Vec<usize>>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskBatch {
    pub task: Task,
    pub inputs: SequenceBatch,
    pub targets: Targets,
}

impl TaskBatch {
    pub fn len(&self) -> usize {
        self.inputs.batch()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        let targets = match &self.targets {
            Targets::Terminal(m) => Targets::Terminal(DenseMatrix::from_fn(indices.len(), m.cols(), |i, j| m[(indices[i], j)])),
            Targets::Classes(c) => Targets::Classes(indices.iter().map(|&i| c[i].clone()).collect()),
        };
        Self { task: self.task, inputs: self.inputs.select(indices), targets }
    }

    /// Targets as a dense `batch × steps` (or `batch × 1`) array.
    pub fn targets_dense(&self) -> DenseMatrix {
        match &self.targets {
            Targets::Terminal(m) => m.clone(),
            Targets::Classes(c) => {
                let steps = c.first().map_or(0, Vec::len);
                DenseMatrix::from_fn(c.len(), steps, |i, j| c[i][j] as f64)
            }
        }
    }
}

/// Adding problem: a value channel on `[0, 1)` and a marker channel with one mark
/// in each half; the target is the sum of the two marked values.
pub fn gen_adding<R: Rng + ?Sized>(batch: usize, t: usize, rng: &mut R) -> Result<TaskBatch> {
    if t < 2 {
        return Err(Error::contract("gen_adding: sequence length must be at least 2"));
    }
    let half = t / 2;
    let mut inputs = SequenceBatch::zeros(batch, t, 2);
    let mut targets = DenseMatrix::zeros(batch, 1);
    for b in 0..batch {
        for s in 0..t {
            inputs.set(b, s, 0, rng.gen::<f64>());
        }
        let first = rng.gen_range(0..half);
        let second = rng.gen_range(half..t);
        inputs.set(b, first, 1, 1.0);
        inputs.set(b, second, 1, 1.0);
        targets[(b, 0)] = inputs.get(b, first, 0) + inputs.get(b, second, 0);
    }
    Ok(TaskBatch { task: Task::Adding, inputs, targets: Targets::Terminal(targets) })
}

/// Copying problem of delay `t`: ten data symbols, `t − 1` blanks, a marker, nine
/// blanks; the target is blank until the final ten steps, which repeat the data.
pub fn gen_copying<R: Rng + ?Sized>(batch: usize, t: usize, rng: &mut R) -> Result<TaskBatch> {
    if t < 1 {
        return Err(Error::contract("gen_copying: delay must be at least 1"));
    }
    let len = t + 2 * COPY_LENGTH;
    let mut inputs = SequenceBatch::zeros(batch, len, COPY_INPUTS);
    let mut targets = vec![vec![0usize; len]; batch];
    for b in 0..batch {
        let data: Vec<usize> = (0..COPY_LENGTH).map(|_| rng.gen_range(1..=8)).collect();
        let mut symbols = vec![0usize; len];
        symbols[..COPY_LENGTH].copy_from_slice(&data);
        symbols[COPY_LENGTH + t - 1] = COPY_MARKER;
        for (s, &sym) in symbols.iter().enumerate() {
            inputs.set(b, s, sym, 1.0);
        }
        targets[b][len - COPY_LENGTH..].copy_from_slice(&data);
    }
    Ok(TaskBatch { task: Task::Copying, inputs, targets: Targets::Classes(targets) })
}

/// Loss of the memoryless baseline: 0.167 for adding, `10·ln 8 / (t + 20)` for copying.
pub fn baseline_value(task: Task, t: usize) -> f64 {
    match task {
        Task::Adding => ADDING_BASELINE,
        Task::Copying => COPY_LENGTH as f64 * 8f64.ln() / (t + 2 * COPY_LENGTH) as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn adding_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch = gen_adding(200, 11, &mut rng).unwrap();
        let Targets::Terminal(tg) = &batch.targets else { panic!() };
        for b in 0..200 {
            let marks: Vec<usize> = (0..11).filter(|&s| batch.inputs.get(b, s, 1) == 1.0).collect();
            assert_eq!(marks.len(), 2);
            assert!(marks[0] < 5 && marks[1] >= 5);
            let sum = batch.inputs.get(b, marks[0], 0) + batch.inputs.get(b, marks[1], 0);
            assert_eq!(tg[(b, 0)], sum);
            assert!((0..11).all(|s| (0.0..1.0).contains(&batch.inputs.get(b, s, 0))));
            assert!((0..11).all(|s| matches!(batch.inputs.get(b, s, 1), x if x == 0.0 || x == 1.0)));
        }
        assert!(gen_adding(1, 1, &mut rng).is_err());
    }

    #[test]
    fn copying_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = 7;
        let batch = gen_copying(30, t, &mut rng).unwrap();
        let Targets::Classes(tg) = &batch.targets else { panic!() };
        let len = t + 20;
        for b in 0..30 {
            let sym = |s: usize| (0..10).find(|&k| batch.inputs.get(b, s, k) == 1.0).unwrap();
            let data: Vec<usize> = (0..10).map(sym).collect();
            assert!(data.iter().all(|&d| (1..=8).contains(&d)));
            assert_eq!(&tg[b][len - 10..], data.as_slice());
            assert!(tg[b][..len - 10].iter().all(|&c| c == 0));
            assert_eq!(sym(10 + t - 1), COPY_MARKER);
            let markers = (0..len).filter(|&s| sym(s) == COPY_MARKER).count();
            assert_eq!(markers, 1);
            let one_hot = (0..len).all(|s| (0..10).map(|k| batch.inputs.get(b, s, k)).sum::<f64>() == 1.0);
            assert!(one_hot);
        }
    }

    #[test]
    fn same_seed_same_batch() {
        let a = gen_copying(4, 5, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = gen_copying(4, 5, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        let a = gen_adding(4, 5, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = gen_adding(4, 5, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn baselines() {
        assert_eq!(baseline_value(Task::Adding, 50), 0.167);
        assert!((baseline_value(Task::Copying, 100) - 0.17329).abs() < 1e-5);
        assert!((baseline_value(Task::Copying, 2000) - 0.010294).abs() < 1e-6);
        assert!((baseline_value(Task::Copying, 0) - 1.0397).abs() < 1e-4);
    }
}
