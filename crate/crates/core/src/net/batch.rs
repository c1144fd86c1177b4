use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Batch-major sequence tensor `[batch, steps, features]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceBatch {
    batch: usize,
    steps: usize,
    features: usize,
    data: Vec<f64>,
}

impl SequenceBatch {
    pub fn new(batch: usize, steps: usize, features: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != batch * steps * features {
            return Err(Error::contract(format!(
                "SequenceBatch: {} values for shape [{batch}, {steps}, {features}]",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("SequenceBatch"));
        }
        Ok(Self { batch, steps, features, data })
    }

    pub fn zeros(batch: usize, steps: usize, features: usize) -> Self {
        Self { batch, steps, features, data: vec![0.0; batch * steps * features] }
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.batch, self.steps, self.features]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, b: usize, t: usize, f: usize) -> f64 {
        self.data[(b * self.steps + t) * self.features + f]
    }

    pub fn set(&mut self, b: usize, t: usize, f: usize, value: f64) {
        self.data[(b * self.steps + t) * self.features + f] = value;
    }

    /// The `batch × features` slice at time `t`.
    pub fn step(&self, t: usize) -> DenseMatrix {
        DenseMatrix::from_fn(self.batch, self.features, |b, f| self.get(b, t, f))
    }

    /// The listed examples, in order, as a new batch.
    pub fn select(&self, indices: &[usize]) -> Self {
        let per = self.steps * self.features;
        let mut data = Vec::with_capacity(indices.len() * per);
        for &i in indices {
            data.extend_from_slice(&self.data[i * per..(i + 1) * per]);
        }
        Self { batch: indices.len(), steps: self.steps, features: self.features, data }
    }

    /// Stacks per-step `batch × features` matrices into a batch-major tensor.
    pub fn from_steps(steps: &[DenseMatrix]) -> Result<Self> {
        let (batch, features) = steps.first().map(|m| m.shape()).unwrap_or((0, 0));
        if steps.iter().any(|m| m.shape() != (batch, features)) {
            return Err(Error::contract("SequenceBatch::from_steps: inconsistent step shapes"));
        }
        let mut out = Self::zeros(batch, steps.len(), features);
        for (t, m) in steps.iter().enumerate() {
            for b in 0..batch {
                for f in 0..features {
                    out.set(b, t, f, m[(b, f)]);
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_batch_major() {
        let s = SequenceBatch::new(2, 3, 2, (0..12).map(f64::from).collect()).unwrap();
        assert_eq!(s.get(1, 0, 1), 7.0);
        assert_eq!(s.step(2), DenseMatrix::from_rows(&[&[4.0, 5.0], &[10.0, 11.0]]));
        let steps: Vec<_> = (0..3).map(|t| s.step(t)).collect();
        assert_eq!(SequenceBatch::from_steps(&steps).unwrap(), s);
        assert_eq!(s.select(&[1]).data(), &s.data()[6..]);
        assert!(SequenceBatch::new(2, 3, 2, vec![0.0; 11]).is_err());
    }
}
