use log::warn;

use crate::error::{Error, Result};
use crate::linalg::{dominant_eigenpair, spectral_radius, DenseMatrix, DominantEigenData};

/// Dominant eigenpairs whose defect score falls below this are treated as defective.
pub const DEFECT_THRESHOLD: f64 = 1e-8;

/// What [`EigenNormBlock::update_step`] did.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    /// Plain step on `T`; normalization still off.
    Unnormalized,
    /// Plain step on `T` that pushed `ρ(T)` above one and switched normalization on.
    Activated,
    /// Step along the normalized gradient, followed by renormalization.
    Normalized,
    /// Normalization is on but the dominant eigenvalue was near-defective, so the
    /// raw `∂L/∂W` was applied to `T` for this step.
    DefectiveFallback,
}

/// Short-term recurrent matrix `W = T / (ρ(T) + ε)` with deferred activation.
#[derive(Clone, Debug)]
pub struct EigenNormBlock {
    t: DenseMatrix,
    epsilon: f64,
    active: bool,
    eig: Option<DominantEigenData>,
    w: DenseMatrix,
}

impl EigenNormBlock {
    /// An inactive block with `W = T`.
    pub fn new(t: DenseMatrix, epsilon: f64) -> Result<Self> {
        if !t.is_square() {
            return Err(Error::contract("EigenNormBlock: T must be square"));
        }
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::contract("EigenNormBlock: epsilon must be finite and nonnegative"));
        }
        if !t.is_finite() {
            return Err(Error::NonFinite("EigenNormBlock T"));
        }
        let w = t.clone();
        Ok(Self { t, epsilon, active: false, eig: None, w })
    }

    /// Rebuilds a block from stored state, recomputing the cache when active.
    pub fn restore(t: DenseMatrix, epsilon: f64, active: bool) -> Result<Self> {
        let mut block = Self::new(t, epsilon)?;
        if active {
            block.activate()?;
        }
        Ok(block)
    }

    pub fn t(&self) -> &DenseMatrix {
        &self.t
    }

    pub fn w(&self) -> &DenseMatrix {
        &self.w
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn is_active(&self) -> bool {
        self.active
    }

    pub fn size(&self) -> usize {
        self.t.rows()
    }

    /// Cached eigen-data of the current `T`; present only while active.
    pub fn eig(&self) -> Option<&DominantEigenData> {
        self.eig.as_ref()
    }

    /// Turns normalization on (permanently) and normalizes the current `T`.
    pub fn activate(&mut self) -> Result<()> {
        self.active = true;
        self.normalize().map(|_| ())
    }

    /// Replaces `T` and recomputes `W`.
    pub fn set_t(&mut self, t: DenseMatrix) -> Result<()> {
        if t.shape() != self.t.shape() {
            return Err(Error::contract("EigenNormBlock::set_t: shape mismatch"));
        }
        self.t = t;
        self.eig = None;
        self.normalize().map(|_| ())
    }

    /// Recomputes `W` from `T`, refreshing the eigen cache when active.
    pub fn normalize(&mut self) -> Result<&DenseMatrix> {
        if !self.t.is_finite() {
            return Err(Error::NonFinite("EigenNormBlock T"));
        }
        if !self.active {
            self.eig = None;
            self.w = self.t.clone();
            return Ok(&self.w);
        }
        let eig = dominant_eigenpair(&self.t)?;
        let denom = eig.rho + self.epsilon;
        if denom <= 0.0 {
            return Err(Error::NonFinite("normalization by zero spectral radius"));
        }
        self.w = self.t.scale(1.0 / denom);
        self.eig = Some(eig);
        Ok(&self.w)
    }

    /// Gradient with respect to `T` of a loss whose gradient with respect to `W` is `dl_dw`.
    pub fn eigennorm_gradient(&self, dl_dw: &DenseMatrix) -> Result<DenseMatrix> {
        if !self.active {
            return Err(Error::contract("eigennorm_gradient: normalization is not active"));
        }
        let eig = self
            .eig
            .as_ref()
            .ok_or_else(|| Error::contract("eigennorm_gradient: eigen cache is stale"))?;
        if dl_dw.shape() != self.t.shape() {
            return Err(Error::contract("eigennorm_gradient: gradient shape mismatch"));
        }
        normalized_gradient(eig, &self.w, dl_dw, self.epsilon)
    }

    /// One optimizer step on `T`. `apply(param, grad)` performs the in-place update.
    pub fn update_step(
        &mut self,
        dl_dw: &DenseMatrix,
        mut apply: impl FnMut(&mut [f64], &[f64]),
    ) -> Result<StepOutcome> {
        if dl_dw.shape() != self.t.shape() {
            return Err(Error::contract("update_step: gradient shape mismatch"));
        }
        if !self.active {
            apply(self.t.data_mut(), dl_dw.data());
            self.normalize()?;
            if spectral_radius(&self.t)? > 1.0 {
                self.activate()?;
                return Ok(StepOutcome::Activated);
            }
            return Ok(StepOutcome::Unnormalized);
        }
        let (grad, outcome) = match self.eigennorm_gradient(dl_dw) {
            Ok(g) => (g, StepOutcome::Normalized),
            Err(Error::DefectiveEigenvalue { score }) => {
                warn!("near-defective dominant eigenvalue (score {score:e}); applying unnormalized gradient");
                (dl_dw.clone(), StepOutcome::DefectiveFallback)
            }
            Err(e) => return Err(e),
        };
        apply(self.t.data_mut(), grad.data());
        self.normalize()?;
        Ok(outcome)
    }
}

/// `∂L/∂T = (1/ρ̃)·[G − (1/ρ)·⟨G, W⟩·C]` with `ρ̃ = ρ + ε`.
///
/// `C = ρ·∂ρ/∂T`, so the `1/ρ` factor makes this the exact derivative for any `ε ≥ 0`.
pub fn normalized_gradient(
    eig: &DominantEigenData,
    w: &DenseMatrix,
    g: &DenseMatrix,
    epsilon: f64,
) -> Result<DenseMatrix> {
    if eig.defect_score < DEFECT_THRESHOLD || eig.rho == 0.0 {
        return Err(Error::DefectiveEigenvalue { score: eig.defect_score });
    }
    let rho_t = eig.rho + epsilon;
    let inner: f64 = g.data().iter().zip(w.data()).map(|(a, b)| a * b).sum();
    let k = inner / eig.rho;
    let data = g.data().iter().zip(eig.c.data()).map(|(gi, ci)| (gi - k * ci) / rho_t).collect();
    let out = DenseMatrix::new(g.rows(), g.cols(), data).map_err(|_| Error::NonFinite("eigennorm gradient"))?;
    Ok(out)
}
