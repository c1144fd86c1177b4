use serde::Serialize;

use super::jacobian::{forward_for_analysis, jacobian_norms_per_example, short_state_norms};
use crate::error::{Error, Result};
use crate::linalg::spectral_norm;
use crate::net::{Activation, EnrnnParams, SequenceBatch};

/// Absolute slack allowed above each bound.
pub const BOUND_SLACK: f64 = 1e-8;

pub const BOUND_HEADER: &str = "lag,empirical_state,bound_state,empirical_input,bound_input,pass";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundRow {
    pub lag: usize,
    /// Max over start steps and examples of `‖∂h⁽ˢ⁾_{t+lag}/∂h⁽ˢ⁾_t‖₂`.
    pub empirical_state: f64,
    /// `‖W_S‖₂^lag`.
    pub bound_state: f64,
    /// Max over start steps and examples of `‖∂h⁽ˢ⁾_{t+lag}/∂x_t‖₂`.
    pub empirical_input: f64,
    /// `‖W_S‖₂^lag · ‖U_S‖₂`.
    pub bound_input: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub norm_ws: f64,
    pub norm_us: f64,
    pub rows: Vec<BoundRow>,
}

impl BoundReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{BOUND_HEADER}\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.lag, r.empirical_state, r.bound_state, r.empirical_input, r.bound_input, r.pass
            ));
        }
        out
    }
}

/// Outcome of a bound audit: a report, or a refusal when the hypotheses fail.
#[derive(Clone, Debug, PartialEq)]
pub enum BoundAudit {
    Report(BoundReport),
    Refused(String),
}

/// Compares short-state Jacobian norms at each lag with the contraction bounds.
/// Requires a ReLU activation and `‖W_S‖₂ < 1`; otherwise returns a refusal.
pub fn theorem_bound_report(params: &EnrnnParams, inputs: &SequenceBatch, lags: &[usize]) -> Result<BoundAudit> {
    let w = params.w_s.w();
    let norm_ws = spectral_norm(w)?;
    if params.activation != Activation::Relu {
        return Ok(BoundAudit::Refused(format!(
            "the bound holds for ReLU networks with ‖W_S‖₂ < 1; activation is {:?}",
            params.activation
        )));
    }
    if norm_ws >= 1.0 {
        return Ok(BoundAudit::Refused(format!(
            "the bound holds for ReLU networks with ‖W_S‖₂ < 1; ‖W_S‖₂ = {norm_ws}"
        )));
    }
    let steps = inputs.steps();
    if let Some(&bad) = lags.iter().find(|&&l| l >= steps) {
        return Err(Error::contract(format!("bound report: lag {bad} needs more than {steps} steps")));
    }
    let norm_us = spectral_norm(&params.u_s)?;
    let max_lag = lags.iter().copied().max().unwrap_or(0);

    let (eff, tape) = forward_for_analysis(params, inputs)?;
    let mut state_max = vec![0.0f64; max_lag + 1];
    for b in 0..inputs.batch() {
        for row in short_state_norms(&eff, params.activation, &tape, b, max_lag)? {
            for (lag, v) in row.into_iter().enumerate() {
                state_max[lag] = state_max[lag].max(v);
            }
        }
    }
    let grids = jacobian_norms_per_example(params, inputs)?;

    let rows = lags
        .iter()
        .map(|&lag| {
            let empirical_input = grids.iter().fold(0.0f64, |m, (s, _)| m.max(s.lag_max(lag)));
            let empirical_state = state_max[lag];
            let bound_state = norm_ws.powi(lag as i32);
            let bound_input = bound_state * norm_us;
            BoundRow {
                lag,
                empirical_state,
                bound_state,
                empirical_input,
                bound_input,
                pass: empirical_state <= bound_state + BOUND_SLACK && empirical_input <= bound_input + BOUND_SLACK,
            }
        })
        .collect();
    Ok(BoundAudit::Report(BoundReport { norm_ws, norm_us, rows }))
}
