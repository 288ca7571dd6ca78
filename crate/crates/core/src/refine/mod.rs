//! Refinement objectives over the latent code and the optimizer that drives
//! reconstruction and editing sessions.

mod objective;
mod optimize;

pub use objective::{
    boundary_anchors, chamfer_grad_code, locality_mask, partial_edit_loss, pullback_anchor_grads,
    silhouette_loss, BoundaryAnchor, Evaluation, Linearization, LossTerms, Objective, PartialEdit,
};
pub use optimize::{optimize, optimize_with, Adam, RefinementTrace, StepRecord, StopReason};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefinementConfig {
    pub steps: usize,
    /// Adam learning rate, in per-mode spreads per step.
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Steps between re-rasterizing and re-lifting contour anchors.
    pub reanchor_every: usize,
    /// Locality radius of editing strokes, pixels.
    pub t: f64,
    pub lambda_mask: f64,
    pub lambda_normal: f64,
    /// Stop when the mean loss of the last this-many steps improved on the
    /// mean of the window before by less than `early_stop_tol` (relative).
    /// Zero disables early stopping.
    pub early_stop_window: usize,
    pub early_stop_tol: f64,
    /// Keep a code snapshot in every trace record.
    pub record_codes: bool,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        RefinementConfig {
            steps: 400,
            step_size: 5e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            reanchor_every: 1,
            t: 12.0,
            lambda_mask: 1.0,
            lambda_normal: 1.0,
            early_stop_window: 25,
            early_stop_tol: 1e-6,
            record_codes: false,
        }
    }
}

impl RefinementConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.steps == 0 {
            return bad("steps must be at least 1");
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad("step_size must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("momentum decays must lie in [0, 1)");
        }
        if self.reanchor_every == 0 {
            return bad("reanchor_every must be at least 1");
        }
        if self.t.is_nan() || self.t < 0.0 {
            return bad("t must be non-negative");
        }
        if self.lambda_mask < 0.0 || self.lambda_normal < 0.0 {
            return bad("term weights must be non-negative");
        }
        Ok(())
    }
}
