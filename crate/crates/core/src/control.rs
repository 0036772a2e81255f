//! Adaptive step-size controller for adaptive IMLE.
//!
//! The finite-difference step is a fraction `α` of the parameter norm,
//! normalised by the downstream gradient norm:
//!
//! ```text
//! λ = α · mean_i ‖θ‖₂ / ‖∇_z f(z_i)‖₂
//! ```
//!
//! `α` is nudged up or down by `η` depending on whether the moving average
//! `ḡ` of non-zero gradient components per example is below or above the
//! target `c`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Controller state `(α, ḡ, η, c, γ, t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AimleController {
    pub alpha: f64,
    /// Moving average of the per-example L0 norm of the unscaled MAP differences.
    pub g_bar: f64,
    pub eta: f64,
    /// Target number of non-zero gradient components per example.
    pub target: f64,
    pub gamma: f64,
    pub t: u64,
}

impl Default for AimleController {
    fn default() -> Self {
        AimleController {
            alpha: 0.0,
            g_bar: 1.0,
            eta: 1e-3,
            target: 1.0,
            gamma: 0.9,
            t: 0,
        }
    }
}

impl AimleController {
    /// `η = 10⁻²`, the faster preset.
    pub fn fast() -> Self {
        AimleController {
            eta: 1e-2,
            ..Self::default()
        }
    }

    /// A controller that never moves `α` (`η = 0`); the moving average still updates.
    pub fn frozen(alpha: f64) -> Self {
        AimleController {
            alpha,
            eta: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return fail(format!("alpha must be >= 0, got {}", self.alpha));
        }
        if !(self.g_bar.is_finite() && self.g_bar >= 0.0) {
            return fail(format!("g_bar must be >= 0, got {}", self.g_bar));
        }
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return fail(format!("eta must be >= 0, got {}", self.eta));
        }
        if !(self.target.is_finite() && self.target > 0.0) {
            return fail(format!("target must be > 0, got {}", self.target));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return fail(format!("gamma must be in (0, 1], got {}", self.gamma));
        }
        Ok(())
    }

    /// `λ = α · mean_i(‖θ‖ / ‖∇_z f(z_i)‖)`; samples with a zero gradient
    /// norm are left out of the mean.
    pub fn compute_lambda(&self, theta_norm: f64, dgrad_norms: &[f64]) -> Result<f64> {
        let ratios: Vec<f64> = dgrad_norms
            .iter()
            .filter(|&&n| n > 0.0)
            .map(|n| theta_norm / n)
            .collect();
        if ratios.is_empty() {
            return Err(Error::AllDegenerate);
        }
        Ok(self.alpha * ratios.iter().sum::<f64>() / ratios.len() as f64)
    }

    /// `ḡ ← γ ḡ + (1 − γ) mean(batch_l0)`, `t ← t + 1`.
    pub fn update_ema(&self, batch_l0: &[f64]) -> Result<Self> {
        if batch_l0.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let mean = batch_l0.iter().sum::<f64>() / batch_l0.len() as f64;
        Ok(AimleController {
            g_bar: self.gamma * self.g_bar + (1.0 - self.gamma) * mean,
            t: self.t + 1,
            ..*self
        })
    }

    /// `α ← [α + η]₊` if `ḡ ≤ c`, else `[α − η]₊`.
    pub fn update_alpha(&self) -> Self {
        let step = if self.g_bar <= self.target {
            self.eta
        } else {
            -self.eta
        };
        AimleController {
            alpha: (self.alpha + step).max(0.0),
            ..*self
        }
    }

    /// Moving-average update followed by the `α` update.
    pub fn observe(&self, batch_l0: &[f64]) -> Result<Self> {
        Ok(self.update_ema(batch_l0)?.update_alpha())
    }
}
