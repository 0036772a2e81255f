//! First-order optimizers for the toy training loop.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum OptimizerConfig {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Adam {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn adam(lr: f64) -> Self {
        match Self::default() {
            OptimizerConfig::Adam {
                beta1, beta2, eps, ..
            } => OptimizerConfig::Adam {
                lr,
                beta1,
                beta2,
                eps,
            },
            OptimizerConfig::Sgd { .. } => unreachable!(),
        }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerConfig::Sgd { lr } | OptimizerConfig::Adam { lr, .. } => lr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lr = self.lr();
        if !(lr.is_finite() && lr > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be > 0, got {lr}"
            )));
        }
        if let OptimizerConfig::Adam {
            beta1, beta2, eps, ..
        } = *self
        {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || eps <= 0.0 {
                return Err(Error::InvalidParameter(
                    "adam requires betas in [0, 1) and eps > 0".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Moment buffers; empty until the first Adam step.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

/// One in-place update of `params` along `-grad`.
pub fn optimizer_step(
    cfg: &OptimizerConfig,
    params: &mut [f64],
    grad: &[f64],
    state: &mut OptimizerState,
) -> Result<()> {
    check_dim(params.len(), grad.len())?;
    state.step += 1;
    match *cfg {
        OptimizerConfig::Sgd { lr } => {
            for (p, g) in params.iter_mut().zip(grad) {
                *p -= lr * g;
            }
        }
        OptimizerConfig::Adam {
            lr,
            beta1,
            beta2,
            eps,
        } => {
            if state.m.len() != params.len() {
                state.m = vec![0.0; params.len()];
                state.v = vec![0.0; params.len()];
            }
            let t = state.step as i32;
            let c1 = 1.0 - beta1.powi(t);
            let c2 = 1.0 - beta2.powi(t);
            for ((p, g), (m, v)) in params
                .iter_mut()
                .zip(grad)
                .zip(state.m.iter_mut().zip(state.v.iter_mut()))
            {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
        }
    }
    Ok(())
}
