use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams, ParamGradients, Weights};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub first_moment: Weights,
    pub second_moment: Weights,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(config: &ModelConfig) -> Self {
        Self {
            first_moment: Weights::zeros(config),
            second_moment: Weights::zeros(config),
            step: 0,
        }
    }
}

/// One AdamW update. Weight decay shrinks every tensor by `lr * weight_decay`
/// before the bias-corrected adaptive step.
pub fn adamw_step(
    params: &mut ModelParams,
    grads: &ParamGradients,
    state: &mut OptimizerState,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    if !lr.is_finite() || lr < 0.0 || !weight_decay.is_finite() || weight_decay < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "learning rate {lr} and weight decay {weight_decay} must be finite and nonnegative"
        )));
    }
    let grad_tensors = grads.weights.tensors();
    for g in &grad_tensors {
        if let Some(pos) = g.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient of {} has a non-finite entry at flat index {pos}",
                g.name
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    let shrink = 1.0 - lr * weight_decay;

    let thetas = params.weights.tensors_mut();
    let ms = state.first_moment.tensors_mut();
    let vs = state.second_moment.tensors_mut();
    if thetas.len() != grad_tensors.len() || ms.len() != thetas.len() || vs.len() != thetas.len() {
        return Err(Error::Contract("optimizer state does not match the parameters".into()));
    }
    for (((theta, g), m), v) in thetas.into_iter().zip(&grad_tensors).zip(ms).zip(vs) {
        if theta.data.len() != g.data.len() || m.data.len() != g.data.len() || v.data.len() != g.data.len() {
            return Err(Error::Contract(format!("shape mismatch in tensor {}", theta.name)));
        }
        for (((p, &gi), mi), vi) in theta.data.iter_mut().zip(g.data).zip(m.data.iter_mut()).zip(v.data.iter_mut()) {
            *p *= shrink;
            *mi = BETA1 * *mi + (1.0 - BETA1) * gi;
            *vi = BETA2 * *vi + (1.0 - BETA2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
        }
    }
    Ok(())
}

/// Number of warmup steps, `ceil(fraction * total)`.
pub fn warmup_steps(total_steps: usize, warmup_fraction: f64) -> usize {
    // the small offset keeps products like 0.1 * 30 from rounding up a step
    ((warmup_fraction * total_steps as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Linear ramp from 0 to `eta0` over the warmup steps, then linear decay to 0
/// at `total_steps`.
pub fn linear_schedule(step: usize, total_steps: usize, warmup_fraction: f64, eta0: f64) -> f64 {
    let warmup = warmup_steps(total_steps, warmup_fraction).min(total_steps);
    if step < warmup {
        return eta0 * step as f64 / warmup as f64;
    }
    if step >= total_steps {
        return 0.0;
    }
    eta0 * (total_steps - step) as f64 / (total_steps - warmup) as f64
}

/// Settings a serialized optimizer would need; kept for manifests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWSettings {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamWSettings {
    fn default() -> Self {
        Self {
            beta1: BETA1,
            beta2: BETA2,
            epsilon: ADAM_EPSILON,
        }
    }
}
