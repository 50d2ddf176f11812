//! Adam optimizer with bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::mlp::ParamSet;
use super::tape::Gradients;
use super::tensor::Tensor;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First/second moment estimates per parameter plus the step counter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
    pub step_count: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &ParamSet, lr: f64) -> Self {
        assert!(lr > 0.0, "learning rate must be positive");
        let zeros: Vec<Tensor> = params
            .ids()
            .map(|id| {
                let (r, c) = params.get(id).shape();
                Tensor::zeros(r, c)
            })
            .collect();
        AdamState {
            first_moment: zeros.clone(),
            second_moment: zeros,
            step_count: 0,
            lr,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
        }
    }
}

/// One bias-corrected Adam update. Parameters with no gradient slot are
/// treated as having a zero gradient. Non-finite gradients abort the update
/// before any state is touched.
pub fn adam_step(params: &mut ParamSet, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    assert_eq!(grads.len(), params.len(), "gradient/parameter count mismatch");
    for id in params.ids() {
        if let Some(g) = grads.get(id) {
            if !g.is_finite() {
                return Err(Error::NonFiniteGradient(params.name(id).to_string()));
            }
        }
    }

    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);

    for id in params.ids() {
        let i = id.index();
        let m = state.first_moment[i].data_mut();
        let v = state.second_moment[i].data_mut();
        let p = params.get_mut(id).data_mut();
        match grads.get(id) {
            Some(g) => {
                for (((pj, mj), vj), gj) in p
                    .iter_mut()
                    .zip(m.iter_mut())
                    .zip(v.iter_mut())
                    .zip(g.data().iter())
                {
                    *mj = state.beta1 * *mj + (1.0 - state.beta1) * gj;
                    *vj = state.beta2 * *vj + (1.0 - state.beta2) * gj * gj;
                    let mhat = *mj / bc1;
                    let vhat = *vj / bc2;
                    *pj -= state.lr * mhat / (vhat.sqrt() + state.eps);
                }
            }
            None => {
                // Zero gradient: moments decay, parameters still move along
                // the decayed first moment.
                for ((pj, mj), vj) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()) {
                    *mj *= state.beta1;
                    *vj *= state.beta2;
                    let mhat = *mj / bc1;
                    let vhat = *vj / bc2;
                    *pj -= state.lr * mhat / (vhat.sqrt() + state.eps);
                }
            }
        }
    }
    Ok(())
}
