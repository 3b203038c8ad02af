//! AdamW with decoupled weight decay.

use crate::encoder::ParamSet;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct AdamWState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamWState {
    pub fn new(params: &ParamSet, lr: f64, weight_decay: f64) -> Self {
        let zeros: Vec<Tensor> = params.tensors().map(|t| Tensor::zeros(t.shape())).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }
}

/// One AdamW update. Leaves everything untouched if any gradient is non-finite.
pub fn adamw_step(params: &mut ParamSet, grads: &[Tensor], state: &mut AdamWState) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::dim(format!(
            "{} gradients and {} moment buffers for {} parameters",
            grads.len(),
            state.m.len(),
            params.len()
        )));
    }
    for (i, (g, p)) in grads.iter().zip(params.tensors()).enumerate() {
        if g.shape() != p.shape() {
            return Err(Error::dim(format!("gradient {i} has shape {:?}, parameter {:?}", g.shape(), p.shape())));
        }
        if !g.all_finite() {
            let name = params.iter().nth(i).map(|(n, _)| n.to_string()).unwrap_or_default();
            return Err(Error::NonFinite(format!("gradient of `{name}`; step aborted")));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let decay = 1.0 - state.lr * state.weight_decay;
    for ((p, g), (m, v)) in params
        .tensors_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let p = p.data_mut();
        for i in 0..p.len() {
            let gi = g.data()[i];
            let mi = &mut m.data_mut()[i];
            *mi = state.beta1 * *mi + (1.0 - state.beta1) * gi;
            let vi = &mut v.data_mut()[i];
            *vi = state.beta2 * *vi + (1.0 - state.beta2) * gi * gi;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            p[i] = p[i] * decay - state.lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}

/// Piecewise-constant learning rate.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    pub base_lr: f64,
    /// `(epoch, factor)`: from `epoch` on, the rate is multiplied by `factor`.
    pub milestones: Vec<(usize, f64)>,
}

impl Schedule {
    pub fn new(base_lr: f64, milestones: Vec<(usize, f64)>) -> Result<Self> {
        if !(base_lr > 0.0) {
            return Err(Error::contract(format!("learning rate must be positive, got {base_lr}")));
        }
        for w in milestones.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::contract("milestones must be strictly increasing"));
            }
        }
        if milestones.iter().any(|&(_, f)| !(f > 0.0)) {
            return Err(Error::contract("milestone factors must be positive"));
        }
        Ok(Self { base_lr, milestones })
    }

    pub fn constant(base_lr: f64) -> Self {
        Self {
            base_lr,
            milestones: Vec::new(),
        }
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.milestones
            .iter()
            .filter(|&&(e, _)| epoch >= e)
            .fold(self.base_lr, |lr, &(_, f)| lr * f)
    }
}
