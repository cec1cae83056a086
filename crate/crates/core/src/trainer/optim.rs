//! SGD with momentum and a step learning-rate schedule.

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::net::ParamStore;
use crate::tensor::Tensor;

/// Parameters with this prefix are exempt from weight decay.
pub const NO_DECAY_PREFIX: &str = "task.";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub lr0: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_step_iters: usize,
    pub lr_factor: f64,
}

impl SgdConfig {
    /// `lr0 * factor^floor(iter / step)`.
    pub fn lr_at(&self, iter: usize) -> f64 {
        self.lr0 * self.lr_factor.powi((iter / self.lr_step_iters) as i32)
    }
}

#[derive(Debug, Clone, Default)]
pub struct OptimizerState {
    velocity: IndexMap<String, Tensor>,
    /// Steps taken so far.
    pub iter: usize,
}

impl OptimizerState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn velocity(&self, name: &str) -> Option<&Tensor> {
        self.velocity.get(name)
    }
}

/// One update `v = m v + (g + wd w)`, `w = w - lr v` over every parameter.
///
/// Returns the learning rate used. Consumes the gradients of the last
/// backward pass; calling twice without one is an error.
pub fn sgd_step(params: &mut ParamStore, state: &mut OptimizerState, cfg: &SgdConfig) -> Result<f64> {
    if !params.grads_ready() {
        return Err(Error::MissingGradient(
            "no backward pass since the last step".into(),
        ));
    }
    let lr = cfg.lr_at(state.iter);
    for (name, p) in params.iter_mut() {
        let wd = if name.starts_with(NO_DECAY_PREFIX) { 0.0 } else { cfg.weight_decay };
        let v = state
            .velocity
            .entry(name.to_string())
            .or_insert_with(|| Tensor::zeros(p.value.shape()));
        if v.shape() != p.value.shape() {
            return Err(Error::ShapeMismatch(format!("velocity for {name}")));
        }
        let (w, g, v) = (p.value.data_mut(), p.grad.data(), v.data_mut());
        for i in 0..w.len() {
            v[i] = cfg.momentum * v[i] + (g[i] + wd * w[i]);
            w[i] -= lr * v[i];
        }
    }
    params.set_grads_ready(false);
    state.iter += 1;
    Ok(lr)
}
