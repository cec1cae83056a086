//! Batch loss and its gradients with respect to every parameter.

use crate::error::{Error, Result};
use crate::loss::{nll_pixelwise, nll_with_grad, total_loss, LossBreakdown, LossConfig, TaskWeights};
use crate::net::{ForwardOutputs, Model, LOG_VAR_DIST, LOG_VAR_SEG};
use crate::tensor::Tensor;

use super::sampler::Batch;

fn head<'a>(logits: &'a Option<Tensor>, what: &str) -> Result<&'a Tensor> {
    logits
        .as_ref()
        .ok_or_else(|| Error::ModeMismatch(format!("the network has no {what} head")))
}

/// Loss only, without caches.
pub fn batch_loss(model: &Model, batch: &Batch, cfg: &LossConfig) -> Result<LossBreakdown> {
    loss_of_outputs(model, &model.predict(&batch.input)?, batch, cfg)
}

/// Loss of already computed network outputs.
pub fn loss_of_outputs(model: &Model, out: &ForwardOutputs, batch: &Batch, cfg: &LossConfig) -> Result<LossBreakdown> {
    let seg = match cfg.mode.uses_seg() {
        true => Some(nll_pixelwise(head(&out.seg_logits, "segmentation")?, &batch.seg_targets)?),
        false => None,
    };
    let dist = match cfg.mode.uses_dist() {
        true => Some(nll_pixelwise(head(&out.dist_logits, "distance")?, &batch.dist_targets)?),
        false => None,
    };
    let w = TaskWeights::from_params(&model.params, cfg.mode.learns_task_weights())?;
    total_loss(seg, dist, &w, cfg)
}

/// Forward, loss and backward; fills every gradient slot of `model.params`.
pub fn loss_and_gradients(model: &mut Model, batch: &Batch, cfg: &LossConfig) -> Result<LossBreakdown> {
    let out = model.forward(&batch.input)?;
    let seg = match cfg.mode.uses_seg() {
        true => Some(nll_with_grad(head(&out.seg_logits, "segmentation")?, &batch.seg_targets)?),
        false => None,
    };
    let dist = match cfg.mode.uses_dist() {
        true => Some(nll_with_grad(head(&out.dist_logits, "distance")?, &batch.dist_targets)?),
        false => None,
    };
    let w = TaskWeights::from_params(&model.params, cfg.mode.learns_task_weights())?;
    let b = total_loss(seg.as_ref().map(|s| s.0), dist.as_ref().map(|d| d.0), &w, cfg)?;
    if !b.total.is_finite() {
        return Err(Error::NonFinite(format!("loss {}", b.total)));
    }
    let scaled = |g: Option<(f64, Tensor)>, f: f64| {
        g.map(|(_, mut t)| {
            t.scale(f);
            t
        })
    };
    let g_seg = scaled(seg, b.seg_factor);
    let g_dist = scaled(dist, b.dist_factor);
    model.backward(&out, g_dist.as_ref(), g_seg.as_ref())?;
    for (name, g) in [(LOG_VAR_SEG, b.grad_s_seg), (LOG_VAR_DIST, b.grad_s_dist)] {
        if let Some(p) = model.params.get_mut(name) {
            p.grad.data_mut()[0] = g;
        }
    }
    Ok(b)
}
