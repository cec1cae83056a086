//! Finite-difference check of the analytic gradients on a miniature network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::distxform::{quantize, signed_truncated_distance, BinSpec, Mask};
use crate::error::Result;
use crate::loss::{LossConfig, LossMode};
use crate::net::{HeadLayout, Model, NetworkConfig, LOG_VAR_DIST, LOG_VAR_SEG};
use crate::tensor::Tensor;

use super::objective::{loss_and_gradients, loss_of_outputs};
use super::sampler::Batch;

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
/// Denominator floor for the relative error.
pub const REL_ERR_FLOOR: f64 = 1e-6;
pub const STEP: f64 = 1e-5;
/// Steps shrink tenfold while a difference straddles a kink, down to this.
pub const MIN_STEP: f64 = 1e-9;

#[derive(Debug, Clone, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub count: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// Entries that needed a step below [`STEP`] to stay on one smooth piece.
    pub refined: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub checked: usize,
    /// Entries where no step down to [`MIN_STEP`] avoided a kink; counted as failures.
    pub unresolved: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Two-stage cascade on 8x8 inputs with the learned task weighting.
pub fn miniature(seed: u64) -> Result<(Model, Batch, LossConfig)> {
    let cfg = NetworkConfig {
        stages: 2,
        channels_per_stage: vec![4, 6],
        convs_per_stage: vec![2, 2],
        kernel_size: 3,
        num_distance_classes: 10,
        num_seg_classes: 2,
        input_channels: 3,
        heads: HeadLayout::Cascade,
    };
    let mut model = Model::new(cfg, seed)?;
    model.params.get_mut(LOG_VAR_SEG).unwrap().value.data_mut()[0] = 0.3;
    model.params.get_mut(LOG_VAR_DIST).unwrap().value.data_mut()[0] = -0.4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let (n, hw) = (2, 8);
    let input = Tensor::new(
        [n, 3, hw, hw],
        (0..n * 3 * hw * hw).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )?;
    let bins = BinSpec::new(10, 4.0)?;
    let (mut seg, mut dist) = (Vec::new(), Vec::new());
    for _ in 0..n {
        let m = Mask::from_fn(hw, hw, |_, _| rng.gen_bool(0.4))?;
        let dcm = quantize(&signed_truncated_distance(&m, bins.radius())?, &bins)?;
        seg.extend(m.values().iter().map(|&v| usize::from(v)));
        dist.extend(dcm.classes().data().iter().map(|&c| usize::from(c)));
    }
    let batch = Batch { input, seg_targets: seg, dist_targets: dist };
    Ok((model, batch, LossConfig::new(LossMode::MultitaskUncertainty)))
}

/// Compares every analytic gradient entry to a central difference.
///
/// Central differences are only meaningful inside one smooth piece of the
/// network, so the step shrinks until both probes keep the activation
/// pattern of the unperturbed point. `corrupt` flips the sign of the largest
/// analytic entry first; the check must then fail.
pub fn gradcheck(seed: u64, corrupt: bool) -> Result<GradCheckReport> {
    let (mut model, batch, cfg) = miniature(seed)?;
    loss_and_gradients(&mut model, &batch, &cfg)?;
    let mut analytic: Vec<(String, Tensor)> = model
        .params
        .iter()
        .map(|(n, p)| (n.to_string(), p.grad.clone()))
        .collect();
    if corrupt {
        let (mut best, mut at) = (0.0, (0, 0));
        for (pi, (_, g)) in analytic.iter().enumerate() {
            for (i, v) in g.data().iter().enumerate() {
                if v.abs() > best {
                    best = v.abs();
                    at = (pi, i);
                }
            }
        }
        analytic[at.0].1.data_mut()[at.1] *= -1.0;
    }
    let loss_at = |model: &Model| -> Result<(f64, Vec<u8>)> {
        let out = model.forward(&batch.input)?;
        let pattern = out.activation_pattern().unwrap_or_default();
        Ok((loss_of_outputs(model, &out, &batch, &cfg)?.total, pattern))
    };
    let (_, base) = loss_at(&model)?;
    let mut params = Vec::new();
    let (mut checked, mut unresolved) = (0, 0);
    for (name, grad) in &analytic {
        let mut pc = ParamCheck {
            name: name.clone(),
            count: grad.len(),
            max_rel_err: 0.0,
            max_abs_err: 0.0,
            refined: 0,
        };
        for i in 0..grad.len() {
            let orig = model.params.get(name).unwrap().value.data()[i];
            let mut numeric = None;
            let mut h = STEP;
            while h >= MIN_STEP {
                model.params.get_mut(name).unwrap().value.data_mut()[i] = orig + h;
                let (up, p_up) = loss_at(&model)?;
                model.params.get_mut(name).unwrap().value.data_mut()[i] = orig - h;
                let (down, p_down) = loss_at(&model)?;
                if p_up == base && p_down == base {
                    numeric = Some((up - down) / (2.0 * h));
                    break;
                }
                h /= 10.0;
            }
            model.params.get_mut(name).unwrap().value.data_mut()[i] = orig;
            if h < STEP {
                pc.refined += 1;
            }
            let a = grad.data()[i];
            match numeric {
                Some(n) => {
                    pc.max_rel_err = pc.max_rel_err.max(relative_error(a, n));
                    pc.max_abs_err = pc.max_abs_err.max((a - n).abs());
                }
                None => unresolved += 1,
            }
        }
        checked += grad.len();
        params.push(pc);
    }
    let max_rel_err = params.iter().map(|p| p.max_rel_err).fold(0.0, f64::max);
    Ok(GradCheckReport {
        params,
        checked,
        unresolved,
        max_rel_err,
        tolerance: GRADCHECK_TOLERANCE,
        passed: unresolved == 0 && max_rel_err <= GRADCHECK_TOLERANCE,
    })
}
