//! One training run: sampling, optimisation, logging and checkpoints.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::Scene;
use crate::distxform::BinSpec;
use crate::error::{Error, Result};
use crate::loss::TaskWeights;
use crate::net::{checkpoint, LoadReport, Model};

use super::config::TrainConfig;
use super::objective::loss_and_gradients;
use super::optim::{sgd_step, OptimizerState, SgdConfig};
use super::sampler::PatchSampler;

pub const LOSS_LOG: &str = "loss.ndjson";
pub const FINAL_CHECKPOINT: &str = "final.fckp";

/// One line of the loss log. Task log-variances are the values the step used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iter: usize,
    pub total: f64,
    pub seg_nll: Option<f64>,
    pub dist_nll: Option<f64>,
    pub s_seg: f64,
    pub s_dist: f64,
    pub lr: f64,
}

pub struct TrainedRun {
    pub model: Model,
    pub log: Vec<LossRecord>,
    pub checkpoints: Vec<PathBuf>,
    pub init: Option<LoadReport>,
}

/// Trains `cfg.mode` on `scenes` for `cfg.max_iters` steps.
///
/// With `out_dir` set, the loss log is streamed there and checkpoints are
/// written at every schedule boundary (or every `checkpoint_every` steps) and
/// at the end.
pub fn run_experiment(
    scenes: &[Scene],
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
    mut on_record: impl FnMut(&LossRecord),
) -> Result<TrainedRun> {
    cfg.validate()?;
    let mut model = Model::new(cfg.network(), cfg.seed)?;
    let init = match &cfg.init_from {
        Some(path) => Some(model.load_weights(&checkpoint::load_tensors(path)?)?),
        None => None,
    };
    let bins = BinSpec::new(cfg.bins, cfg.radius)?;
    let mut sampler = PatchSampler::new(scenes, &bins, cfg.patch, cfg.patches_per_batch, cfg.sampling, cfg.seed)?;
    let sgd = SgdConfig {
        lr0: cfg.lr0,
        momentum: cfg.momentum,
        weight_decay: cfg.weight_decay,
        lr_step_iters: cfg.lr_step_iters,
        lr_factor: cfg.lr_factor,
    };
    let loss_cfg = cfg.loss_config();
    let mut opt = OptimizerState::new();
    let mut log_file = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            Some(BufWriter::new(File::create(dir.join(LOSS_LOG))?))
        }
        None => None,
    };
    let every = if cfg.checkpoint_every == 0 { cfg.lr_step_iters } else { cfg.checkpoint_every };
    let mut log = Vec::with_capacity(cfg.max_iters);
    let mut checkpoints = Vec::new();

    for iter in 0..cfg.max_iters {
        let batch = sampler.next_batch()?;
        let weights = TaskWeights::from_params(&model.params, false)?;
        let b = loss_and_gradients(&mut model, &batch, &loss_cfg).map_err(|e| match e {
            Error::NonFinite(detail) => Error::NonFiniteLoss { iter, detail },
            e => e,
        })?;
        let lr = sgd_step(&mut model.params, &mut opt, &sgd)?;
        let rec = LossRecord {
            iter,
            total: b.total,
            seg_nll: b.seg_nll,
            dist_nll: b.dist_nll,
            s_seg: weights.s_seg,
            s_dist: weights.s_dist,
            lr,
        };
        if let Some(f) = log_file.as_mut() {
            serde_json::to_writer(&mut *f, &rec)?;
            f.write_all(b"\n")?;
        }
        on_record(&rec);
        log.push(rec);
        if let Some(dir) = out_dir {
            let done = iter + 1;
            if done % every == 0 && done < cfg.max_iters {
                let path = dir.join(format!("iter_{done:06}.fckp"));
                checkpoint::save(&path, &model)?;
                checkpoints.push(path);
            }
        }
    }
    if let Some(dir) = out_dir {
        log_file.take().map(|mut f| f.flush()).transpose()?;
        let path = dir.join(FINAL_CHECKPOINT);
        checkpoint::save(&path, &model)?;
        checkpoints.push(path);
    }
    Ok(TrainedRun { model, log, checkpoints, init })
}
