//! Training loop, optimizer, patch sampling and gradient checking.

mod config;
mod experiment;
mod gradcheck;
mod objective;
mod optim;
mod sampler;

pub use config::{SceneSampling, TrainConfig};
pub use experiment::{run_experiment, LossRecord, TrainedRun, FINAL_CHECKPOINT, LOSS_LOG};
pub use gradcheck::{
    gradcheck, miniature, relative_error, GradCheckReport, ParamCheck, GRADCHECK_TOLERANCE, MIN_STEP, REL_ERR_FLOOR, STEP,
};
pub use objective::{batch_loss, loss_and_gradients, loss_of_outputs};
pub use optim::{sgd_step, OptimizerState, SgdConfig, NO_DECAY_PREFIX};
pub use sampler::{assemble, normalize_byte, scene_distance_classes, Batch, PatchDraw, PatchSampler};
