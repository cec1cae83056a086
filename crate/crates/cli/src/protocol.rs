//! The synthetic desk benchmark and the staged regime schedule.

use std::path::{Path, PathBuf};

use fpseg::data::{generate_synthetic, split_dataset, DatasetSplit, SplitRule, SynthParams};
use fpseg::{LossMode, Result, TrainConfig};

pub const BENCH_SCENES: usize = 250;
pub const BENCH_EXTENT: usize = 128;
pub const BENCH_SEED: u64 = 2024;
pub const BENCH_TRAIN_FRACTION: f64 = 0.8;
/// Learning rate for regimes that start from the distance-task weights.
pub const STAGED_LR: f64 = 0.001;

pub fn benchmark_split_rule() -> SplitRule {
    SplitRule::Ratio { train_fraction: BENCH_TRAIN_FRACTION, seed: BENCH_SEED }
}

/// 200 training and 50 validation scenes of 128x128.
pub fn synthetic_benchmark() -> Result<DatasetSplit> {
    let scenes = generate_synthetic(BENCH_SCENES, BENCH_EXTENT, BENCH_SEED, &SynthParams::default())?;
    split_dataset(scenes, benchmark_split_rule())
}

/// Quick schedule sized for a single CPU core: 1,000 steps on 64x64 patches.
pub fn quickstart(mode: LossMode, seed: u64) -> TrainConfig {
    TrainConfig {
        mode,
        seed,
        max_iters: 1000,
        lr_step_iters: 800,
        patch: 64,
        channels: vec![8, 16, 32],
        convs_per_stage: vec![2, 2, 2],
        ..TrainConfig::default()
    }
}

/// Regime order of the comparison table; later regimes start from
/// `dist_only` weights.
pub const REGIME_ORDER: [LossMode; 4] = LossMode::ALL;

/// Applies the staging: multi-task regimes load `dist_checkpoint` and use [`STAGED_LR`].
pub fn staged(mut cfg: TrainConfig, dist_checkpoint: Option<&Path>) -> TrainConfig {
    if matches!(cfg.mode, LossMode::MultitaskEqual | LossMode::MultitaskUncertainty) {
        if let Some(p) = dist_checkpoint {
            cfg.init_from = Some(PathBuf::from(p));
            cfg.lr0 = STAGED_LR;
        }
    }
    cfg
}
