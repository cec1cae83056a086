use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid raster: {0}")]
    InvalidRaster(String),
    #[error("distance transform has no seed pixels")]
    EmptySeeds,
    #[error("truncation threshold must be positive and finite, got {0}")]
    InvalidThreshold(f64),
    #[error("bin count must be a positive even integer, got {0}")]
    InvalidBinCount(usize),
    #[error("distance value {value} outside [-{radius}, {radius}]")]
    ThresholdMismatch { value: f64, radius: f64 },
    #[error("threshold bin {bin} out of range for {bins} bins")]
    BadThreshold { bin: usize, bins: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("spatial extent {0} is not even")]
    OddExtent(usize),
    #[error("pooling index {index} outside its 2x2 window")]
    IndexOutOfWindow { index: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("class index {index} >= channel count {channels}")]
    BadClassIndex { index: usize, channels: usize },
    #[error("forward caches are missing: {0}")]
    MissingCache(String),
    #[error("missing gradient for parameter {0}")]
    MissingGradient(String),
    #[error("loss mode mismatch: {0}")]
    ModeMismatch(String),
    #[error("invalid network config: {0}")]
    InvalidNetwork(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("scene {scene} ({height}x{width}) smaller than patch {patch}")]
    SceneTooSmall {
        scene: String,
        height: usize,
        width: usize,
        patch: usize,
    },
    #[error("non-finite loss at iteration {iter}: {detail}")]
    NonFiniteLoss { iter: usize, detail: String },
    #[error("image and mask extents differ: {0}")]
    ExtentMismatch(String),
    #[error("cannot parse location/index from file name {0:?}")]
    UnparseableName(String),
    #[error("duplicate scene id {0}")]
    DuplicateId(String),
    #[error("validation split is empty")]
    EmptySplit,
    #[error("invalid generator parameters: {0}")]
    BadParams(String),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error("bad distance raster: {0}")]
    DistanceRaster(String),
    #[error("failed to decode {path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
