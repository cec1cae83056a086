//! Encoder-decoder network, its kernels, and checkpoint I/O.

pub mod checkpoint;
pub mod kernels;
mod model;

pub use kernels::PoolIndices;
pub use model::{
    ForwardOutputs, HeadLayout, LoadReport, Model, NetworkConfig, Param, ParamStore, HEAD_DIST,
    HEAD_SEG, LOG_VAR_DIST, LOG_VAR_SEG,
};
