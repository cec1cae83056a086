//! Building footprint segmentation with a truncated signed-distance
//! auxiliary task.

pub mod data;
pub mod distxform;
pub mod error;
pub mod eval;
pub mod loss;
pub mod net;
pub mod tensor;
pub mod trainer;

pub use data::Scene;
pub use distxform::{BinSpec, DistanceClassMap, Mask, Raster, SignedDistanceMap};
pub use error::{Error, Result};
pub use loss::{LossConfig, LossMode};
pub use net::{HeadLayout, Model, NetworkConfig};
pub use tensor::Tensor;
pub use trainer::TrainConfig;
