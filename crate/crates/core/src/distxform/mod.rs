//! Distance-class label encoding for building masks.

mod codec;
mod edt;
pub mod io;
mod mask;
mod raster;

pub use codec::{
    decode_mask, encode_one_hot, quantize, signed_truncated_distance, BinSpec, DistanceClassMap,
    OneHot, SignedDistanceMap,
};
pub use edt::{squared_edt, EmptySeeds};
pub use mask::{boundary_pixels, Mask};
pub use raster::Raster;
