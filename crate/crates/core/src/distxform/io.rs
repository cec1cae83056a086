//! File formats: 8-bit PNG masks and class maps, and the `SDT1` distance raster.
//!
//! `SDT1` layout, all little-endian:
//!
//! ```text
//! b"SDT1" | u32 height | u32 width | f32 radius | height*width f32, row-major
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use image::{GrayImage, ImageReader};

use super::{BinSpec, DistanceClassMap, Mask, Raster, SignedDistanceMap};
use crate::error::{Error, Result};

const SDT_MAGIC: &[u8; 4] = b"SDT1";

pub(crate) fn read_gray(path: &Path) -> Result<Raster<u8>> {
    let img = ImageReader::open(path)?
        .with_guessed_format()?
        .decode()
        .map_err(|source| Error::Decode {
            path: path.to_path_buf(),
            source,
        })?
        .into_luma8();
    let (w, h) = img.dimensions();
    Raster::new(h as usize, w as usize, img.into_raw())
}

pub(crate) fn write_gray(path: &Path, raster: &Raster<u8>) -> Result<()> {
    let img = GrayImage::from_raw(
        raster.width() as u32,
        raster.height() as u32,
        raster.data().to_vec(),
    )
    .expect("buffer matches extent");
    img.save(path)?;
    Ok(())
}

/// Reads an 8-bit mask; values `>= 128` are building.
pub fn read_mask_png(path: &Path) -> Result<Mask> {
    Mask::from_raster(read_gray(path)?.map(|v| (v >= 128) as u8))
}

/// Writes a mask as 0/255.
pub fn write_mask_png(path: &Path, mask: &Mask) -> Result<()> {
    write_gray(path, &mask.raster().map(|v| v * 255))
}

pub fn read_class_png(path: &Path, bins: &BinSpec) -> Result<DistanceClassMap> {
    DistanceClassMap::new(bins.clone(), read_gray(path)?)
}

/// Writes raw bin indices as gray levels.
pub fn write_class_png(path: &Path, dcm: &DistanceClassMap) -> Result<()> {
    write_gray(path, dcm.classes())
}

pub fn encode_sdt(sdm: &SignedDistanceMap) -> Vec<u8> {
    let n = sdm.height() * sdm.width();
    let mut out = Vec::with_capacity(16 + 4 * n);
    out.extend_from_slice(SDT_MAGIC);
    out.extend_from_slice(&(sdm.height() as u32).to_le_bytes());
    out.extend_from_slice(&(sdm.width() as u32).to_le_bytes());
    out.extend_from_slice(&(sdm.radius() as f32).to_le_bytes());
    for &v in sdm.values().data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_sdt(mut bytes: &[u8]) -> Result<SignedDistanceMap> {
    let bad = |m: &str| Error::DistanceRaster(m.to_string());
    let mut magic = [0u8; 4];
    bytes.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
    if &magic != SDT_MAGIC {
        return Err(bad("bad magic"));
    }
    let mut word = [0u8; 4];
    let mut next = |b: &mut &[u8]| -> Result<[u8; 4]> {
        b.read_exact(&mut word).map_err(|_| bad("truncated data"))?;
        Ok(word)
    };
    let h = u32::from_le_bytes(next(&mut bytes)?) as usize;
    let w = u32::from_le_bytes(next(&mut bytes)?) as usize;
    let radius = f32::from_le_bytes(next(&mut bytes)?) as f64;
    if bytes.len() != 4 * h * w {
        return Err(bad("payload length does not match extent"));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    SignedDistanceMap::new(radius, Raster::new(h, w, values)?)
}

pub fn write_sdt(path: &Path, sdm: &SignedDistanceMap) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_sdt(sdm))?;
    Ok(())
}

pub fn read_sdt(path: &Path) -> Result<SignedDistanceMap> {
    decode_sdt(&fs::read(path)?)
}
