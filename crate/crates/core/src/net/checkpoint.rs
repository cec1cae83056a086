//! `FCKP` checkpoint format, all integers little-endian:
//!
//! ```text
//! b"FCKP" | u32 version | u32 tensor count
//! per tensor: u32 name length | UTF-8 name | u8 dtype | u32 rank | rank x u32 extent | values
//! ```
//!
//! dtype 0 is `f32` (the format written here), dtype 1 is `f64`.

use std::fs;
use std::path::Path;

use indexmap::IndexMap;

use super::model::Model;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"FCKP";
pub const VERSION: u32 = 1;
pub const DTYPE_F32: u8 = 0;
pub const DTYPE_F64: u8 = 1;

pub fn encode(tensors: &IndexMap<String, Tensor>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(DTYPE_F32);
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &e in t.shape() {
            out.extend_from_slice(&(e as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

struct Cursor<'a>(&'a [u8]);

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.0.len() < n {
            return Err(Error::Checkpoint("truncated".into()));
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<IndexMap<String, Tensor>> {
    let mut c = Cursor(bytes);
    if c.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = c.u32()? as usize;
    let mut out = IndexMap::with_capacity(count);
    for _ in 0..count {
        let len = c.u32()? as usize;
        let name = std::str::from_utf8(c.take(len)?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let dtype = c.take(1)?[0];
        let rank = c.u32()? as usize;
        let shape: Vec<usize> = (0..rank).map(|_| c.u32().map(|e| e as usize)).collect::<Result<_>>()?;
        let n: usize = shape.iter().product();
        let data: Vec<f64> = match dtype {
            DTYPE_F32 => c
                .take(4 * n)?
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
                .collect(),
            DTYPE_F64 => c
                .take(8 * n)?
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect(),
            other => return Err(Error::Checkpoint(format!("{name}: unknown dtype {other}"))),
        };
        if out.insert(name.clone(), Tensor::new(shape, data)?).is_some() {
            return Err(Error::Checkpoint(format!("duplicate tensor {name}")));
        }
    }
    if !c.0.is_empty() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok(out)
}

pub fn save(path: &Path, model: &Model) -> Result<()> {
    fs::write(path, encode(&model.params.values()))?;
    Ok(())
}

pub fn load_tensors(path: &Path) -> Result<IndexMap<String, Tensor>> {
    decode(&fs::read(path)?)
}

pub fn load_model(path: &Path) -> Result<Model> {
    Model::from_tensors(&load_tensors(path)?)
}
