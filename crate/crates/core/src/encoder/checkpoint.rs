//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic     8 bytes  "RMXCKPT\0"
//! version   u32      1
//! dtype     u8       1 = f32, 2 = f64
//! meta_len  u64
//! meta      meta_len bytes of UTF-8 JSON: {"config": EncoderConfig, "extra": any}
//! count     u32      number of tensors
//! per tensor:
//!   name_len u32, name (UTF-8), rows u32, cols u32,
//!   rows * cols elements, row-major, dtype width each
//! ```

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::config::EncoderConfig;
use super::model::RelationModel;
use crate::error::{Error, Result};
use crate::scalar::{DType, Scalar};

pub const MAGIC: &[u8; 8] = b"RMXCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Meta {
    config: EncoderConfig,
    #[serde(default)]
    extra: serde_json::Value,
}

pub fn to_bytes<F: Scalar>(model: &RelationModel<F>, extra: &serde_json::Value) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(F::DTYPE.tag());
    let meta = serde_json::to_vec(&Meta {
        config: model.config().clone(),
        extra: extra.clone(),
    })?;
    out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    out.extend_from_slice(&meta);
    let params = model.store().params();
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.value.nrows() as u32).to_le_bytes());
        out.extend_from_slice(&(p.value.ncols() as u32).to_le_bytes());
        for &v in p.value.iter() {
            v.write_le(&mut out);
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint(format!(
                "truncated at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Rebuilds a model and returns it with the stored `extra` metadata.
/// The element type of the file must match `F`.
pub fn from_bytes<F: Scalar>(bytes: &[u8]) -> Result<(RelationModel<F>, serde_json::Value)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let dtype = DType::from_tag(r.take(1)?[0])
        .ok_or_else(|| Error::Checkpoint("unknown dtype tag".into()))?;
    if dtype != F::DTYPE {
        return Err(Error::Checkpoint(format!(
            "file holds {dtype:?}, requested {:?}",
            F::DTYPE
        )));
    }
    let meta_len = r.u64()? as usize;
    let meta: Meta = serde_json::from_slice(r.take(meta_len)?)?;
    let mut model = RelationModel::<F>::new(meta.config)?;
    let count = r.u32()? as usize;
    if count != model.store().len() {
        return Err(Error::Checkpoint(format!(
            "{count} tensors, model expects {}",
            model.store().len()
        )));
    }
    let width = dtype.width();
    for i in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|e| Error::Checkpoint(e.to_string()))?
            .to_owned();
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let data = r.take(rows * cols * width)?;
        let values: Vec<F> = data.chunks_exact(width).map(F::read_le).collect();
        let id = super::params::ParamId(i);
        let expected = model.store().param(id);
        if expected.name != name || expected.value.shape() != [rows, cols] {
            return Err(Error::Checkpoint(format!(
                "tensor {i}: found {name} {rows}x{cols}, expected {} {:?}",
                expected.name,
                expected.value.shape()
            )));
        }
        *model.store_mut().value_mut(id) =
            Array2::from_shape_vec((rows, cols), values).expect("length checked");
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok((model, meta.extra))
}

pub fn save<F: Scalar>(
    path: impl AsRef<Path>,
    model: &RelationModel<F>,
    extra: &serde_json::Value,
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_bytes(model, extra)?).map_err(|e| Error::io(path, e))
}

pub fn load<F: Scalar>(path: impl AsRef<Path>) -> Result<(RelationModel<F>, serde_json::Value)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
