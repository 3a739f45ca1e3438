//! On-disk formats: a small binary tensor container and the network spec as
//! TOML.
//!
//! Tensor container layout (all little-endian):
//! `"BUNT"` magic, one dtype byte (1 = signed 64-bit), one rank byte
//! (always 4: channels, depth, height, width), rank u32 dims, then the
//! values as i64 in raster order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::unet::oracle::Tensor;
use crate::unet::{Dims, NetworkSpec};

const TENSOR_MAGIC: &[u8; 4] = b"BUNT";
const DTYPE_I64: u8 = 1;

pub fn tensor_to_bytes(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 2 + 16 + 8 * t.data.len());
    out.extend_from_slice(TENSOR_MAGIC);
    out.push(DTYPE_I64);
    out.push(4);
    for dim in [t.dims.c, t.dims.d, t.dims.h, t.dims.w] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for &v in &t.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn tensor_from_bytes(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < 22 || &bytes[..4] != TENSOR_MAGIC {
        return Err(Error::Format("not a tensor container".into()));
    }
    if bytes[4] != DTYPE_I64 {
        return Err(Error::Format(format!("unsupported dtype {}", bytes[4])));
    }
    if bytes[5] != 4 {
        return Err(Error::Format(format!("unsupported rank {}", bytes[5])));
    }
    let dim = |i: usize| {
        u32::from_le_bytes(bytes[6 + 4 * i..10 + 4 * i].try_into().unwrap()) as usize
    };
    let dims = Dims::new(dim(0), dim(1), dim(2), dim(3));
    let body = &bytes[22..];
    if body.len() != 8 * dims.numel() {
        return Err(Error::Format(format!(
            "tensor body is {} bytes, dims {:?} need {}",
            body.len(),
            dims,
            8 * dims.numel()
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor::new(dims, data)
}

pub fn write_tensor(path: &Path, t: &Tensor) -> Result<()> {
    fs::write(path, tensor_to_bytes(t))?;
    Ok(())
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    tensor_from_bytes(&fs::read(path)?)
}

pub fn spec_to_toml(spec: &NetworkSpec) -> Result<String> {
    toml::to_string_pretty(spec).map_err(|e| Error::Format(format!("spec encode: {e}")))
}

pub fn spec_from_toml(text: &str) -> Result<NetworkSpec> {
    let spec: NetworkSpec =
        toml::from_str(text).map_err(|e| Error::Format(format!("spec decode: {e}")))?;
    spec.validate()?;
    Ok(spec)
}

pub fn write_spec(path: &Path, spec: &NetworkSpec) -> Result<()> {
    fs::write(path, spec_to_toml(spec)?)?;
    Ok(())
}

pub fn read_spec(path: &Path) -> Result<NetworkSpec> {
    spec_from_toml(&fs::read_to_string(path)?)
}

pub fn write_weights(path: &Path, weights: &crate::unet::quant::Weights) -> Result<()> {
    let json = serde_json::to_vec(weights).map_err(|e| Error::Format(format!("weights encode: {e}")))?;
    fs::write(path, json)?;
    Ok(())
}

pub fn read_weights(path: &Path) -> Result<crate::unet::quant::Weights> {
    serde_json::from_slice(&fs::read(path)?)
        .map_err(|e| Error::Format(format!("weights decode: {e}")))
}
