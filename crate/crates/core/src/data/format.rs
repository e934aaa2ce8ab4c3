//! Feature file layout, little-endian throughout:
//!
//! ```text
//! "PEFT" | ndim: u32 | dims: ndim × u32 | payload: product(dims) × f32
//! ```

use std::path::Path;

use super::DataError;
use crate::numerics::Tensor;

pub const MAGIC: &[u8; 4] = b"PEFT";

pub fn encode_feature(tensor: &Tensor<f32>) -> Vec<u8> {
    let shape = tensor.shape();
    let mut out = Vec::with_capacity(8 + 4 * shape.len() + 4 * tensor.numel());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    for &d in shape {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in tensor.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_feature(bytes: &[u8], path: &Path) -> Result<Tensor<f32>, DataError> {
    let header = |reason: &str| DataError::Header { path: path.to_path_buf(), reason: reason.into() };
    let shape_err = |reason: String| DataError::Shape { path: path.to_path_buf(), reason };
    if bytes.len() < 8 {
        return Err(header("file shorter than the 8-byte header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(header("magic bytes are not \"PEFT\""));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let ndim = word(4);
    if ndim == 0 {
        return Err(header("zero dimensions"));
    }
    let payload_at = 8 + 4 * ndim;
    if bytes.len() < payload_at {
        return Err(header("truncated dimension list"));
    }
    let dims: Vec<usize> = (0..ndim).map(|i| word(8 + 4 * i)).collect();
    let numel = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).unwrap_or(usize::MAX);
    let payload = &bytes[payload_at..];
    if dims.contains(&0) || payload.len() != numel.saturating_mul(4) {
        return Err(shape_err(format!("dims {dims:?} need {} payload bytes, found {}", numel.saturating_mul(4), payload.len())));
    }
    let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Tensor::new(dims, data).map_err(|e| shape_err(e.to_string()))
}

pub fn write_feature(path: &Path, tensor: &Tensor<f32>) -> Result<(), DataError> {
    std::fs::write(path, encode_feature(tensor)).map_err(|source| DataError::Io { path: path.to_path_buf(), source })
}

pub fn read_feature(path: &Path) -> Result<Tensor<f32>, DataError> {
    let bytes = std::fs::read(path).map_err(|source| match source.kind() {
        std::io::ErrorKind::NotFound => DataError::MissingFile(path.to_path_buf()),
        _ => DataError::Io { path: path.to_path_buf(), source },
    })?;
    decode_feature(&bytes, path)
}
