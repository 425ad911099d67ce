//! RDT1 tensor blocks: `"RDT1"`, `u32` rank, `rank × u32` dims, then the
//! little-endian `f32` payload in row-major order.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"RDT1";

pub fn encode(tensor: &Tensor<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * tensor.rank() + 4 * tensor.len());
    encode_into(tensor, &mut out);
    out
}

pub fn encode_into(tensor: &Tensor<f32>, out: &mut Vec<u8>) {
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(tensor.rank() as u32).to_le_bytes());
    for &d in tensor.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in tensor.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format("truncated RDT1 header".into()))
}

/// Decode one block, returning the tensor and the number of bytes consumed.
pub fn decode(bytes: &[u8]) -> Result<(Tensor<f32>, usize)> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::Format("bad RDT1 magic".into()));
    }
    let rank = read_u32(bytes, 4)? as usize;
    if rank > 16 {
        return Err(Error::Format(format!("implausible RDT1 rank {rank}")));
    }
    let mut dims = Vec::with_capacity(rank);
    for i in 0..rank {
        dims.push(read_u32(bytes, 8 + 4 * i)? as usize);
    }
    let header = 8 + 4 * rank;
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format("RDT1 dims overflow".into()))?;
    let end = count
        .checked_mul(4)
        .and_then(|n| n.checked_add(header))
        .ok_or_else(|| Error::Format("RDT1 dims overflow".into()))?;
    let payload = bytes.get(header..end).ok_or_else(|| {
        Error::Format(format!(
            "truncated RDT1 payload: need {} bytes, have {}",
            end - header,
            bytes.len().saturating_sub(header)
        ))
    })?;
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok((Tensor::new(dims, data)?, end))
}

pub fn read_file(path: &Path) -> Result<Tensor<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (t, used) = decode(&bytes)?;
    if used != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after RDT1 block in {}",
            bytes.len() - used,
            path.display()
        )));
    }
    Ok(t)
}

pub fn write_file(path: &Path, tensor: &Tensor<f32>) -> Result<()> {
    super::write_atomic(path, &encode(tensor))
}
