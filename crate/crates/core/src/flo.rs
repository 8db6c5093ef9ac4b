//! Middlebury `.flo` optical-flow files: little-endian, 4-byte float magic
//! 202021.25 ("PIEH"), int32 width, int32 height, then row-major interleaved
//! (u, v) float32 pairs.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::types::FlowField;
use std::fs;
use std::path::Path;

pub const FLO_MAGIC: f32 = 202021.25;
const MAX_DIM: i32 = 1 << 20;

/// Serializes a flow field; displacement values are stored as f32.
pub fn flow_to_bytes(flow: &FlowField) -> Vec<u8> {
    let (h, w) = flow.size();
    let mut out = Vec::with_capacity(12 + h * w * 8);
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(w as i32).to_le_bytes());
    out.extend_from_slice(&(h as i32).to_le_bytes());
    for y in 0..h {
        for x in 0..w {
            out.extend_from_slice(&(flow.tensor().at3(y, x, 0) as f32).to_le_bytes());
            out.extend_from_slice(&(flow.tensor().at3(y, x, 1) as f32).to_le_bytes());
        }
    }
    out
}

pub fn flow_from_bytes(bytes: &[u8]) -> Result<FlowField> {
    if bytes.len() < 12 {
        return Err(Error::format(format!(
            "flow file truncated: {} bytes, need at least 12",
            bytes.len()
        )));
    }
    let magic = f32::from_le_bytes(bytes[0..4].try_into().unwrap());
    if magic != FLO_MAGIC {
        return Err(Error::format(format!(
            "bad flow magic {magic}, expected {FLO_MAGIC}"
        )));
    }
    let w = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let h = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if w <= 0 || h <= 0 || w > MAX_DIM || h > MAX_DIM {
        return Err(Error::format(format!("implausible flow dimensions {w}x{h}")));
    }
    let (w, h) = (w as usize, h as usize);
    let expected = 12 + w * h * 8;
    if bytes.len() < expected {
        return Err(Error::format(format!(
            "flow payload truncated: {} bytes, expected {expected} for {w}x{h}",
            bytes.len()
        )));
    }
    let mut t = Tensor::zeros(&[h, w, 2]);
    let mut off = 12;
    for y in 0..h {
        for x in 0..w {
            let u = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
            let v = f32::from_le_bytes(bytes[off + 4..off + 8].try_into().unwrap());
            t.set3(y, x, 0, u as f64);
            t.set3(y, x, 1, v as f64);
            off += 8;
        }
    }
    FlowField::new(t)
}

pub fn write_flow_file(path: impl AsRef<Path>, flow: &FlowField) -> Result<()> {
    fs::write(path, flow_to_bytes(flow))?;
    Ok(())
}

pub fn read_flow_file(path: impl AsRef<Path>) -> Result<FlowField> {
    let bytes = fs::read(path.as_ref()).map_err(|e| {
        Error::format(format!(
            "cannot read flow file {}: {e}",
            path.as_ref().display()
        ))
    })?;
    flow_from_bytes(&bytes)
}
