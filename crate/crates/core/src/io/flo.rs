//! Middlebury `.flo`: magic 202021.25, i32 width and height, then
//! interleaved little-endian f32 `(du, dv)` in row-major order.

use std::path::Path;

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::grid::Grid;

pub const FLO_MAGIC: f32 = 202021.25;
/// Components above this magnitude mark unknown flow.
pub const UNKNOWN_FLOW_THRESH: f32 = 1e9;
const UNKNOWN_FLOW: f32 = 1e10;

pub fn encode(f: &FlowField) -> Vec<u8> {
    let (w, h) = f.size();
    let mut out = Vec::with_capacity(12 + 8 * w * h);
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(w as i32).to_le_bytes());
    out.extend_from_slice(&(h as i32).to_le_bytes());
    for v in 0..h {
        for u in 0..w {
            let (a, b) = match f.at(u, v) {
                Some((a, b)) => (a as f32, b as f32),
                None => (UNKNOWN_FLOW, UNKNOWN_FLOW),
            };
            out.extend_from_slice(&a.to_le_bytes());
            out.extend_from_slice(&b.to_le_bytes());
        }
    }
    out
}

fn le_f32(b: &[u8]) -> f32 {
    f32::from_le_bytes([b[0], b[1], b[2], b[3]])
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<FlowField> {
    if bytes.len() < 12 {
        return Err(Error::format(path, Some(bytes.len() as u64), "truncated header"));
    }
    let magic = le_f32(&bytes[0..4]);
    if magic != FLO_MAGIC {
        return Err(Error::format(path, Some(0), format!("bad magic {magic}")));
    }
    let w = i32::from_le_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]);
    let h = i32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]);
    if w <= 0 || h <= 0 {
        return Err(Error::format(path, Some(4), format!("bad dimensions {w}x{h}")));
    }
    let (w, h) = (w as usize, h as usize);
    let need = 8 * w * h;
    if bytes.len() - 12 < need {
        return Err(Error::format(
            path,
            Some(bytes.len() as u64),
            format!("truncated payload: expected {need} bytes from offset 12"),
        ));
    }
    let mut du = Vec::with_capacity(w * h);
    let mut dv = Vec::with_capacity(w * h);
    let mut valid = Vec::with_capacity(w * h);
    for pair in bytes[12..12 + need].chunks_exact(8) {
        let a = le_f32(&pair[0..4]);
        let b = le_f32(&pair[4..8]);
        let ok = a.is_finite() && b.is_finite() && a.abs() <= UNKNOWN_FLOW_THRESH && b.abs() <= UNKNOWN_FLOW_THRESH;
        du.push(a as f64);
        dv.push(b as f64);
        valid.push(ok);
    }
    FlowField::new(Grid::from_vec(w, h, du)?, Grid::from_vec(w, h, dv)?, Grid::from_vec(w, h, valid)?)
}

pub fn flo_write(path: impl AsRef<Path>, f: &FlowField) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(f)).map_err(|e| Error::io(path, e))
}

pub fn flo_read(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}
