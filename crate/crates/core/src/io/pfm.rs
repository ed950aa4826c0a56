//! Portable float map: `Pf` (one channel) or `PF` (three channels), rows
//! stored bottom-to-top, the sign of the scale line selecting endianness.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{DepthMap, DepthUnit, NormalMap};
use crate::grid::Grid;

/// Raw float image in top-to-bottom raster order, channels interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct PfmImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl PfmImage {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidInput(format!("pfm supports 1 or 3 channels, got {channels}")));
        }
        if width == 0 || height == 0 || data.len() != width * height * channels {
            return Err(Error::InvalidInput(format!(
                "pfm payload of {} floats does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Self { width, height, channels, data })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endian {
    Little,
    Big,
}

pub fn encode(img: &PfmImage, endian: Endian) -> Vec<u8> {
    let magic = if img.channels == 3 { "PF" } else { "Pf" };
    let scale = match endian {
        Endian::Little => "-1",
        Endian::Big => "1",
    };
    let mut out = format!("{magic}\n{} {}\n{scale}\n", img.width, img.height).into_bytes();
    let row = img.width * img.channels;
    out.reserve(img.data.len() * 4);
    for y in (0..img.height).rev() {
        for &x in &img.data[y * row..(y + 1) * row] {
            match endian {
                Endian::Little => out.extend_from_slice(&x.to_le_bytes()),
                Endian::Big => out.extend_from_slice(&x.to_be_bytes()),
            }
        }
    }
    out
}

/// Reads one whitespace-terminated header token starting at `*pos`.
fn token<'a>(bytes: &'a [u8], pos: &mut usize, path: &Path) -> Result<&'a str> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos || *pos >= bytes.len() {
        return Err(Error::format(path, Some(start as u64), "truncated header"));
    }
    std::str::from_utf8(&bytes[start..*pos]).map_err(|_| Error::format(path, Some(start as u64), "header is not ASCII"))
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<PfmImage> {
    let mut pos = 0;
    let channels = match token(bytes, &mut pos, path)? {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(Error::format(path, Some(0), format!("bad magic `{other}`"))),
    };
    let mut next = || -> Result<(String, usize)> {
        let at = pos;
        Ok((token(bytes, &mut pos, path)?.to_string(), at))
    };
    let (w, w_at) = next()?;
    let (h, h_at) = next()?;
    let (s, s_at) = next()?;
    let width: usize = w
        .parse()
        .ok()
        .filter(|&x| x > 0)
        .ok_or_else(|| Error::format(path, Some(w_at as u64), format!("bad width `{w}`")))?;
    let height: usize = h
        .parse()
        .ok()
        .filter(|&x| x > 0)
        .ok_or_else(|| Error::format(path, Some(h_at as u64), format!("bad height `{h}`")))?;
    let scale: f64 = s
        .parse()
        .ok()
        .filter(|x: &f64| x.is_finite() && *x != 0.0)
        .ok_or_else(|| Error::format(path, Some(s_at as u64), format!("bad scale `{s}`")))?;
    // exactly one whitespace byte ends the header
    pos += 1;
    let endian = if scale < 0.0 { Endian::Little } else { Endian::Big };
    let row = width * channels;
    let need = row
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::format(path, Some(w_at as u64), "dimensions overflow"))?;
    let payload = &bytes[pos.min(bytes.len())..];
    if payload.len() < need {
        return Err(Error::format(
            path,
            Some(bytes.len() as u64),
            format!("truncated payload: expected {need} bytes from offset {pos}, found {}", payload.len()),
        ));
    }
    let mut data = vec![0f32; row * height];
    for (i, chunk) in payload[..need].chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let x = match endian {
            Endian::Little => f32::from_le_bytes(b),
            Endian::Big => f32::from_be_bytes(b),
        };
        let (file_row, col) = (i / row, i % row);
        data[(height - 1 - file_row) * row + col] = x;
    }
    PfmImage::new(width, height, channels, data)
}

pub fn pfm_write(path: impl AsRef<Path>, img: &PfmImage) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(img, Endian::Little)).map_err(|e| Error::io(path, e))
}

pub fn pfm_read(path: impl AsRef<Path>) -> Result<PfmImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

/// Scalar map; invalid pixels are written as 0.
pub fn depth_to_pfm(d: &DepthMap) -> PfmImage {
    let data = (0..d.height())
        .flat_map(|v| (0..d.width()).map(move |u| (u, v)))
        .map(|(u, v)| d.at(u, v).unwrap_or(0.0) as f32)
        .collect();
    PfmImage {
        width: d.width(),
        height: d.height(),
        channels: 1,
        data,
    }
}

/// Reads a scalar map; zero and non-finite values come back invalid.
pub fn depth_from_pfm(img: &PfmImage, unit: DepthUnit, path: &Path) -> Result<DepthMap> {
    if img.channels != 1 {
        return Err(Error::format(path, None, "depth needs a single-channel map"));
    }
    let values = Grid::from_vec(img.width, img.height, img.data.iter().map(|&x| x as f64).collect())?;
    let nonzero = values.map(|&x| x != 0.0);
    DepthMap::with_mask(values, &nonzero, unit)
}

/// Three-channel map; invalid pixels are written as (0, 0, 0).
pub fn normal_to_pfm(n: &NormalMap) -> PfmImage {
    let data = (0..n.height())
        .flat_map(|v| (0..n.width()).map(move |u| (u, v)))
        .flat_map(|(u, v)| n.at(u, v).unwrap_or([0.0; 3]).map(|c| c as f32))
        .collect();
    PfmImage {
        width: n.width(),
        height: n.height(),
        channels: 3,
        data,
    }
}

pub fn normal_from_pfm(img: &PfmImage, path: &Path) -> Result<NormalMap> {
    if img.channels != 3 {
        return Err(Error::format(path, None, "normals need a three-channel map"));
    }
    let vectors = img
        .data
        .chunks_exact(3)
        .map(|c| [c[0] as f64, c[1] as f64, c[2] as f64])
        .collect();
    Ok(NormalMap::from_vectors(Grid::from_vec(img.width, img.height, vectors)?))
}
