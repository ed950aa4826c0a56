//! PNG carriers: 16-bit relative depth, 8-bit encoded normals, 8-bit RGB.

use std::fs::File;
use std::io::{BufReader, BufWriter, Cursor};
use std::path::Path;

use png::{BitDepth, ColorType, Transformations};

use crate::error::{Error, Result};
use crate::geometry::{DepthMap, DepthUnit, NormalMap};
use crate::grid::{Grid, Mask, RgbImage};

struct Raw {
    width: usize,
    height: usize,
    color: ColorType,
    depth: BitDepth,
    bytes: Vec<u8>,
}

fn decode_raw(bytes: &[u8], path: &Path) -> Result<Raw> {
    let mut dec = png::Decoder::new(Cursor::new(bytes));
    dec.set_transformations(Transformations::IDENTITY);
    let mut reader = dec.read_info().map_err(|e| Error::format(path, None, e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::format(path, None, "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::format(path, None, e.to_string()))?;
    buf.truncate(info.buffer_size());
    Ok(Raw {
        width: info.width as usize,
        height: info.height as usize,
        color: info.color_type,
        depth: info.bit_depth,
        bytes: buf,
    })
}

fn read_raw(path: &Path) -> Result<Raw> {
    let mut bytes = Vec::new();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    std::io::Read::read_to_end(&mut BufReader::new(f), &mut bytes).map_err(|e| Error::io(path, e))?;
    decode_raw(&bytes, path)
}

fn write_raw(path: &Path, width: usize, height: usize, color: ColorType, depth: BitDepth, data: &[u8]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(f), width as u32, height as u32);
    enc.set_color(color);
    enc.set_depth(depth);
    let to_err = |e: png::EncodingError| Error::format(path, None, e.to_string());
    let mut w = enc.write_header().map_err(to_err)?;
    w.write_image_data(data).map_err(to_err)?;
    w.finish().map_err(to_err)
}

fn expect(raw: &Raw, color: ColorType, depth: BitDepth, path: &Path) -> Result<()> {
    if raw.color != color || raw.depth != depth {
        return Err(Error::format(
            path,
            None,
            format!("expected {color:?} at {depth:?}, found {:?} at {:?}", raw.color, raw.depth),
        ));
    }
    Ok(())
}

/// `round(65535 r)` per pixel; invalid pixels are stored as 0.
pub fn encode_depth16(r: f64) -> u16 {
    (r.clamp(0.0, 1.0) * 65535.0).round() as u16
}

pub fn encode_normal8(n: [f64; 3]) -> [u8; 3] {
    n.map(|c| (255.0 * (c.clamp(-1.0, 1.0) + 1.0) / 2.0).round() as u8)
}

/// Inverse of [`encode_normal8`] before renormalization.
pub fn decode_normal8(c: [u8; 3]) -> [f64; 3] {
    c.map(|x| 2.0 * x as f64 / 255.0 - 1.0)
}

pub fn depth_png16_write(path: impl AsRef<Path>, d: &DepthMap) -> Result<()> {
    let path = path.as_ref();
    d.expect_unit(DepthUnit::Relative, "16-bit depth png")?;
    let mut data = Vec::with_capacity(2 * d.values().len());
    for v in 0..d.height() {
        for u in 0..d.width() {
            let q = d.at(u, v).map_or(0, encode_depth16);
            data.extend_from_slice(&q.to_be_bytes());
        }
    }
    write_raw(path, d.width(), d.height(), ColorType::Grayscale, BitDepth::Sixteen, &data)
}

/// Relative depth; stored zeros (and values at or below the relative floor) are invalid.
pub fn depth_png16_read(path: impl AsRef<Path>) -> Result<DepthMap> {
    let path = path.as_ref();
    let raw = read_raw(path)?;
    expect(&raw, ColorType::Grayscale, BitDepth::Sixteen, path)?;
    let values = raw
        .bytes
        .chunks_exact(2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 / 65535.0)
        .collect();
    Ok(DepthMap::from_values(Grid::from_vec(raw.width, raw.height, values)?, DepthUnit::Relative))
}

pub fn normal_png_write(path: impl AsRef<Path>, n: &NormalMap) -> Result<()> {
    let path = path.as_ref();
    let mut data = Vec::with_capacity(3 * n.vectors().len());
    for v in 0..n.height() {
        for u in 0..n.width() {
            data.extend_from_slice(&n.at(u, v).map_or([0; 3], encode_normal8));
        }
    }
    write_raw(path, n.width(), n.height(), ColorType::Rgb, BitDepth::Eight, &data)
}

/// Decoded and renormalized; `(0, 0, 0)` pixels are invalid.
pub fn normal_png_read(path: impl AsRef<Path>) -> Result<NormalMap> {
    let path = path.as_ref();
    let raw = read_raw(path)?;
    expect(&raw, ColorType::Rgb, BitDepth::Eight, path)?;
    let mut valid = Vec::with_capacity(raw.width * raw.height);
    let vectors = raw
        .bytes
        .chunks_exact(3)
        .map(|c| {
            let c = [c[0], c[1], c[2]];
            valid.push(c != [0, 0, 0]);
            decode_normal8(c)
        })
        .collect();
    NormalMap::with_mask(
        Grid::from_vec(raw.width, raw.height, vectors)?,
        &Grid::from_vec(raw.width, raw.height, valid)?,
    )
}

pub fn rgb_png_write(path: impl AsRef<Path>, img: &RgbImage) -> Result<()> {
    let data: Vec<u8> = img.data().iter().flatten().copied().collect();
    write_raw(path.as_ref(), img.width(), img.height(), ColorType::Rgb, BitDepth::Eight, &data)
}

/// 8-bit RGB; 8-bit grayscale is widened to three equal channels.
pub fn rgb_png_read(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let raw = read_raw(path)?;
    let px: Vec<[u8; 3]> = match (raw.color, raw.depth) {
        (ColorType::Rgb, BitDepth::Eight) => raw.bytes.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        (ColorType::Rgba, BitDepth::Eight) => raw.bytes.chunks_exact(4).map(|c| [c[0], c[1], c[2]]).collect(),
        (ColorType::Grayscale, BitDepth::Eight) => raw.bytes.iter().map(|&g| [g; 3]).collect(),
        (c, d) => return Err(Error::format(path, None, format!("unsupported rgb png {c:?} at {d:?}"))),
    };
    Grid::from_vec(raw.width, raw.height, px)
}

/// Binary mask as 8-bit grayscale, 255 for set pixels.
pub fn mask_png_write(path: impl AsRef<Path>, m: &Mask) -> Result<()> {
    let data: Vec<u8> = m.data().iter().map(|&b| if b { 255 } else { 0 }).collect();
    write_raw(path.as_ref(), m.width(), m.height(), ColorType::Grayscale, BitDepth::Eight, &data)
}

/// Any non-zero 8-bit gray value is set.
pub fn mask_png_read(path: impl AsRef<Path>) -> Result<Mask> {
    let path = path.as_ref();
    let raw = read_raw(path)?;
    expect(&raw, ColorType::Grayscale, BitDepth::Eight, path)?;
    Grid::from_vec(raw.width, raw.height, raw.bytes.iter().map(|&b| b != 0).collect())
}
