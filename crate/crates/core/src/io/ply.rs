//! Vertex-only PLY point clouds, ASCII or binary little-endian, with float
//! coordinates and optional uchar colours.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::PointCloud;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyMode {
    Ascii,
    BinaryLittleEndian,
}

pub fn encode(pc: &PointCloud, mode: PlyMode) -> Vec<u8> {
    let fmt = match mode {
        PlyMode::Ascii => "ascii",
        PlyMode::BinaryLittleEndian => "binary_little_endian",
    };
    let mut header = format!(
        "ply\nformat {fmt} 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n",
        pc.points.len()
    );
    if pc.colors.is_some() {
        header.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    header.push_str("end_header\n");
    let mut out = header.into_bytes();
    for (i, p) in pc.points.iter().enumerate() {
        let xyz = p.map(|c| c as f32);
        let rgb = pc.colors.as_ref().map(|c| c[i]);
        match mode {
            PlyMode::Ascii => {
                let mut line = format!("{} {} {}", xyz[0], xyz[1], xyz[2]);
                if let Some(c) = rgb {
                    line.push_str(&format!(" {} {} {}", c[0], c[1], c[2]));
                }
                line.push('\n');
                out.extend_from_slice(line.as_bytes());
            }
            PlyMode::BinaryLittleEndian => {
                for c in xyz {
                    out.extend_from_slice(&c.to_le_bytes());
                }
                if let Some(c) = rgb {
                    out.extend_from_slice(&c);
                }
            }
        }
    }
    out
}

pub fn ply_write(pc: &PointCloud, path: impl AsRef<Path>, mode: PlyMode) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(pc, mode)).map_err(|e| Error::io(path, e))
}

pub fn ply_read(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

/// Reads the layout written by [`encode`]: one vertex element with float
/// `x y z` and optionally uchar `red green blue`, in that order.
pub fn decode(bytes: &[u8], path: &Path) -> Result<PointCloud> {
    let end = b"end_header\n";
    let body_at = bytes
        .windows(end.len())
        .position(|w| w == end)
        .map(|i| i + end.len())
        .ok_or_else(|| Error::format(path, None, "missing end_header"))?;
    let header = std::str::from_utf8(&bytes[..body_at]).map_err(|_| Error::format(path, Some(0), "header is not ASCII"))?;
    let mut lines = header.lines();
    if lines.next() != Some("ply") {
        return Err(Error::format(path, Some(0), "bad magic"));
    }
    let mut mode = None;
    let mut count = None;
    let mut props = Vec::new();
    for line in lines {
        let t: Vec<&str> = line.split_whitespace().collect();
        match t.as_slice() {
            ["format", "ascii", _] => mode = Some(PlyMode::Ascii),
            ["format", "binary_little_endian", _] => mode = Some(PlyMode::BinaryLittleEndian),
            ["format", other, _] => return Err(Error::format(path, None, format!("unsupported format {other}"))),
            ["element", "vertex", n] => {
                count = Some(n.parse::<usize>().map_err(|_| Error::format(path, None, format!("bad vertex count `{n}`")))?)
            }
            ["element", other, ..] => return Err(Error::format(path, None, format!("unsupported element {other}"))),
            ["property", ty, name] => props.push((ty.to_string(), name.to_string())),
            ["comment", ..] | ["obj_info", ..] | ["end_header"] | [] => {}
            _ => return Err(Error::format(path, None, format!("unexpected header line `{line}`"))),
        }
    }
    let mode = mode.ok_or_else(|| Error::format(path, None, "missing format line"))?;
    let n = count.ok_or_else(|| Error::format(path, None, "missing vertex element"))?;
    let xyz = [("float", "x"), ("float", "y"), ("float", "z")];
    let rgb = [("uchar", "red"), ("uchar", "green"), ("uchar", "blue")];
    let layout: Vec<(&str, &str)> = props.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    let has_color = if layout == xyz {
        false
    } else if layout.len() == 6 && layout[..3] == xyz && layout[3..] == rgb {
        true
    } else {
        return Err(Error::format(path, None, "unsupported vertex properties"));
    };

    let body = &bytes[body_at..];
    let mut points = Vec::with_capacity(n);
    let mut colors = has_color.then(|| Vec::with_capacity(n));
    match mode {
        PlyMode::BinaryLittleEndian => {
            let stride = if has_color { 15 } else { 12 };
            if body.len() < stride * n {
                return Err(Error::format(
                    path,
                    Some(bytes.len() as u64),
                    format!("truncated payload: expected {} bytes from offset {body_at}", stride * n),
                ));
            }
            for rec in body[..stride * n].chunks_exact(stride) {
                let f = |o: usize| f32::from_le_bytes([rec[o], rec[o + 1], rec[o + 2], rec[o + 3]]) as f64;
                points.push([f(0), f(4), f(8)]);
                if let Some(c) = colors.as_mut() {
                    c.push([rec[12], rec[13], rec[14]]);
                }
            }
        }
        PlyMode::Ascii => {
            let text = std::str::from_utf8(body).map_err(|_| Error::format(path, Some(body_at as u64), "body is not text"))?;
            let mut toks = text.split_whitespace();
            for i in 0..n {
                let mut next = || {
                    toks.next()
                        .ok_or_else(|| Error::format(path, None, format!("vertex {i} is truncated")))
                };
                let mut p = [0.0; 3];
                for c in &mut p {
                    let t = next()?;
                    *c = t
                        .parse::<f32>()
                        .map_err(|_| Error::format(path, None, format!("vertex {i}: bad float `{t}`")))? as f64;
                }
                points.push(p);
                if let Some(cs) = colors.as_mut() {
                    let mut c = [0u8; 3];
                    for x in &mut c {
                        let t = next()?;
                        *x = t
                            .parse()
                            .map_err(|_| Error::format(path, None, format!("vertex {i}: bad colour `{t}`")))?;
                    }
                    cs.push(c);
                }
            }
        }
    }
    PointCloud::new(points, colors)
}
