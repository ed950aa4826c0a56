//! TOML sequence manifest.
//!
//! ```toml
//! flow_threshold_px = 1.0
//! bilateral_k = 2.0
//! lambdas = "rlbench"            # or a [lambdas] table with cd, cb, rd, rb
//!
//! [intrinsics]
//! fx = 100.0
//! fy = 100.0
//! cx = 63.5
//! cy = 63.5
//! width = 128
//! height = 128
//!
//! [depth_range]                  # optional; depth files hold relative depth
//! near = 0.5
//! far = 3.0
//!
//! [[frames]]
//! rgb = "rgb_000.png"
//! depth = "depth_000.pfm"
//! normal = "normal_000.pfm"
//!
//! [[frames]]
//! rgb = "rgb_001.png"
//! depth = "depth_001.pfm"
//! normal = "normal_001.pfm"
//! flow_to_prev = "flow_001.flo"
//! ```
//!
//! Paths are relative to the manifest's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CameraIntrinsics;
use crate::pipeline::{FrameRefs, SequenceManifest};
use crate::solver::SolveConfig;
use crate::temporal::{LambdaSet, DEFAULT_FLOW_THRESHOLD_PX};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    flow_threshold_px: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bilateral_k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    flow_fallback: Option<bool>,
    intrinsics: CameraIntrinsics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    depth_range: Option<RawRange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lambdas: Option<RawLambdas>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    irls: Option<RawIters>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cg: Option<RawIters>,
    frames: Vec<RawFrame>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRange {
    near: f64,
    far: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum RawLambdas {
    Preset(String),
    Table(LambdaSet),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIters {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tol: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFrame {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rgb: Option<PathBuf>,
    depth: PathBuf,
    normal: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    flow_to_prev: Option<PathBuf>,
}

/// Parses a manifest held in memory. Relative paths are joined to `base`;
/// file existence is not checked.
pub fn manifest_parse(text: &str, base: &Path) -> Result<SequenceManifest> {
    let de = toml::Deserializer::parse(text).map_err(|e| Error::manifest("<document>", e.to_string()))?;
    let raw: RawManifest = serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        Error::manifest(if key == "." { "<root>".to_string() } else { key }, e.into_inner().to_string())
    })?;

    let lambdas = match raw.lambdas {
        None => LambdaSet::default(),
        Some(RawLambdas::Table(l)) => l,
        Some(RawLambdas::Preset(name)) => LambdaSet::preset(&name)
            .ok_or_else(|| Error::manifest("lambdas", format!("unknown preset `{name}` (expected rt1, bridge or rlbench)")))?,
    };
    let mut solver = SolveConfig::default();
    if let Some(k) = raw.bilateral_k {
        solver.k = k;
    }
    if let Some(it) = raw.irls {
        solver.irls_max_iters = it.max_iters.unwrap_or(solver.irls_max_iters);
        solver.irls_tol = it.tol.unwrap_or(solver.irls_tol);
    }
    if let Some(it) = raw.cg {
        solver.cg_max_iters = it.max_iters.unwrap_or(solver.cg_max_iters);
        solver.cg_tol = it.tol.unwrap_or(solver.cg_tol);
    }
    let join = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };
    let frames = raw
        .frames
        .into_iter()
        .map(|f| FrameRefs {
            rgb: f.rgb.map(join),
            depth: join(f.depth),
            normal: join(f.normal),
            flow_to_prev: f.flow_to_prev.map(join),
        })
        .collect();
    let m = SequenceManifest {
        intrinsics: raw.intrinsics,
        depth_range: raw.depth_range.map(|r| (r.near, r.far)),
        flow_threshold_px: raw.flow_threshold_px.unwrap_or(DEFAULT_FLOW_THRESHOLD_PX),
        lambdas,
        solver,
        flow_fallback: raw.flow_fallback.unwrap_or(false),
        frames,
    };
    m.validate()?;
    Ok(m)
}

/// Loads, validates and checks that every referenced file exists.
pub fn manifest_read(path: impl AsRef<Path>) -> Result<SequenceManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let m = manifest_parse(&text, base)?;
    for (i, f) in m.frames.iter().enumerate() {
        let refs = [
            ("rgb", f.rgb.as_ref()),
            ("depth", Some(&f.depth)),
            ("normal", Some(&f.normal)),
            ("flow_to_prev", f.flow_to_prev.as_ref()),
        ];
        for (key, p) in refs {
            if let Some(p) = p {
                if !p.is_file() {
                    return Err(Error::manifest(format!("frames[{i}].{key}"), format!("file not found: {}", p.display()))
                        .in_frame(i));
                }
            }
        }
    }
    Ok(m)
}

/// Writes `m` with paths made relative to `path`'s directory where possible.
pub fn manifest_write(path: impl AsRef<Path>, m: &SequenceManifest) -> Result<()> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new("."));
    let rel = |p: &Path| p.strip_prefix(base).map(Path::to_path_buf).unwrap_or_else(|_| p.to_path_buf());
    let d = SolveConfig::default();
    let raw = RawManifest {
        flow_threshold_px: Some(m.flow_threshold_px),
        bilateral_k: Some(m.solver.k),
        flow_fallback: m.flow_fallback.then_some(true),
        intrinsics: m.intrinsics,
        depth_range: m.depth_range.map(|(near, far)| RawRange { near, far }),
        lambdas: Some(RawLambdas::Table(m.lambdas)),
        irls: (m.solver.irls_max_iters != d.irls_max_iters || m.solver.irls_tol != d.irls_tol).then_some(RawIters {
            max_iters: Some(m.solver.irls_max_iters),
            tol: Some(m.solver.irls_tol),
        }),
        cg: (m.solver.cg_max_iters != d.cg_max_iters || m.solver.cg_tol != d.cg_tol).then_some(RawIters {
            max_iters: Some(m.solver.cg_max_iters),
            tol: Some(m.solver.cg_tol),
        }),
        frames: m
            .frames
            .iter()
            .map(|f| RawFrame {
                rgb: f.rgb.as_deref().map(rel),
                depth: rel(&f.depth),
                normal: rel(&f.normal),
                flow_to_prev: f.flow_to_prev.as_deref().map(rel),
            })
            .collect(),
    };
    let text = toml::to_string(&raw).map_err(|e| Error::format(path, None, e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
