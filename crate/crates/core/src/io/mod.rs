//! File formats: PFM, Middlebury flow, PNG carriers, PLY, the sequence
//! manifest, and flat metric reports.

pub mod flo;
pub mod manifest;
pub mod pfm;
pub mod ply;
pub mod png;

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{DepthMap, DepthUnit, NormalMap};
use crate::pipeline::{FrameRefs, SequenceManifest};
use crate::solver::SolveConfig;
use crate::synth::SyntheticSequence;
use crate::temporal::{LambdaSet, DEFAULT_FLOW_THRESHOLD_PX};

pub use flo::{flo_read, flo_write};
pub use manifest::{manifest_parse, manifest_read, manifest_write};
pub use pfm::{pfm_read, pfm_write, PfmImage};
pub use ply::{ply_read, ply_write, PlyMode};
pub use png::{
    depth_png16_read, depth_png16_write, mask_png_read, mask_png_write, normal_png_read, normal_png_write, rgb_png_read,
    rgb_png_write,
};

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default()
}

/// Reads depth from `.pfm` (values in `unit`) or 16-bit `.png` (relative).
pub fn read_depth(path: impl AsRef<Path>, unit: DepthUnit) -> Result<DepthMap> {
    let path = path.as_ref();
    match extension(path).as_str() {
        "pfm" => pfm::depth_from_pfm(&pfm_read(path)?, unit, path),
        "png" => {
            let d = depth_png16_read(path)?;
            if unit == DepthUnit::Relative {
                Ok(d)
            } else {
                DepthMap::with_mask(d.values().clone(), d.valid(), unit)
            }
        }
        other => Err(Error::format(path, None, format!("unsupported depth extension `{other}`"))),
    }
}

/// Writes depth as `.pfm`, or as 16-bit `.png` if the map is relative.
pub fn write_depth(path: impl AsRef<Path>, d: &DepthMap) -> Result<()> {
    let path = path.as_ref();
    match extension(path).as_str() {
        "pfm" => pfm_write(path, &pfm::depth_to_pfm(d)),
        "png" => depth_png16_write(path, d),
        other => Err(Error::format(path, None, format!("unsupported depth extension `{other}`"))),
    }
}

pub fn read_normal(path: impl AsRef<Path>) -> Result<NormalMap> {
    let path = path.as_ref();
    match extension(path).as_str() {
        "pfm" => pfm::normal_from_pfm(&pfm_read(path)?, path),
        "png" => normal_png_read(path),
        other => Err(Error::format(path, None, format!("unsupported normal extension `{other}`"))),
    }
}

pub fn write_normal(path: impl AsRef<Path>, n: &NormalMap) -> Result<()> {
    let path = path.as_ref();
    match extension(path).as_str() {
        "pfm" => pfm_write(path, &pfm::normal_to_pfm(n)),
        "png" => normal_png_write(path, n),
        other => Err(Error::format(path, None, format!("unsupported normal extension `{other}`"))),
    }
}

/// Ordered `key=value` record, also renderable as a JSON object.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub entries: Vec<(String, serde_json::Value)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl Into<serde_json::Value>) -> &mut Self {
        self.entries.push((key.into(), value.into()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&serde_json::Value> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| match v {
                serde_json::Value::String(s) => format!("{k}={s}\n"),
                other => format!("{k}={other}\n"),
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        let map: serde_json::Map<String, serde_json::Value> = self.entries.iter().cloned().collect();
        serde_json::to_string_pretty(&serde_json::Value::Object(map)).expect("json values always serialize")
    }

    /// Parses the text form back; numbers become JSON numbers, the rest strings.
    pub fn parse_text(text: &str) -> Result<Report> {
        let mut r = Report::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidInput(format!("report line {} has no `=`", i + 1)))?;
            let value = serde_json::from_str::<serde_json::Value>(v)
                .ok()
                .filter(|x| x.is_number() || x.is_boolean())
                .unwrap_or_else(|| serde_json::Value::String(v.to_string()));
            r.push(k, value);
        }
        Ok(r)
    }
}

/// Paths of everything [`write_synthetic`] produced.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFiles {
    pub manifest_path: PathBuf,
    pub manifest: SequenceManifest,
    pub gt_depth: Vec<PathBuf>,
    pub gt_normal: Vec<PathBuf>,
}

/// Writes a synthetic sequence as input files plus a ready manifest.
///
/// Generated depth is stored relative to the sequence's depth range; ground
/// truth is stored as metric PFM alongside for evaluation.
pub fn write_synthetic(seq: &SyntheticSequence, dir: impl AsRef<Path>) -> Result<SyntheticFiles> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut frames = Vec::with_capacity(seq.frames.len());
    let mut gt_depth = Vec::new();
    let mut gt_normal = Vec::new();
    for (i, f) in seq.frames.iter().enumerate() {
        let name = |stem: &str, ext: &str| dir.join(format!("{stem}_{i:03}.{ext}"));
        let refs = FrameRefs {
            rgb: Some(name("rgb", "png")),
            depth: name("depth", "pfm"),
            normal: name("normal", "pfm"),
            flow_to_prev: f.gt_flow_to_prev.as_ref().map(|_| name("flow", "flo")),
        };
        rgb_png_write(refs.rgb.as_ref().expect("set above"), &f.rgb)?;
        write_depth(&refs.depth, &seq.generated_relative(i)?)?;
        write_normal(&refs.normal, &f.generated_normal)?;
        if let (Some(p), Some(flow)) = (&refs.flow_to_prev, &f.gt_flow_to_prev) {
            flo_write(p, flow)?;
        }
        let gd = name("gt_depth", "pfm");
        let gn = name("gt_normal", "pfm");
        write_depth(&gd, &f.gt_depth)?;
        write_normal(&gn, &f.gt_normal)?;
        gt_depth.push(gd);
        gt_normal.push(gn);
        frames.push(refs);
    }
    let manifest = SequenceManifest {
        intrinsics: seq.intrinsics,
        depth_range: Some(seq.depth_range),
        flow_threshold_px: DEFAULT_FLOW_THRESHOLD_PX,
        lambdas: LambdaSet::default(),
        solver: SolveConfig::default(),
        flow_fallback: false,
        frames,
    };
    let manifest_path = dir.join("manifest.toml");
    manifest_write(&manifest_path, &manifest)?;
    Ok(SyntheticFiles {
        manifest_path,
        manifest,
        gt_depth,
        gt_normal,
    })
}
