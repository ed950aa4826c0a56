//! Frame-by-frame refinement of a generated RGB-DN sequence.
//!
//! Frame 0 integrates its normals with a uniform pull toward the generated
//! depth. Every later frame adds flow-gated consistency with the previous
//! refined frame and regularization toward its own generated depth, and is
//! solved starting from the generated log-depth.

use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::flow::{horn_schunck, FlowField, HornSchunckParams};
use crate::geometry::{backproject, relative_to_metric, CameraIntrinsics, DepthMap, DepthUnit, NormalMap, PointCloud};
use crate::grid::{to_gray, Grid, Mask, RgbImage};
use crate::integration::{assemble_system, PixelIndex};
use crate::io;
use crate::solver::{irls_refine, SolveConfig};
use crate::temporal::{region_masks, temporal_terms, warp_previous_depth, DiagonalQuadratic, LambdaSet, RegionMasks};

/// Files belonging to one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRefs {
    pub rgb: Option<PathBuf>,
    pub depth: PathBuf,
    pub normal: PathBuf,
    pub flow_to_prev: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceManifest {
    pub intrinsics: CameraIntrinsics,
    /// When set, depth files hold relative depth mapped to `[near, far]`;
    /// otherwise they hold metric depth.
    pub depth_range: Option<(f64, f64)>,
    pub flow_threshold_px: f64,
    pub lambdas: LambdaSet,
    pub solver: SolveConfig,
    /// Estimate missing flow from the RGB frames.
    pub flow_fallback: bool,
    pub frames: Vec<FrameRefs>,
}

impl SequenceManifest {
    pub fn validate(&self) -> Result<()> {
        let key = |k: &str, e: Error| Error::manifest(k, e.to_string());
        self.intrinsics.validate().map_err(|e| key("intrinsics", e))?;
        if let Some((near, far)) = self.depth_range {
            if !(near.is_finite() && far.is_finite() && near > 0.0 && near < far) {
                return Err(Error::manifest("depth_range", format!("needs 0 < near < far, got {near}, {far}")));
            }
        }
        if !(self.flow_threshold_px.is_finite() && self.flow_threshold_px >= 0.0) {
            return Err(Error::manifest("flow_threshold_px", "must be >= 0"));
        }
        self.lambdas.validate().map_err(|e| key("lambdas", e))?;
        self.solver.validate().map_err(|e| key("irls/cg/bilateral_k", e))?;
        if self.frames.is_empty() {
            return Err(Error::manifest("frames", "at least one frame is required"));
        }
        for (i, f) in self.frames.iter().enumerate().skip(1) {
            if f.flow_to_prev.is_none() {
                if !self.flow_fallback {
                    return Err(Error::manifest(
                        format!("frames[{i}].flow_to_prev"),
                        "missing and flow_fallback is off",
                    ));
                }
                if f.rgb.is_none() || self.frames[i - 1].rgb.is_none() {
                    return Err(Error::manifest(
                        format!("frames[{i}].rgb"),
                        "flow fallback needs rgb for this frame and the previous one",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn refine_config(&self) -> RefineConfig {
        RefineConfig {
            intrinsics: self.intrinsics,
            flow_threshold_px: self.flow_threshold_px,
            lambdas: self.lambdas,
            solver: self.solver,
            flow_fallback: self.flow_fallback,
            horn_schunck: HornSchunckParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineConfig {
    pub intrinsics: CameraIntrinsics,
    pub flow_threshold_px: f64,
    pub lambdas: LambdaSet,
    pub solver: SolveConfig,
    pub flow_fallback: bool,
    pub horn_schunck: HornSchunckParams,
}

impl RefineConfig {
    pub fn new(intrinsics: CameraIntrinsics) -> Self {
        Self {
            intrinsics,
            flow_threshold_px: crate::temporal::DEFAULT_FLOW_THRESHOLD_PX,
            lambdas: LambdaSet::default(),
            solver: SolveConfig::default(),
            flow_fallback: false,
            horn_schunck: HornSchunckParams::default(),
        }
    }
}

/// Per-frame inputs with depth already metric.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameInputs {
    pub rgb: Option<RgbImage>,
    pub generated_depth: DepthMap,
    pub normal: NormalMap,
    pub flow_to_prev: Option<FlowField>,
}

/// What frame `i` needs from frame `i - 1`.
#[derive(Debug, Clone, Copy)]
pub struct PreviousFrame<'a> {
    pub refined: &'a DepthMap,
    /// `None` for frame 0, which is treated as static everywhere.
    pub static_m: Option<&'a Mask>,
    pub rgb: Option<&'a RgbImage>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinedFrame {
    /// Metric refined depth; valid exactly on the solved pixels.
    pub refined_depth: DepthMap,
    pub refined_log: DepthMap,
    /// Region masks; `None` for frame 0.
    pub masks: Option<RegionMasks>,
    /// Pixels whose temporal terms were dropped for a non-positive target.
    pub flagged: Option<Mask>,
    pub energy_trace: Vec<f64>,
    pub iters_used: usize,
    pub converged: bool,
    pub point_cloud: PointCloud,
}

fn check_inputs(inputs: &FrameInputs, k: &CameraIntrinsics) -> Result<()> {
    inputs.generated_depth.expect_unit(DepthUnit::Metric, "generated depth")?;
    let size = k.size();
    for (what, got) in [("generated depth", inputs.generated_depth.size()), ("normals", inputs.normal.size())] {
        if got != size {
            return Err(Error::SizeMismatch { what, got, expected: size });
        }
    }
    if let Some(img) = &inputs.rgb {
        if img.size() != size {
            return Err(Error::SizeMismatch { what: "rgb image", got: img.size(), expected: size });
        }
    }
    if let Some(f) = &inputs.flow_to_prev {
        if f.size() != size {
            return Err(Error::SizeMismatch { what: "flow", got: f.size(), expected: size });
        }
    }
    Ok(())
}

/// Refines one frame. `prev` is `None` exactly for frame 0.
pub fn refine_frame(inputs: &FrameInputs, prev: Option<PreviousFrame<'_>>, cfg: &RefineConfig) -> Result<RefinedFrame> {
    let k = &cfg.intrinsics;
    check_inputs(inputs, k)?;
    cfg.lambdas.validate()?;
    let (w, h) = k.size();
    let gen = &inputs.generated_depth;

    let normals = NormalMap::with_mask(inputs.normal.vectors().clone(), &{
        let mut m = inputs.normal.valid().clone();
        for (a, &b) in m.data_mut().iter_mut().zip(gen.valid().data()) {
            *a &= b;
        }
        m
    })?;
    let sys = assemble_system(&normals, k)?;
    let index: &PixelIndex = sys.pixel_index();
    let gen_log = gen.to_log()?;
    let init = index.gather(gen_log.values().data());

    let (per_pixel, masks, flagged) = match prev {
        None => {
            let mut q = DiagonalQuadratic::empty(w * h);
            for (i, &t) in gen_log.values().data().iter().enumerate() {
                if gen_log.valid().data()[i] {
                    q.add(i, cfg.lambdas.rb, t);
                }
            }
            (q, None, None)
        }
        Some(p) => {
            let flow = match (&inputs.flow_to_prev, cfg.flow_fallback) {
                (Some(f), _) => f.clone(),
                (None, true) => {
                    let (Some(cur), Some(before)) = (inputs.rgb.as_ref(), p.rgb) else {
                        return Err(Error::InvalidInput("flow fallback needs rgb for both frames".into()));
                    };
                    horn_schunck(&to_gray(cur), &to_gray(before), cfg.horn_schunck)?
                }
                (None, false) => {
                    return Err(Error::InvalidInput("no flow to the previous frame and fallback is disabled".into()))
                }
            };
            let all_static;
            let static_prev = match p.static_m {
                Some(m) => m,
                None => {
                    all_static = Grid::new(w, h, true);
                    &all_static
                }
            };
            let masks = region_masks(&flow, static_prev, cfg.flow_threshold_px)?;
            let (warped, sample_ok) = warp_previous_depth(p.refined, &flow)?;
            let terms = temporal_terms(&masks, &warped, &sample_ok, gen, &cfg.lambdas)?;
            (terms.quadratic, Some(masks), Some(terms.flagged))
        }
    };
    let q = per_pixel.gather(index);
    let res = irls_refine(&sys, &q, &init, &cfg.solver)?;

    let log_full = Grid::from_vec(w, h, index.scatter(&res.d_log, 0.0))?;
    let solved = Grid::from_vec(w, h, index.scatter(&vec![true; index.len()], false))?;
    let refined_log = DepthMap::with_mask(log_full, &solved, DepthUnit::Log)?;
    let refined_depth = refined_log.to_metric()?;
    let point_cloud = backproject(&refined_depth, k, inputs.rgb.as_ref())?;
    Ok(RefinedFrame {
        refined_depth,
        refined_log,
        masks,
        flagged,
        energy_trace: res.energy_trace,
        iters_used: res.iters_used,
        converged: res.converged,
        point_cloud,
    })
}

/// Sequential refinement of in-memory frames.
pub fn refine_frames(frames: &[FrameInputs], cfg: &RefineConfig) -> Result<Vec<RefinedFrame>> {
    let mut out: Vec<RefinedFrame> = Vec::with_capacity(frames.len());
    for (i, f) in frames.iter().enumerate() {
        let prev = out.last().map(|r| PreviousFrame {
            refined: &r.refined_depth,
            static_m: r.masks.as_ref().map(|m| &m.static_m),
            rgb: frames[i - 1].rgb.as_ref(),
        });
        let r = refine_frame(f, prev, cfg).map_err(|e| e.in_frame(i))?;
        out.push(r);
    }
    Ok(out)
}

/// Loads the files of frame `i` of `m`, converting depth to metric.
pub fn load_frame(m: &SequenceManifest, i: usize) -> Result<FrameInputs> {
    let refs = &m.frames[i];
    let generated_depth = match m.depth_range {
        Some((near, far)) => relative_to_metric(&io::read_depth(&refs.depth, DepthUnit::Relative)?, near, far)?,
        None => io::read_depth(&refs.depth, DepthUnit::Metric)?,
    };
    Ok(FrameInputs {
        rgb: refs.rgb.as_ref().map(io::rgb_png_read).transpose()?,
        generated_depth,
        normal: io::read_normal(&refs.normal)?,
        flow_to_prev: if i == 0 { None } else { refs.flow_to_prev.as_ref().map(io::flo_read).transpose()? },
    })
}

/// Loads and refines every frame of a manifest in order.
///
/// Each frame's files are read just before it is refined, so at most two
/// frames of inputs are held at once.
pub fn refine_sequence(m: &SequenceManifest) -> Result<Vec<RefinedFrame>> {
    m.validate()?;
    let cfg = m.refine_config();
    let mut out: Vec<RefinedFrame> = Vec::with_capacity(m.frames.len());
    let mut prev_rgb: Option<RgbImage> = None;
    for i in 0..m.frames.len() {
        let inputs = load_frame(m, i).map_err(|e| e.in_frame(i))?;
        let prev = out.last().map(|r| PreviousFrame {
            refined: &r.refined_depth,
            static_m: r.masks.as_ref().map(|m| &m.static_m),
            rgb: prev_rgb.as_ref(),
        });
        let r = refine_frame(&inputs, prev, &cfg).map_err(|e| e.in_frame(i))?;
        out.push(r);
        prev_rgb = inputs.rgb;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrackPoint {
    pub frame: usize,
    pub u: usize,
    pub v: usize,
}

/// Largest pixel distance searched when the tracked pixel has no depth.
pub const TRACK_FALLBACK_RADIUS: usize = 2;

/// Back-projects a 2D track through the refined depth of each frame.
///
/// Pixels without refined depth fall back to the nearest valid pixel within
/// [`TRACK_FALLBACK_RADIUS`] (Euclidean, ties broken in raster order); the
/// depth found there is used along the original pixel's ray. Points with no
/// valid depth nearby are `None`.
pub fn lift_track(track: &[TrackPoint], refined: &[RefinedFrame], k: &CameraIntrinsics) -> Result<Vec<Option<[f64; 3]>>> {
    let (w, h) = k.size();
    let r = TRACK_FALLBACK_RADIUS as isize;
    track
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let frame = refined.get(t.frame).ok_or_else(|| {
                Error::InvalidInput(format!("track point {i} refers to frame {} of {}", t.frame, refined.len()))
            })?;
            if t.u >= w || t.v >= h {
                return Err(Error::InvalidInput(format!("track point {i} ({}, {}) is outside the image", t.u, t.v)));
            }
            let d = &frame.refined_depth;
            if d.size() != (w, h) {
                return Err(Error::SizeMismatch { what: "refined depth", got: d.size(), expected: (w, h) });
            }
            let mut best: Option<(isize, f64)> = None;
            for dv in -r..=r {
                for du in -r..=r {
                    let dist2 = du * du + dv * dv;
                    if dist2 > r * r || best.is_some_and(|(b, _)| dist2 >= b) {
                        continue;
                    }
                    let (uu, vv) = (t.u as isize + du, t.v as isize + dv);
                    if uu < 0 || vv < 0 || uu >= w as isize || vv >= h as isize {
                        continue;
                    }
                    if let Some(z) = d.at(uu as usize, vv as usize) {
                        best = Some((dist2, z));
                    }
                }
            }
            Ok(best.map(|(_, z)| {
                let ray = k.ray(t.u as f64, t.v as f64);
                [z * ray[0], z * ray[1], z]
            }))
        })
        .collect()
}
