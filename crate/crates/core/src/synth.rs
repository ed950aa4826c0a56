//! Analytic RGB-DN scenes with exact depth, normals and flow.
//!
//! Each scene is built from planes, a sphere and a fronto-parallel box, so
//! ground truth is available in closed form. A "generated" copy of depth and
//! normals with seeded multiplicative depth noise and angular normal jitter
//! plays the role of a network prediction.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::geometry::{relative_to_metric, CameraIntrinsics, DepthMap, DepthUnit, NormalMap};
use crate::grid::{Grid, Mask, RgbImage};

/// Slope of the slanted plane `Z = 1 + SLANT * X`.
pub const SLANT: f64 = 0.2;
pub const SPHERE_CENTER: [f64; 3] = [0.0, 0.0, 3.0];
pub const SPHERE_RADIUS: f64 = 1.0;
pub const SPHERE_BACKDROP_DEPTH: f64 = 5.0;
/// Left plane depth and right plane intercept of the two-plane scene.
pub const TWO_PLANES_NEAR: f64 = 1.0;
pub const TWO_PLANES_FAR: f64 = 1.6;
pub const BOX_DEPTH: f64 = 1.0;
pub const BOX_BACKDROP_DEPTH: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKind {
    FrontoPlane,
    SlantedPlane,
    Sphere,
    TwoPlanes,
    MovingBox,
}

impl std::str::FromStr for SceneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "fronto_plane" => SceneKind::FrontoPlane,
            "slanted_plane" => SceneKind::SlantedPlane,
            "sphere" => SceneKind::Sphere,
            "two_planes" => SceneKind::TwoPlanes,
            "moving_box" => SceneKind::MovingBox,
            other => return Err(Error::InvalidInput(format!("unknown scene kind `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub kind: SceneKind,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    /// Box translation per frame in metres (x, y); ignored by static scenes.
    pub motion: [f64; 2],
    /// Standard deviation of the multiplicative depth noise.
    pub noise_sigma: f64,
    /// Standard deviation of the normal perturbation, in degrees.
    pub normal_jitter_deg: f64,
    pub seed: u64,
}

impl SceneSpec {
    pub fn new(kind: SceneKind, width: usize, height: usize) -> Self {
        Self {
            kind,
            width,
            height,
            frames: 1,
            motion: [0.0, 0.0],
            noise_sigma: 0.0,
            normal_jitter_deg: 0.0,
            seed: 0,
        }
    }

    pub fn frames(mut self, n: usize) -> Self {
        self.frames = n;
        self
    }

    pub fn motion(mut self, dx: f64, dy: f64) -> Self {
        self.motion = [dx, dy];
        self
    }

    pub fn noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn normal_jitter(mut self, deg: f64) -> Self {
        self.normal_jitter_deg = deg;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 16 || self.height < 16 {
            return Err(Error::InvalidInput(format!(
                "scene must be at least 16x16, got {}x{}",
                self.width, self.height
            )));
        }
        if self.frames == 0 {
            return Err(Error::InvalidInput("scene needs at least one frame".into()));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::InvalidInput(format!("noise sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if !(self.normal_jitter_deg.is_finite() && self.normal_jitter_deg >= 0.0) {
            return Err(Error::InvalidInput("normal jitter must be >= 0".into()));
        }
        if !self.motion.iter().all(|m| m.is_finite()) {
            return Err(Error::NonFinite("box motion"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFrame {
    pub rgb: RgbImage,
    pub gt_depth: DepthMap,
    pub gt_normal: NormalMap,
    /// Exact flow to the previous frame; `None` for frame 0.
    pub gt_flow_to_prev: Option<FlowField>,
    pub generated_depth: DepthMap,
    pub generated_normal: NormalMap,
    /// Pixels covered by the moving box, if the scene has one.
    pub object_mask: Option<Mask>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSequence {
    pub spec: SceneSpec,
    pub intrinsics: CameraIntrinsics,
    /// Range used to express generated depth as relative depth in [0, 1].
    pub depth_range: (f64, f64),
    pub frames: Vec<SyntheticFrame>,
}

impl SyntheticSequence {
    /// Generated depth of `frame` mapped into [0, 1] with `depth_range`.
    pub fn generated_relative(&self, frame: usize) -> Result<DepthMap> {
        let (near, far) = self.depth_range;
        let d = &self.frames[frame].generated_depth;
        let values = Grid::from_fn(d.width(), d.height(), |u, v| match d.at(u, v) {
            Some(z) => ((z - near) / (far - near)).clamp(0.0, 1.0),
            None => 0.0,
        });
        DepthMap::with_mask(values, d.valid(), DepthUnit::Relative)
    }

    /// Inverse of [`SyntheticSequence::generated_relative`].
    pub fn to_metric(&self, relative: &DepthMap) -> Result<DepthMap> {
        relative_to_metric(relative, self.depth_range.0, self.depth_range.1)
    }
}

/// Surface hit by the ray through a pixel.
struct Hit {
    depth: f64,
    normal: [f64; 3],
    color: [u8; 3],
    on_object: bool,
}

fn unit(n: [f64; 3]) -> [f64; 3] {
    let l = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    [n[0] / l, n[1] / l, n[2] / l]
}

fn checker(a: f64, b: f64, cell: f64, c0: [u8; 3], c1: [u8; 3]) -> [u8; 3] {
    let i = (a / cell).floor() as i64 + (b / cell).floor() as i64;
    if i.rem_euclid(2) == 0 {
        c0
    } else {
        c1
    }
}

struct BoxState {
    /// Pixel-space centre.
    center: [f64; 2],
    /// Half extent in pixels.
    half: [f64; 2],
}

impl BoxState {
    fn contains(&self, u: f64, v: f64) -> bool {
        (u - self.center[0]).abs() < self.half[0] && (v - self.center[1]).abs() < self.half[1]
    }
}

fn box_state(spec: &SceneSpec, k: &CameraIntrinsics, frame: usize) -> BoxState {
    // Box half-size is a fifth of the half field of view at the box depth.
    let half_fov_x = (k.width as f64 / 2.0) / k.fx;
    let hs = 0.2 * half_fov_x * BOX_DEPTH;
    let t = frame as f64 - (spec.frames as f64 - 1.0) / 2.0;
    let x = spec.motion[0] * t;
    let y = spec.motion[1] * t;
    BoxState {
        center: [k.cx + k.fx * x / BOX_DEPTH, k.cy + k.fy * y / BOX_DEPTH],
        half: [k.fx * hs / BOX_DEPTH, k.fy * hs / BOX_DEPTH],
    }
}

fn trace(spec: &SceneSpec, k: &CameraIntrinsics, frame: usize, u: usize, v: usize) -> Hit {
    let (uf, vf) = (u as f64, v as f64);
    let r = k.ray(uf, vf);
    let screen_checker = checker(uf, vf, 8.0, [200, 180, 150], [90, 110, 140]);
    match spec.kind {
        SceneKind::FrontoPlane => Hit {
            depth: 1.0,
            normal: [0.0, 0.0, -1.0],
            color: screen_checker,
            on_object: false,
        },
        SceneKind::SlantedPlane => Hit {
            depth: 1.0 / (1.0 - SLANT * r[0]),
            normal: unit([SLANT, 0.0, -1.0]),
            color: screen_checker,
            on_object: false,
        },
        SceneKind::Sphere => {
            // |t r - c|^2 = R^2 with r = (x, y, 1); depth is t.
            let c = SPHERE_CENTER;
            let a = r[0] * r[0] + r[1] * r[1] + 1.0;
            let b = -2.0 * (r[0] * c[0] + r[1] * c[1] + c[2]);
            let cc = c[0] * c[0] + c[1] * c[1] + c[2] * c[2] - SPHERE_RADIUS * SPHERE_RADIUS;
            let disc = b * b - 4.0 * a * cc;
            if disc >= 0.0 {
                let t = (-b - disc.sqrt()) / (2.0 * a);
                let p = [t * r[0], t * r[1], t];
                let n = [
                    (p[0] - c[0]) / SPHERE_RADIUS,
                    (p[1] - c[1]) / SPHERE_RADIUS,
                    (p[2] - c[2]) / SPHERE_RADIUS,
                ];
                let shade = (-n[2]).clamp(0.0, 1.0);
                let base = checker(p[0], p[1], 0.15, [230, 80, 60], [240, 200, 60]);
                Hit {
                    depth: t,
                    normal: unit(n),
                    color: base.map(|x| (x as f64 * (0.4 + 0.6 * shade)) as u8),
                    on_object: true,
                }
            } else {
                Hit {
                    depth: SPHERE_BACKDROP_DEPTH,
                    normal: [0.0, 0.0, -1.0],
                    color: screen_checker,
                    on_object: false,
                }
            }
        }
        SceneKind::TwoPlanes => {
            if uf < k.width as f64 / 2.0 {
                Hit {
                    depth: TWO_PLANES_NEAR,
                    normal: [0.0, 0.0, -1.0],
                    color: screen_checker,
                    on_object: false,
                }
            } else {
                Hit {
                    depth: TWO_PLANES_FAR / (1.0 - SLANT * r[0]),
                    normal: unit([SLANT, 0.0, -1.0]),
                    color: checker(uf, vf, 6.0, [120, 200, 120], [40, 90, 40]),
                    on_object: true,
                }
            }
        }
        SceneKind::MovingBox => {
            let b = box_state(spec, k, frame);
            if b.contains(uf, vf) {
                let lu = uf - (b.center[0] - b.half[0]);
                let lv = vf - (b.center[1] - b.half[1]);
                Hit {
                    depth: BOX_DEPTH,
                    normal: [0.0, 0.0, -1.0],
                    color: checker(lu, lv, 4.0, [240, 60, 60], [60, 60, 240]),
                    on_object: true,
                }
            } else {
                Hit {
                    depth: BOX_BACKDROP_DEPTH,
                    normal: [0.0, 0.0, -1.0],
                    color: screen_checker,
                    on_object: false,
                }
            }
        }
    }
}

/// Renders every frame of `spec` with the camera `k`.
pub fn generate(spec: &SceneSpec, k: &CameraIntrinsics) -> Result<SyntheticSequence> {
    spec.validate()?;
    k.validate()?;
    if k.size() != (spec.width, spec.height) {
        return Err(Error::SizeMismatch {
            what: "intrinsics vs scene",
            got: k.size(),
            expected: (spec.width, spec.height),
        });
    }
    if spec.kind == SceneKind::SlantedPlane || spec.kind == SceneKind::TwoPlanes {
        let edge = k.ray(k.width as f64 - 1.0, 0.0)[0].max(k.ray(0.0, 0.0)[0]);
        if SLANT * edge >= 0.9 {
            return Err(Error::InvalidInput("field of view too wide for the slanted plane".into()));
        }
    }
    if spec.kind == SceneKind::MovingBox {
        for f in 0..spec.frames {
            let b = box_state(spec, k, f);
            let inside = b.center[0] - b.half[0] >= 0.0
                && b.center[0] + b.half[0] <= k.width as f64 - 1.0
                && b.center[1] - b.half[1] >= 0.0
                && b.center[1] + b.half[1] <= k.height as f64 - 1.0;
            if !inside {
                return Err(Error::InvalidInput(format!("box leaves the image at frame {f}")));
            }
        }
    }

    let (w, h) = (spec.width, spec.height);
    let mut frames = Vec::with_capacity(spec.frames);
    let mut min_d = f64::INFINITY;
    let mut max_d: f64 = 0.0;
    for f in 0..spec.frames {
        let hits: Vec<Hit> = (0..h).flat_map(|v| (0..w).map(move |u| (u, v))).map(|(u, v)| trace(spec, k, f, u, v)).collect();
        let depth = Grid::from_vec(w, h, hits.iter().map(|x| x.depth).collect())?;
        let normal = Grid::from_vec(w, h, hits.iter().map(|x| x.normal).collect())?;
        let rgb = Grid::from_vec(w, h, hits.iter().map(|x| x.color).collect())?;
        let object = Grid::from_vec(w, h, hits.iter().map(|x| x.on_object).collect())?;
        for &d in depth.data() {
            min_d = min_d.min(d);
            max_d = max_d.max(d);
        }

        let gt_flow_to_prev = (f > 0).then(|| exact_flow(spec, k, f));

        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(f as u64);
        let gen_depth = depth.map(|&d| {
            let z: f64 = StandardNormal.sample(&mut rng);
            d * (1.0 + spec.noise_sigma * z)
        });
        let jitter = spec.normal_jitter_deg.to_radians();
        let gen_normal = normal.map(|&n| {
            if jitter == 0.0 {
                return n;
            }
            let g: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
            unit([n[0] + jitter * g[0], n[1] + jitter * g[1], n[2] + jitter * g[2]])
        });

        frames.push(SyntheticFrame {
            rgb,
            gt_depth: DepthMap::from_values(depth, DepthUnit::Metric),
            gt_normal: NormalMap::from_vectors(normal),
            gt_flow_to_prev,
            generated_depth: DepthMap::from_values(gen_depth, DepthUnit::Metric),
            generated_normal: NormalMap::from_vectors(gen_normal),
            object_mask: matches!(spec.kind, SceneKind::MovingBox | SceneKind::Sphere | SceneKind::TwoPlanes)
                .then_some(object),
        });
    }
    Ok(SyntheticSequence {
        spec: spec.clone(),
        intrinsics: *k,
        depth_range: (0.5 * min_d, 1.5 * max_d),
        frames,
    })
}

/// Screen-space displacement of the scripted motion between `frame - 1`
/// and `frame`. Background uncovered by the box is marked invalid.
fn exact_flow(spec: &SceneSpec, k: &CameraIntrinsics, frame: usize) -> FlowField {
    let (w, h) = (spec.width, spec.height);
    if spec.kind != SceneKind::MovingBox {
        return FlowField::zeros(w, h);
    }
    let now = box_state(spec, k, frame);
    let before = box_state(spec, k, frame - 1);
    let shift = [now.center[0] - before.center[0], now.center[1] - before.center[1]];
    let mut du = Grid::new(w, h, 0.0);
    let mut dv = Grid::new(w, h, 0.0);
    let mut valid = Grid::new(w, h, true);
    for v in 0..h {
        for u in 0..w {
            let (uf, vf) = (u as f64, v as f64);
            if now.contains(uf, vf) {
                *du.get_mut(u, v) = shift[0];
                *dv.get_mut(u, v) = shift[1];
            } else if before.contains(uf, vf) {
                *valid.get_mut(u, v) = false;
            }
        }
    }
    FlowField { du, dv, valid }
}
