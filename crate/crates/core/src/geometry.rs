//! Pinhole camera model, per-pixel depth and normal maps, back-projection
//! and depth-to-normal conversion.
//!
//! Camera frame: x right, y down, z into the scene. Normals are stored
//! camera-facing, so a fronto-parallel surface has normal `(0, 0, -1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Mask, RgbImage};

/// Relative depths at or below this value are treated as missing, since the
/// log of a zero depth is undefined.
pub const MIN_RELATIVE_DEPTH: f64 = 1e-4;

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// Square pixels with the principal point at the image centre.
    pub fn centered(focal: f64, width: usize, height: usize) -> Result<Self> {
        Self::new(
            focal,
            focal,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
            width,
            height,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.fx, self.fy, self.cx, self.cy].iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("camera intrinsics"));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidInput("image size must be non-zero".into()));
        }
        Ok(())
    }

    pub fn size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Ray direction through pixel `(u, v)` scaled so that its z component is 1.
    #[inline]
    pub fn ray(&self, u: f64, v: f64) -> [f64; 3] {
        [(u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0]
    }

    /// Projects a camera-frame point to continuous pixel coordinates.
    pub fn project(&self, p: [f64; 3]) -> Option<[f64; 2]> {
        if p[2] <= 0.0 {
            return None;
        }
        Some([self.fx * p[0] / p[2] + self.cx, self.fy * p[1] / p[2] + self.cy])
    }

    pub fn contains(&self, p: Pixel) -> bool {
        p.u < self.width && p.v < self.height
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Pixel {
    /// Column.
    pub u: usize,
    /// Row.
    pub v: usize,
}

impl Pixel {
    pub fn new(u: usize, v: usize) -> Self {
        Self { u, v }
    }
}

/// Image axis along which a derivative is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    U,
    V,
}

/// Perspective coupling coefficient between a normal and the log-depth
/// derivative along `axis`.
///
/// The surface constraint reads `tilde_nz * d(log depth)/d(axis) + n_axis = 0`.
/// With square pixels (`fx == fy == f`) both axes reduce to
/// `n_x (u - cx) + n_y (v - cy) + n_z f`.
pub fn compute_tilde_nz(p: Pixel, n: [f64; 3], k: &CameraIntrinsics, axis: Axis) -> Result<f64> {
    if !n.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("normal"));
    }
    if !(k.fx.is_finite() && k.fy.is_finite() && k.cx.is_finite() && k.cy.is_finite()) {
        return Err(Error::NonFinite("camera intrinsics"));
    }
    Ok(tilde_nz(p.u as f64, p.v as f64, n, k, axis))
}

#[inline]
pub(crate) fn tilde_nz(u: f64, v: f64, n: [f64; 3], k: &CameraIntrinsics, axis: Axis) -> f64 {
    let du = u - k.cx;
    let dv = v - k.cy;
    match axis {
        Axis::U => n[0] * du + (k.fx / k.fy) * n[1] * dv + n[2] * k.fx,
        Axis::V => (k.fy / k.fx) * n[0] * du + n[1] * dv + n[2] * k.fy,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepthUnit {
    /// Affine-invariant depth normalized to [0, 1].
    Relative,
    /// Positive depth along the optical axis.
    Metric,
    /// Natural log of metric depth.
    Log,
}

/// Per-pixel depth with a validity mask. Invalid pixels carry arbitrary
/// values and are never read by consumers.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    values: Grid<f64>,
    valid: Mask,
    unit: DepthUnit,
}

fn depth_value_ok(x: f64, unit: DepthUnit) -> bool {
    match unit {
        DepthUnit::Relative => x.is_finite() && x > MIN_RELATIVE_DEPTH && x <= 1.0,
        DepthUnit::Metric => x.is_finite() && x > 0.0,
        DepthUnit::Log => x.is_finite(),
    }
}

impl DepthMap {
    /// Wraps raw values, deriving validity from the unit's value range.
    pub fn from_values(values: Grid<f64>, unit: DepthUnit) -> Self {
        let valid = values.map(|&x| depth_value_ok(x, unit));
        Self { values, valid, unit }
    }

    /// Like [`DepthMap::from_values`], additionally masking with `mask`.
    pub fn with_mask(values: Grid<f64>, mask: &Mask, unit: DepthUnit) -> Result<Self> {
        values.ensure_same_size(mask, "depth mask")?;
        let mut d = Self::from_values(values, unit);
        for (ok, &m) in d.valid.data_mut().iter_mut().zip(mask.data()) {
            *ok &= m;
        }
        Ok(d)
    }

    pub fn constant(width: usize, height: usize, value: f64, unit: DepthUnit) -> Self {
        Self::from_values(Grid::new(width, height, value), unit)
    }

    pub fn unit(&self) -> DepthUnit {
        self.unit
    }

    pub fn values(&self) -> &Grid<f64> {
        &self.values
    }

    pub fn valid(&self) -> &Mask {
        &self.valid
    }

    pub fn width(&self) -> usize {
        self.values.width()
    }

    pub fn height(&self) -> usize {
        self.values.height()
    }

    pub fn size(&self) -> (usize, usize) {
        self.values.size()
    }

    /// Value at `(u, v)` if the pixel is valid.
    #[inline]
    pub fn at(&self, u: usize, v: usize) -> Option<f64> {
        if *self.valid.get(u, v) {
            Some(*self.values.get(u, v))
        } else {
            None
        }
    }

    pub fn valid_count(&self) -> usize {
        self.valid.data().iter().filter(|&&b| b).count()
    }

    /// Natural log of a metric map.
    pub fn to_log(&self) -> Result<DepthMap> {
        self.expect_unit(DepthUnit::Metric, "log conversion")?;
        let values = Grid::from_fn(self.width(), self.height(), |u, v| match self.at(u, v) {
            Some(d) => d.ln(),
            None => 0.0,
        });
        let mut out = Self::from_values(values, DepthUnit::Log);
        out.valid = self.valid.clone();
        Ok(out)
    }

    /// Exponential of a log map.
    pub fn to_metric(&self) -> Result<DepthMap> {
        self.expect_unit(DepthUnit::Log, "exp conversion")?;
        let values = Grid::from_fn(self.width(), self.height(), |u, v| match self.at(u, v) {
            Some(d) => d.exp(),
            None => 0.0,
        });
        let mut out = Self::from_values(values, DepthUnit::Metric);
        for (ok, &m) in out.valid.data_mut().iter_mut().zip(self.valid.data()) {
            *ok &= m;
        }
        Ok(out)
    }

    pub(crate) fn expect_unit(&self, unit: DepthUnit, what: &str) -> Result<()> {
        if self.unit != unit {
            return Err(Error::InvalidInput(format!(
                "{what} expects {unit:?} depth, got {:?}",
                self.unit
            )));
        }
        Ok(())
    }
}

/// Per-pixel unit normals in the camera frame.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap {
    vectors: Grid<[f64; 3]>,
    valid: Mask,
}

impl NormalMap {
    /// Normalizes every finite non-zero vector and orients it towards the
    /// camera (`n_z <= 0`). Zero or non-finite vectors become invalid.
    pub fn from_vectors(vectors: Grid<[f64; 3]>) -> Self {
        let mut valid = Grid::new(vectors.width(), vectors.height(), false);
        let mut vectors = vectors;
        for (n, ok) in vectors.data_mut().iter_mut().zip(valid.data_mut()) {
            if let Some(unit) = orient(*n) {
                *n = unit;
                *ok = true;
            } else {
                *n = [0.0; 3];
            }
        }
        Self { vectors, valid }
    }

    pub fn with_mask(vectors: Grid<[f64; 3]>, mask: &Mask) -> Result<Self> {
        vectors.ensure_same_size(mask, "normal mask")?;
        let mut n = Self::from_vectors(vectors);
        for (ok, &m) in n.valid.data_mut().iter_mut().zip(mask.data()) {
            *ok &= m;
        }
        Ok(n)
    }

    pub fn vectors(&self) -> &Grid<[f64; 3]> {
        &self.vectors
    }

    pub fn valid(&self) -> &Mask {
        &self.valid
    }

    pub fn width(&self) -> usize {
        self.vectors.width()
    }

    pub fn height(&self) -> usize {
        self.vectors.height()
    }

    pub fn size(&self) -> (usize, usize) {
        self.vectors.size()
    }

    #[inline]
    pub fn at(&self, u: usize, v: usize) -> Option<[f64; 3]> {
        if *self.valid.get(u, v) {
            Some(*self.vectors.get(u, v))
        } else {
            None
        }
    }
}

fn orient(n: [f64; 3]) -> Option<[f64; 3]> {
    let len = norm(n);
    if !len.is_finite() || len < 1e-12 {
        return None;
    }
    let s = if n[2] > 0.0 { -1.0 / len } else { 1.0 / len };
    Some([n[0] * s, n[1] * s, n[2] * s])
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
    pub colors: Option<Vec<[u8; 3]>>,
}

impl PointCloud {
    pub fn new(points: Vec<[f64; 3]>, colors: Option<Vec<[u8; 3]>>) -> Result<Self> {
        if let Some(c) = &colors {
            if c.len() != points.len() {
                return Err(Error::InvalidInput(format!(
                    "{} colors for {} points",
                    c.len(),
                    points.len()
                )));
            }
        }
        Ok(Self { points, colors })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Back-projects every valid pixel of a metric depth map into the camera frame.
pub fn backproject(d: &DepthMap, k: &CameraIntrinsics, rgb: Option<&RgbImage>) -> Result<PointCloud> {
    d.expect_unit(DepthUnit::Metric, "backproject")?;
    if d.size() != k.size() {
        return Err(Error::SizeMismatch {
            what: "depth vs intrinsics",
            got: d.size(),
            expected: k.size(),
        });
    }
    if let Some(img) = rgb {
        d.values().ensure_same_size(img, "rgb image")?;
    }
    let mut points = Vec::with_capacity(d.valid_count());
    let mut colors = rgb.map(|_| Vec::with_capacity(d.valid_count()));
    for v in 0..d.height() {
        for u in 0..d.width() {
            let Some(z) = d.at(u, v) else { continue };
            let r = k.ray(u as f64, v as f64);
            points.push([z * r[0], z * r[1], z]);
            if let (Some(c), Some(img)) = (colors.as_mut(), rgb) {
                c.push(*img.get(u, v));
            }
        }
    }
    PointCloud::new(points, colors)
}

/// Estimates normals from a metric depth map with central differences of
/// the back-projected point grid.
///
/// Border pixels, pixels with an invalid 4-neighbour and pixels with a
/// degenerate cross product are marked invalid.
pub fn depth_to_normal(d: &DepthMap, k: &CameraIntrinsics) -> Result<NormalMap> {
    d.expect_unit(DepthUnit::Metric, "depth_to_normal")?;
    if d.size() != k.size() {
        return Err(Error::SizeMismatch {
            what: "depth vs intrinsics",
            got: d.size(),
            expected: k.size(),
        });
    }
    let (w, h) = d.size();
    let point = |u: usize, v: usize| -> Option<[f64; 3]> {
        let z = d.at(u, v)?;
        let r = k.ray(u as f64, v as f64);
        Some([z * r[0], z * r[1], z])
    };
    let mut vectors = Grid::new(w, h, [0.0; 3]);
    let mut valid = Grid::new(w, h, false);
    for v in 1..h.saturating_sub(1) {
        for u in 1..w.saturating_sub(1) {
            let (Some(c), Some(l), Some(r), Some(t), Some(b)) = (
                point(u, v),
                point(u - 1, v),
                point(u + 1, v),
                point(u, v - 1),
                point(u, v + 1),
            ) else {
                continue;
            };
            let du = sub(r, l);
            let dv = sub(b, t);
            let n = cross(du, dv);
            let len = norm(n);
            if !(len.is_finite() && len > 1e-300) {
                continue;
            }
            let s = if dot(n, c) > 0.0 { -1.0 / len } else { 1.0 / len };
            *vectors.get_mut(u, v) = [n[0] * s, n[1] * s, n[2] * s];
            *valid.get_mut(u, v) = true;
        }
    }
    NormalMap::with_mask(vectors, &valid)
}

/// Maps relative depth in [0, 1] to metric depth `near + r (far - near)`.
pub fn relative_to_metric(d: &DepthMap, near: f64, far: f64) -> Result<DepthMap> {
    d.expect_unit(DepthUnit::Relative, "relative_to_metric")?;
    if !(near.is_finite() && far.is_finite()) {
        return Err(Error::NonFinite("depth range"));
    }
    if !(near > 0.0 && near < far) {
        return Err(Error::InvalidInput(format!(
            "depth range needs 0 < near < far, got near={near} far={far}"
        )));
    }
    let values = Grid::from_fn(d.width(), d.height(), |u, v| match d.at(u, v) {
        Some(r) => near + r * (far - near),
        None => 0.0,
    });
    DepthMap::with_mask(values, d.valid(), DepthUnit::Metric)
}

#[inline]
pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub(crate) fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}
