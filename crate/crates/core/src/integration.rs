//! Perspective normal-integration constraints on log-depth.
//!
//! Every valid pixel `p` and each valid 4-neighbour `q` yield one row
//!
//! ```text
//! s * tilde_nz(p) * (d_q - d_p) + n_axis(p) = 0
//! ```
//!
//! with `s = +1` for the forward neighbour and `s = -1` for the backward one,
//! so each row is a one-sided finite difference of log-depth. Rows are kept
//! in raster order of `p`, axis `u` before `v`, forward before backward.

use crate::error::{Error, Result};
use crate::geometry::{tilde_nz, Axis, CameraIntrinsics, NormalMap};
use crate::grid::Mask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Forward,
    Backward,
}

/// One constraint `coeff * (d[neighbor] - d[pixel]) = rhs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintRow {
    /// Unknown index of the centre pixel.
    pub pixel: usize,
    /// Unknown index of the neighbour.
    pub neighbor: usize,
    /// Signed `tilde_nz` of the centre pixel: `+tilde_nz` forward, `-tilde_nz` backward.
    pub coeff: f64,
    /// `-n_x` for axis `u`, `-n_y` for axis `v`.
    pub rhs: f64,
    pub axis: Axis,
    pub side: Side,
}

impl ConstraintRow {
    #[inline]
    pub fn residual(&self, d: &[f64]) -> f64 {
        self.coeff * (d[self.neighbor] - d[self.pixel]) - self.rhs
    }
}

/// Bijection between valid grid pixels and solver unknowns.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelIndex {
    width: usize,
    height: usize,
    to_unknown: Vec<Option<usize>>,
    to_pixel: Vec<usize>,
}

impl PixelIndex {
    pub fn from_mask(mask: &Mask) -> Self {
        let mut to_unknown = vec![None; mask.len()];
        let mut to_pixel = Vec::new();
        for (i, &ok) in mask.data().iter().enumerate() {
            if ok {
                to_unknown[i] = Some(to_pixel.len());
                to_pixel.push(i);
            }
        }
        Self {
            width: mask.width(),
            height: mask.height(),
            to_unknown,
            to_pixel,
        }
    }

    pub fn len(&self) -> usize {
        self.to_pixel.len()
    }

    pub fn is_empty(&self) -> bool {
        self.to_pixel.is_empty()
    }

    pub fn size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn unknown(&self, u: usize, v: usize) -> Option<usize> {
        self.to_unknown[v * self.width + u]
    }

    /// Raster index of an unknown's pixel.
    pub fn pixel(&self, unknown: usize) -> usize {
        self.to_pixel[unknown]
    }

    /// Column and row of an unknown's pixel.
    pub fn coords(&self, unknown: usize) -> (usize, usize) {
        let i = self.to_pixel[unknown];
        (i % self.width, i / self.width)
    }

    /// Picks the unknowns out of a raster-ordered per-pixel slice.
    pub fn gather<T: Copy>(&self, per_pixel: &[T]) -> Vec<T> {
        self.to_pixel.iter().map(|&i| per_pixel[i]).collect()
    }

    /// Spreads per-unknown values back onto the grid, `fill` elsewhere.
    pub fn scatter<T: Copy>(&self, per_unknown: &[T], fill: T) -> Vec<T> {
        let mut out = vec![fill; self.width * self.height];
        for (k, &i) in self.to_pixel.iter().enumerate() {
            out[i] = per_unknown[k];
        }
        out
    }
}

/// The matrix `A` and right-hand side `b` of the normal-integration system,
/// stored row-wise with two non-zeros per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseConstraintSystem {
    rows: Vec<ConstraintRow>,
    index: PixelIndex,
}

impl SparseConstraintSystem {
    /// Builds a system from explicit rows; used by tests and by callers that
    /// want to solve a custom stencil with the same machinery.
    pub fn from_rows(rows: Vec<ConstraintRow>, index: PixelIndex) -> Result<Self> {
        let n = index.len();
        for r in &rows {
            if r.pixel >= n || r.neighbor >= n || r.pixel == r.neighbor {
                return Err(Error::InvalidInput(format!(
                    "row ({}, {}) does not reference two distinct unknowns of {n}",
                    r.pixel, r.neighbor
                )));
            }
            if !(r.coeff.is_finite() && r.rhs.is_finite()) {
                return Err(Error::NonFinite("constraint row"));
            }
        }
        Ok(Self { rows, index })
    }

    pub fn rows(&self) -> &[ConstraintRow] {
        &self.rows
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_unknowns(&self) -> usize {
        self.index.len()
    }

    pub fn pixel_index(&self) -> &PixelIndex {
        &self.index
    }

    /// `A d - b`, one entry per row.
    pub fn residuals(&self, d: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.residual(d)).collect()
    }
}

/// Assembles the one-sided perspective constraints for every valid pixel.
pub fn assemble_system(n: &NormalMap, k: &CameraIntrinsics) -> Result<SparseConstraintSystem> {
    if n.size() != k.size() {
        return Err(Error::SizeMismatch {
            what: "normals vs intrinsics",
            got: n.size(),
            expected: k.size(),
        });
    }
    let (w, h) = n.size();
    let index = PixelIndex::from_mask(n.valid());
    let mut rows = Vec::with_capacity(4 * index.len());
    for p in 0..index.len() {
        let (u, v) = index.coords(p);
        let normal = *n.vectors().get(u, v);
        for axis in [Axis::U, Axis::V] {
            let t = tilde_nz(u as f64, v as f64, normal, k, axis);
            let rhs = match axis {
                Axis::U => -normal[0],
                Axis::V => -normal[1],
            };
            let forward = match axis {
                Axis::U => (u + 1 < w).then(|| (u + 1, v)),
                Axis::V => (v + 1 < h).then(|| (u, v + 1)),
            };
            let backward = match axis {
                Axis::U => (u > 0).then(|| (u - 1, v)),
                Axis::V => (v > 0).then(|| (u, v - 1)),
            };
            for (side, nb, sign) in [(Side::Forward, forward, 1.0), (Side::Backward, backward, -1.0)] {
                let Some(q) = nb.and_then(|(qu, qv)| index.unknown(qu, qv)) else {
                    continue;
                };
                rows.push(ConstraintRow {
                    pixel: p,
                    neighbor: q,
                    coeff: sign * t,
                    rhs,
                    axis,
                    side,
                });
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Degenerate(
            "fewer than two 4-connected valid pixels; nothing to integrate".into(),
        ));
    }
    if rows.iter().any(|r| !(r.coeff.is_finite() && r.rhs.is_finite())) {
        return Err(Error::NonFinite("constraint coefficients"));
    }
    Ok(SparseConstraintSystem { rows, index })
}

/// Diagonal of `W`, one weight per constraint row.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(pub Vec<f64>);

impl WeightVector {
    pub fn uniform(len: usize, w: f64) -> Self {
        Self(vec![w; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Returns `(sigma(x), 1 - sigma(x))`, computed so that the pair sums to
/// exactly 1.0 in floating point.
#[inline]
fn logistic_pair(x: f64) -> (f64, f64) {
    if x >= 0.0 {
        let e = (-x).exp();
        let small = e / (1.0 + e);
        (1.0 - small, small)
    } else {
        let e = x.exp();
        let small = e / (1.0 + e);
        (small, 1.0 - small)
    }
}

/// One-sided selection weights.
///
/// For each `(pixel, axis)` with both sides present the forward weight is
/// `sigma(k (r_b^2 - r_f^2))` and the backward weight its complement, so the
/// side with the smaller residual wins. Unpaired rows get 0.5.
pub fn bilateral_weights(sys: &SparseConstraintSystem, d_log: &[f64], k: f64) -> Result<WeightVector> {
    if d_log.len() != sys.num_unknowns() {
        return Err(Error::InvalidInput(format!(
            "log-depth has {} entries for {} unknowns",
            d_log.len(),
            sys.num_unknowns()
        )));
    }
    if !k.is_finite() || k < 0.0 {
        return Err(Error::InvalidInput(format!("bilateral stiffness must be >= 0, got {k}")));
    }
    if d_log.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("log-depth"));
    }
    let rows = sys.rows();
    let mut w = vec![0.5; rows.len()];
    let mut i = 0;
    while i < rows.len() {
        let a = &rows[i];
        let paired = rows
            .get(i + 1)
            .filter(|b| b.pixel == a.pixel && b.axis == a.axis && a.side == Side::Forward);
        match paired {
            Some(b) => {
                let rf = a.residual(d_log);
                let rb = b.residual(d_log);
                let (wf, wb) = logistic_pair(k * (rb * rb - rf * rf));
                w[i] = wf;
                w[i + 1] = wb;
                i += 2;
            }
            None => i += 1,
        }
    }
    Ok(WeightVector(w))
}

/// `(A d - b)^T W (A d - b)`.
pub fn spatial_energy(sys: &SparseConstraintSystem, w: &WeightVector, d_log: &[f64]) -> Result<f64> {
    if w.len() != sys.num_rows() || d_log.len() != sys.num_unknowns() {
        return Err(Error::InvalidInput(format!(
            "energy dimensions: {} weights / {} rows, {} values / {} unknowns",
            w.len(),
            sys.num_rows(),
            d_log.len(),
            sys.num_unknowns()
        )));
    }
    Ok(sys
        .rows()
        .iter()
        .zip(w.as_slice())
        .map(|(r, &wi)| {
            let res = r.residual(d_log);
            wi * res * res
        })
        .sum())
}
