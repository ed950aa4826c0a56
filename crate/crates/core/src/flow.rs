//! Optical flow fields and a classical Horn–Schunck fallback estimator.
//!
//! Flow is stored from frame `i` to frame `i-1`: pixel `(u, v)` of frame `i`
//! corresponds to `(u - du, v - dv)` in frame `i-1`. Equivalently `(du, dv)`
//! is the motion of the content between the two frames.

use crate::error::{Error, Result};
use crate::grid::{Grid, Mask};

#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub du: Grid<f64>,
    pub dv: Grid<f64>,
    pub valid: Mask,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            du: Grid::new(width, height, 0.0),
            dv: Grid::new(width, height, 0.0),
            valid: Grid::new(width, height, true),
        }
    }

    pub fn constant(width: usize, height: usize, du: f64, dv: f64) -> Self {
        Self {
            du: Grid::new(width, height, du),
            dv: Grid::new(width, height, dv),
            valid: Grid::new(width, height, true),
        }
    }

    /// Assembles a field, invalidating any pixel with a non-finite component.
    pub fn new(du: Grid<f64>, dv: Grid<f64>, valid: Mask) -> Result<Self> {
        du.ensure_same_size(&dv, "flow v component")?;
        du.ensure_same_size(&valid, "flow mask")?;
        let mut valid = valid;
        for ((ok, a), b) in valid.data_mut().iter_mut().zip(du.data()).zip(dv.data()) {
            *ok &= a.is_finite() && b.is_finite();
        }
        Ok(Self { du, dv, valid })
    }

    pub fn width(&self) -> usize {
        self.du.width()
    }

    pub fn height(&self) -> usize {
        self.du.height()
    }

    pub fn size(&self) -> (usize, usize) {
        self.du.size()
    }

    #[inline]
    pub fn at(&self, u: usize, v: usize) -> Option<(f64, f64)> {
        if *self.valid.get(u, v) {
            Some((*self.du.get(u, v), *self.dv.get(u, v)))
        } else {
            None
        }
    }
}

/// Per-pixel `sqrt(du^2 + dv^2)`.
pub fn flow_magnitude(f: &FlowField) -> Grid<f64> {
    Grid::from_fn(f.width(), f.height(), |u, v| {
        let a = *f.du.get(u, v);
        let b = *f.dv.get(u, v);
        (a * a + b * b).sqrt()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HornSchunckParams {
    /// Smoothness weight, in 8-bit intensity units (images are scaled by 255
    /// internally, so the customary value of 15 applies to [0, 1] inputs).
    pub alpha: f64,
    /// Jacobi iterations.
    pub iters: usize,
}

impl Default for HornSchunckParams {
    fn default() -> Self {
        Self { alpha: 15.0, iters: 100 }
    }
}

/// Dense flow from `gray_i` back to `gray_prev` by Horn–Schunck.
///
/// Intensities are expected in [0, 1]. Borders use replicated neighbours.
pub fn horn_schunck(gray_i: &Grid<f64>, gray_prev: &Grid<f64>, params: HornSchunckParams) -> Result<FlowField> {
    gray_i.ensure_same_size(gray_prev, "previous frame")?;
    if !(params.alpha.is_finite() && params.alpha > 0.0) {
        return Err(Error::InvalidInput(format!("alpha must be positive, got {}", params.alpha)));
    }
    if gray_i.data().iter().chain(gray_prev.data()).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("image intensities"));
    }
    let (w, h) = gray_i.size();
    let cur = gray_i.map(|x| x * 255.0);
    let prev = gray_prev.map(|x| x * 255.0);

    let at = |g: &Grid<f64>, u: isize, v: isize| -> f64 {
        let uc = u.clamp(0, w as isize - 1) as usize;
        let vc = v.clamp(0, h as isize - 1) as usize;
        *g.get(uc, vc)
    };
    let mut ix = vec![0.0; w * h];
    let mut iy = vec![0.0; w * h];
    let mut it = vec![0.0; w * h];
    for v in 0..h {
        for u in 0..w {
            let (ui, vi) = (u as isize, v as isize);
            let i = v * w + u;
            let gx = |g: &Grid<f64>| 0.5 * (at(g, ui + 1, vi) - at(g, ui - 1, vi));
            let gy = |g: &Grid<f64>| 0.5 * (at(g, ui, vi + 1) - at(g, ui, vi - 1));
            ix[i] = 0.5 * (gx(&cur) + gx(&prev));
            iy[i] = 0.5 * (gy(&cur) + gy(&prev));
            it[i] = cur.data()[i] - prev.data()[i];
        }
    }

    let alpha2 = params.alpha * params.alpha;
    let mut fu = vec![0.0; w * h];
    let mut fv = vec![0.0; w * h];
    let mut nu = vec![0.0; w * h];
    let mut nv = vec![0.0; w * h];
    for _ in 0..params.iters {
        for v in 0..h {
            let up = v.saturating_sub(1);
            let dn = (v + 1).min(h - 1);
            for u in 0..w {
                let lf = u.saturating_sub(1);
                let rt = (u + 1).min(w - 1);
                let avg = |f: &[f64]| 0.25 * (f[v * w + lf] + f[v * w + rt] + f[up * w + u] + f[dn * w + u]);
                let i = v * w + u;
                let ua = avg(&fu);
                let va = avg(&fv);
                let t = (ix[i] * ua + iy[i] * va + it[i]) / (alpha2 + ix[i] * ix[i] + iy[i] * iy[i]);
                nu[i] = ua - ix[i] * t;
                nv[i] = va - iy[i] * t;
            }
        }
        std::mem::swap(&mut fu, &mut nu);
        std::mem::swap(&mut fv, &mut nv);
    }
    FlowField::new(
        Grid::from_vec(w, h, fu)?,
        Grid::from_vec(w, h, fv)?,
        Grid::new(w, h, true),
    )
}
