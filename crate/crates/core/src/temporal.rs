//! Flow-gated region masks, flow warping of the previous refined depth, and
//! the consistency/regularization terms expressed as one diagonal quadratic
//! in log-depth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{flow_magnitude, FlowField};
use crate::geometry::{DepthMap, DepthUnit};
use crate::grid::{Grid, Mask};
use crate::integration::PixelIndex;

/// Default flow-magnitude threshold separating static from dynamic pixels.
pub const DEFAULT_FLOW_THRESHOLD_PX: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RegionMasks {
    pub static_m: Mask,
    pub dynamic_m: Mask,
    pub background_m: Mask,
}

/// Thresholds flow magnitude (`<= c` is static). Pixels without valid flow
/// count as dynamic. Background is static now and static in the previous frame.
pub fn region_masks(f: &FlowField, static_prev: &Mask, c: f64) -> Result<RegionMasks> {
    if !(c.is_finite() && c >= 0.0) {
        return Err(Error::InvalidInput(format!("flow threshold must be >= 0, got {c}")));
    }
    f.du.ensure_same_size(static_prev, "previous static mask")?;
    let mag = flow_magnitude(f);
    let (w, h) = f.size();
    let static_m = Grid::from_fn(w, h, |u, v| *f.valid.get(u, v) && *mag.get(u, v) <= c);
    let dynamic_m = static_m.map(|&s| !s);
    let background_m = Grid::from_fn(w, h, |u, v| *static_m.get(u, v) && *static_prev.get(u, v));
    Ok(RegionMasks {
        static_m,
        dynamic_m,
        background_m,
    })
}

/// Samples `d_prev` bilinearly at `(u - du, v - dv)`.
///
/// A sample is valid only if the flow is valid and every bilinear tap with
/// non-zero weight lies inside the image on a valid pixel. The returned map
/// keeps the unit of `d_prev`; its validity equals the returned mask.
pub fn warp_previous_depth(d_prev: &DepthMap, f: &FlowField) -> Result<(DepthMap, Mask)> {
    d_prev.values().ensure_same_size(&f.du, "flow field")?;
    let (w, h) = d_prev.size();
    let mut values = Grid::new(w, h, 0.0);
    let mut ok = Grid::new(w, h, false);
    for v in 0..h {
        for u in 0..w {
            let Some((du, dv)) = f.at(u, v) else { continue };
            if let Some(x) = bilinear(d_prev, u as f64 - du, v as f64 - dv) {
                *values.get_mut(u, v) = x;
                *ok.get_mut(u, v) = true;
            }
        }
    }
    let warped = DepthMap::with_mask(values, &ok, d_prev.unit())?;
    let valid = warped.valid().clone();
    Ok((warped, valid))
}

fn bilinear(d: &DepthMap, x: f64, y: f64) -> Option<f64> {
    if !(x.is_finite() && y.is_finite()) {
        return None;
    }
    let x0 = x.floor();
    let y0 = y.floor();
    let ax = x - x0;
    let ay = y - y0;
    let taps = [
        (0.0, 0.0, (1.0 - ax) * (1.0 - ay)),
        (1.0, 0.0, ax * (1.0 - ay)),
        (0.0, 1.0, (1.0 - ax) * ay),
        (1.0, 1.0, ax * ay),
    ];
    let mut acc = 0.0;
    for (ox, oy, wt) in taps {
        if wt == 0.0 {
            continue;
        }
        let tx = x0 + ox;
        let ty = y0 + oy;
        if tx < 0.0 || ty < 0.0 || tx >= d.width() as f64 || ty >= d.height() as f64 {
            return None;
        }
        acc += wt * d.at(tx as usize, ty as usize)?;
    }
    Some(acc)
}

/// Loss weights for the temporal terms: consistency over dynamic (`cd`) and
/// background (`cb`) pixels, regularization over dynamic (`rd`) and
/// background (`rb`) pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaSet {
    pub cd: f64,
    pub cb: f64,
    pub rd: f64,
    pub rb: f64,
}

impl LambdaSet {
    /// Preset used for RT-1 and Bridge style real-robot footage.
    pub const RT1: LambdaSet = LambdaSet {
        cd: 20.0,
        cb: 200.0,
        rd: 20.0,
        rb: 20.0,
    };

    /// Preset for RLBench simulator footage (weaker regularization).
    pub const RLBENCH: LambdaSet = LambdaSet {
        cd: 20.0,
        cb: 200.0,
        rd: 2.0,
        rb: 2.0,
    };

    pub fn preset(name: &str) -> Option<LambdaSet> {
        match name.to_ascii_lowercase().as_str() {
            "rt1" | "rt-1" | "bridge" | "default" => Some(Self::RT1),
            "rlbench" => Some(Self::RLBENCH),
            _ => None,
        }
    }

    /// Same weights with the consistency terms switched off.
    pub fn without_consistency(self) -> LambdaSet {
        LambdaSet {
            cd: 0.0,
            cb: 0.0,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, x) in [("cd", self.cd), ("cb", self.cb), ("rd", self.rd), ("rb", self.rb)] {
            if !(x.is_finite() && x >= 0.0) {
                return Err(Error::InvalidInput(format!("lambda {name} must be >= 0, got {x}")));
            }
        }
        Ok(())
    }
}

impl Default for LambdaSet {
    fn default() -> Self {
        Self::RT1
    }
}

/// `sum_active lambda_diag[i] * (d[i] - target[i])^2`, indexed either per
/// pixel (raster order) or per solver unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalQuadratic {
    pub lambda_diag: Vec<f64>,
    pub target: Vec<f64>,
    pub active: Vec<bool>,
}

impl DiagonalQuadratic {
    pub fn empty(len: usize) -> Self {
        Self {
            lambda_diag: vec![0.0; len],
            target: vec![0.0; len],
            active: vec![false; len],
        }
    }

    /// `lambda` toward `target` on every entry.
    pub fn uniform(lambda: f64, target: Vec<f64>) -> Self {
        let n = target.len();
        let on = lambda > 0.0;
        Self {
            lambda_diag: vec![if on { lambda } else { 0.0 }; n],
            target,
            active: vec![on; n],
        }
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    pub fn any_active(&self) -> bool {
        self.active.iter().any(|&a| a)
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    /// Adds `lambda (d - t)^2` at entry `i`, merging with what is there.
    pub fn add(&mut self, i: usize, lambda: f64, t: f64) {
        if lambda <= 0.0 {
            return;
        }
        let l0 = self.lambda_diag[i];
        let l1 = l0 + lambda;
        self.target[i] = if l0 > 0.0 { (l0 * self.target[i] + lambda * t) / l1 } else { t };
        self.lambda_diag[i] = l1;
        self.active[i] = true;
    }

    /// Restricts a per-pixel quadratic to the unknowns of a system.
    pub fn gather(&self, index: &PixelIndex) -> DiagonalQuadratic {
        DiagonalQuadratic {
            lambda_diag: index.gather(&self.lambda_diag),
            target: index.gather(&self.target),
            active: index.gather(&self.active),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalTerms {
    /// Per-pixel quadratic in log-depth, raster order.
    pub quadratic: DiagonalQuadratic,
    /// Pixels where a contribution was dropped for a non-positive target.
    pub flagged: Mask,
}

/// Builds the consistency and regularization terms for one frame.
///
/// Targets are taken in log space. `warped` and `generated` must be metric.
pub fn temporal_terms(
    masks: &RegionMasks,
    warped: &DepthMap,
    sample_valid: &Mask,
    generated: &DepthMap,
    lambdas: &LambdaSet,
) -> Result<TemporalTerms> {
    lambdas.validate()?;
    warped.expect_unit(DepthUnit::Metric, "warped depth")?;
    generated.expect_unit(DepthUnit::Metric, "generated depth")?;
    let size = masks.static_m.size();
    for (what, got) in [
        ("warped depth", warped.size()),
        ("sample mask", sample_valid.size()),
        ("generated depth", generated.size()),
        ("dynamic mask", masks.dynamic_m.size()),
        ("background mask", masks.background_m.size()),
    ] {
        if got != size {
            return Err(Error::SizeMismatch {
                what,
                got,
                expected: size,
            });
        }
    }
    let (w, h) = size;
    let mut q = DiagonalQuadratic::empty(w * h);
    let mut flagged = Grid::new(w, h, false);
    for v in 0..h {
        for u in 0..w {
            let i = v * w + u;
            let dynamic = *masks.dynamic_m.get(u, v);
            let background = *masks.background_m.get(u, v);
            if !(dynamic || background) {
                continue;
            }
            let (lc, lr) = if dynamic {
                (lambdas.cd, lambdas.rd)
            } else {
                (lambdas.cb, lambdas.rb)
            };
            let mut push = |lambda: f64, raw: f64, valid: bool| {
                if lambda <= 0.0 {
                    return;
                }
                if !(raw.is_finite() && raw > 0.0) {
                    *flagged.get_mut(u, v) = true;
                } else if valid {
                    q.add(i, lambda, raw.ln());
                }
            };
            if *sample_valid.get(u, v) {
                push(lc, *warped.values().get(u, v), *warped.valid().get(u, v));
            }
            push(lr, *generated.values().get(u, v), *generated.valid().get(u, v));
        }
    }
    Ok(TemporalTerms {
        quadratic: q,
        flagged,
    })
}

/// `sum_active lambda (d - t)^2`.
pub fn temporal_energy(d_log: &[f64], q: &DiagonalQuadratic) -> Result<f64> {
    if d_log.len() != q.len() {
        return Err(Error::InvalidInput(format!(
            "log-depth has {} entries, quadratic has {}",
            d_log.len(),
            q.len()
        )));
    }
    Ok(d_log
        .iter()
        .zip(&q.lambda_diag)
        .zip(&q.target)
        .zip(&q.active)
        .filter(|(_, &a)| a)
        .map(|(((d, l), t), _)| l * (d - t) * (d - t))
        .sum())
}
