//! Depth, normal and point-cloud evaluation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DepthMap, NormalMap, PointCloud};
use crate::grid::{Grid, Mask};
use crate::io::Report;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthMetrics {
    pub absrel: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalMetrics {
    pub mean_deg: f64,
    pub median_deg: f64,
    pub pct_11_25: f64,
    pub count: usize,
}

impl DepthMetrics {
    pub fn to_report(&self) -> Report {
        let mut r = Report::new();
        r.push("absrel", self.absrel)
            .push("delta1", self.delta1)
            .push("delta2", self.delta2)
            .push("count", self.count);
        r
    }
}

impl NormalMetrics {
    pub fn to_report(&self) -> Report {
        let mut r = Report::new();
        r.push("mean_deg", self.mean_deg)
            .push("median_deg", self.median_deg)
            .push("pct_11_25", self.pct_11_25)
            .push("count", self.count);
        r
    }
}

fn check_mask<T, U>(a: &Grid<T>, b: &Grid<U>, mask: Option<&Mask>) -> Result<()> {
    a.ensure_same_size(b, "ground truth")?;
    if let Some(m) = mask {
        a.ensure_same_size(m, "evaluation mask")?;
    }
    Ok(())
}

fn selected(mask: Option<&Mask>, i: usize) -> bool {
    mask.is_none_or(|m| m.data()[i])
}

/// Least-squares `(s, t)` minimizing `Σ (s pred + t - gt)^2` over pixels
/// valid in both maps and in `mask`.
pub fn align_scale_shift(pred: &DepthMap, gt: &DepthMap, mask: Option<&Mask>) -> Result<(f64, f64)> {
    check_mask(pred.values(), gt.values(), mask)?;
    let pairs: Vec<(f64, f64)> = (0..pred.values().len())
        .filter(|&i| selected(mask, i) && pred.valid().data()[i] && gt.valid().data()[i])
        .map(|i| (pred.values().data()[i], gt.values().data()[i]))
        .collect();
    if pairs.len() < 2 {
        return Err(Error::Degenerate(format!("alignment needs two pixels, got {}", pairs.len())));
    }
    let n = pairs.len() as f64;
    let mp = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mg = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let var: f64 = pairs.iter().map(|p| (p.0 - mp) * (p.0 - mp)).sum();
    let cov: f64 = pairs.iter().map(|p| (p.0 - mp) * (p.1 - mg)).sum();
    if !(var > 0.0) {
        return Err(Error::Degenerate("prediction is constant on the mask".into()));
    }
    let s = cov / var;
    if s == 0.0 || !s.is_finite() {
        return Err(Error::Degenerate(format!("alignment scale {s} is unusable")));
    }
    Ok((s, mg - s * mp))
}

/// AbsRel and threshold accuracies of already-aligned predictions over
/// pixels valid in `gt` and set in `mask`. Non-positive predictions fail
/// every threshold.
pub fn depth_metrics(pred_aligned: &Grid<f64>, gt: &DepthMap, mask: Option<&Mask>) -> Result<DepthMetrics> {
    check_mask(pred_aligned, gt.values(), mask)?;
    let mut n = 0usize;
    let mut absrel = 0.0;
    let mut d1 = 0usize;
    let mut d2 = 0usize;
    for i in 0..pred_aligned.len() {
        if !(selected(mask, i) && gt.valid().data()[i]) {
            continue;
        }
        let p = pred_aligned.data()[i];
        let g = gt.values().data()[i];
        if !p.is_finite() {
            return Err(Error::NonFinite("aligned prediction"));
        }
        n += 1;
        absrel += (p - g).abs() / g;
        if p > 0.0 {
            let r = (p / g).max(g / p);
            d1 += (r < 1.25) as usize;
            d2 += (r < 1.25 * 1.25) as usize;
        }
    }
    if n == 0 {
        return Err(Error::InvalidInput("depth evaluation mask is empty".into()));
    }
    Ok(DepthMetrics {
        absrel: absrel / n as f64,
        delta1: d1 as f64 / n as f64,
        delta2: d2 as f64 / n as f64,
        count: n,
    })
}

/// Optionally aligns `pred` to `gt`, then evaluates on pixels valid in both.
pub fn evaluate_depth(pred: &DepthMap, gt: &DepthMap, mask: Option<&Mask>, align: bool) -> Result<(DepthMetrics, (f64, f64))> {
    check_mask(pred.values(), gt.values(), mask)?;
    let both = Grid::from_vec(
        pred.width(),
        pred.height(),
        (0..pred.values().len())
            .map(|i| selected(mask, i) && pred.valid().data()[i] && gt.valid().data()[i])
            .collect(),
    )?;
    let (s, t) = if align { align_scale_shift(pred, gt, Some(&both))? } else { (1.0, 0.0) };
    let aligned = pred.values().map(|&x| s * x + t);
    Ok((depth_metrics(&aligned, gt, Some(&both))?, (s, t)))
}

/// Angular error statistics in degrees over pixels valid in both maps.
pub fn normal_metrics(pred: &NormalMap, gt: &NormalMap, mask: Option<&Mask>) -> Result<NormalMetrics> {
    check_mask(pred.vectors(), gt.vectors(), mask)?;
    let mut angles: Vec<f64> = (0..pred.vectors().len())
        .filter(|&i| selected(mask, i) && pred.valid().data()[i] && gt.valid().data()[i])
        .map(|i| {
            let a = pred.vectors().data()[i];
            let b = gt.vectors().data()[i];
            (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]).clamp(-1.0, 1.0).acos().to_degrees()
        })
        .collect();
    if angles.is_empty() {
        return Err(Error::InvalidInput("normal evaluation mask is empty".into()));
    }
    let n = angles.len();
    let mean = angles.iter().sum::<f64>() / n as f64;
    let within = angles.iter().filter(|&&a| a < 11.25).count();
    angles.sort_by(f64::total_cmp);
    Ok(NormalMetrics {
        mean_deg: mean,
        median_deg: angles[(n - 1) / 2],
        pct_11_25: within as f64 / n as f64,
        count: n,
    })
}

#[inline]
fn l1(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).abs() + (a[1] - b[1]).abs() + (a[2] - b[2]).abs()
}

const LEAF: usize = 8;

enum Node {
    Leaf(Vec<usize>),
    Split {
        axis: usize,
        value: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

/// Exact nearest-neighbour index under the L1 norm.
pub struct KdTree<'a> {
    points: &'a [[f64; 3]],
    root: Node,
}

impl<'a> KdTree<'a> {
    pub fn new(points: &'a [[f64; 3]]) -> Self {
        let mut idx: Vec<usize> = (0..points.len()).collect();
        let root = Self::build(points, &mut idx);
        Self { points, root }
    }

    fn build(points: &[[f64; 3]], idx: &mut [usize]) -> Node {
        if idx.len() <= LEAF {
            return Node::Leaf(idx.to_vec());
        }
        let axis = (0..3)
            .max_by(|&a, &b| {
                let spread = |k: usize| {
                    let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                        (lo.min(points[i][k]), hi.max(points[i][k]))
                    });
                    hi - lo
                };
                spread(a).total_cmp(&spread(b))
            })
            .expect("three axes");
        let mid = idx.len() / 2;
        idx.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
        let value = points[idx[mid]][axis];
        let (l, r) = idx.split_at_mut(mid);
        Node::Split {
            axis,
            value,
            left: Box::new(Self::build(points, l)),
            right: Box::new(Self::build(points, r)),
        }
    }

    /// Smallest L1 distance from `q` to any indexed point.
    pub fn nearest_distance(&self, q: &[f64; 3]) -> f64 {
        let mut best = f64::INFINITY;
        self.search(&self.root, q, &mut best);
        best
    }

    fn search(&self, node: &Node, q: &[f64; 3], best: &mut f64) {
        match node {
            Node::Leaf(ids) => {
                for &i in ids {
                    let d = l1(q, &self.points[i]);
                    if d < *best {
                        *best = d;
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                // left holds coordinates <= value, right holds >= value
                let diff = q[*axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                if diff.abs() < *best {
                    self.search(far, q, best);
                }
            }
        }
    }
}

fn directed_mean(from: &PointCloud, to: &PointCloud) -> f64 {
    let tree = KdTree::new(&to.points);
    let mut sum = 0.0;
    for p in &from.points {
        sum += tree.nearest_distance(p);
    }
    sum / from.points.len() as f64
}

/// Half the sum of the two directed mean nearest-neighbour L1 distances.
pub fn chamfer_l1(p: &PointCloud, q: &PointCloud) -> Result<f64> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::InvalidInput("chamfer distance needs two non-empty clouds".into()));
    }
    if p.points.iter().chain(&q.points).flatten().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("point coordinates"));
    }
    Ok(0.5 * (directed_mean(p, q) + directed_mean(q, p)))
}
