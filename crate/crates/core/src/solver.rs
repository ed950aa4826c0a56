//! Weighted least-squares solve of the integration system plus diagonal
//! temporal terms, and the outer reweighting loop.
//!
//! For fixed row weights `W` and diagonal `Λ` the minimizer of
//! `(A d - b)^T W (A d - b) + Σ λ_i (d_i - t_i)^2` solves
//! `(A^T W A + Λ) d = A^T W b + Λ t`. The operator is applied matrix-free and
//! solved with Jacobi-preconditioned conjugate gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integration::{bilateral_weights, spatial_energy, SparseConstraintSystem, WeightVector};
use crate::temporal::{temporal_energy, DiagonalQuadratic};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    /// Bilateral stiffness; 0 gives uniform weights.
    pub k: f64,
    pub irls_max_iters: usize,
    /// Stop once the relative change of the total energy drops below this.
    pub irls_tol: f64,
    pub cg_max_iters: usize,
    /// Relative residual `|r| / |rhs|` at which CG stops.
    pub cg_tol: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            k: 2.0,
            irls_max_iters: 100,
            irls_tol: 1e-5,
            cg_max_iters: 5000,
            cg_tol: 1e-9,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k.is_finite() && self.k >= 0.0) {
            return Err(Error::InvalidInput(format!("bilateral k must be >= 0, got {}", self.k)));
        }
        if self.irls_max_iters == 0 || self.cg_max_iters == 0 {
            return Err(Error::InvalidInput("iteration limits must be positive".into()));
        }
        for (name, t) in [("irls tol", self.irls_tol), ("cg tol", self.cg_tol)] {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::InvalidInput(format!("{name} must lie in (0, 1), got {t}")));
            }
        }
        Ok(())
    }
}

/// Result of one fixed-weight solve.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedSolve {
    pub x: Vec<f64>,
    pub converged: bool,
    pub cg_iters: usize,
    /// Final `|r| / |rhs|` of the returned iterate.
    pub rel_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineResult {
    pub d_log: Vec<f64>,
    /// Total energy after each reweighting step, evaluated with the weights
    /// that step solved against.
    pub energy_trace: Vec<f64>,
    pub iters_used: usize,
    /// Whether the energy-change criterion fired before the iteration cap.
    pub converged: bool,
    /// Whether every inner CG solve met its tolerance.
    pub cg_converged: bool,
}

fn check_dims(sys: &SparseConstraintSystem, w: &WeightVector, q: &DiagonalQuadratic, x: &[f64]) -> Result<()> {
    let n = sys.num_unknowns();
    if w.len() != sys.num_rows() || q.len() != n || x.len() != n {
        return Err(Error::InvalidInput(format!(
            "solver dimensions: {} weights for {} rows; quadratic {} and vector {} for {n} unknowns",
            w.len(),
            sys.num_rows(),
            q.len(),
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial log-depth"));
    }
    if w.as_slice().iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidInput("row weights must be finite and >= 0".into()));
    }
    for i in 0..n {
        if q.active[i] && !(q.lambda_diag[i] > 0.0 && q.lambda_diag[i].is_finite() && q.target[i].is_finite()) {
            return Err(Error::InvalidInput(format!("active diagonal term {i} is not positive and finite")));
        }
    }
    Ok(())
}

/// `y = (A^T W A + Λ) x`.
fn apply_normal(sys: &SparseConstraintSystem, w: &[f64], q: &DiagonalQuadratic, x: &[f64], y: &mut [f64]) {
    for (i, yi) in y.iter_mut().enumerate() {
        *yi = if q.active[i] { q.lambda_diag[i] * x[i] } else { 0.0 };
    }
    for (r, &wi) in sys.rows().iter().zip(w) {
        if wi == 0.0 {
            continue;
        }
        let s = wi * r.coeff * r.coeff * (x[r.neighbor] - x[r.pixel]);
        y[r.neighbor] += s;
        y[r.pixel] -= s;
    }
}

fn normal_rhs(sys: &SparseConstraintSystem, w: &[f64], q: &DiagonalQuadratic) -> Vec<f64> {
    let mut rhs: Vec<f64> = (0..sys.num_unknowns())
        .map(|i| if q.active[i] { q.lambda_diag[i] * q.target[i] } else { 0.0 })
        .collect();
    for (r, &wi) in sys.rows().iter().zip(w) {
        let s = wi * r.coeff * r.rhs;
        rhs[r.neighbor] += s;
        rhs[r.pixel] -= s;
    }
    rhs
}

fn normal_diagonal(sys: &SparseConstraintSystem, w: &[f64], q: &DiagonalQuadratic) -> Vec<f64> {
    let mut diag: Vec<f64> = (0..sys.num_unknowns())
        .map(|i| if q.active[i] { q.lambda_diag[i] } else { 0.0 })
        .collect();
    for (r, &wi) in sys.rows().iter().zip(w) {
        let s = wi * r.coeff * r.coeff;
        diag[r.neighbor] += s;
        diag[r.pixel] += s;
    }
    diag
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Connected components of the weighted row graph. Returns a component id
/// per unknown.
fn components(sys: &SparseConstraintSystem, w: &[f64]) -> Vec<usize> {
    let n = sys.num_unknowns();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for (r, &wi) in sys.rows().iter().zip(w) {
        if wi > 0.0 && r.coeff != 0.0 {
            let a = find(&mut parent, r.pixel);
            let b = find(&mut parent, r.neighbor);
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    (0..n).map(|i| find(&mut parent, i)).collect()
}

/// Shifts every component without an active diagonal term so that its mean
/// equals the mean of `init` over the same component.
fn anchor_gauge(sys: &SparseConstraintSystem, w: &[f64], q: &DiagonalQuadratic, init: &[f64], x: &mut [f64]) {
    let comp = components(sys, w);
    let n = x.len();
    let mut anchored = vec![false; n];
    let mut sum_x = vec![0.0; n];
    let mut sum_init = vec![0.0; n];
    let mut count = vec![0usize; n];
    for i in 0..n {
        let c = comp[i];
        anchored[c] |= q.active[i];
        sum_x[c] += x[i];
        sum_init[c] += init[i];
        count[c] += 1;
    }
    for i in 0..n {
        let c = comp[i];
        if !anchored[c] {
            x[i] += (sum_init[c] - sum_x[c]) / count[c] as f64;
        }
    }
}

/// Minimizes the fixed-weight quadratic, warm-started at `init`.
///
/// Components of the constraint graph that carry no diagonal term are only
/// determined up to a constant; those are pinned to the mean of `init`.
/// If CG hits `cg_max_iters` the iterate with the smallest residual is
/// returned with `converged == false`.
pub fn solve_fixed_weights(
    sys: &SparseConstraintSystem,
    w: &WeightVector,
    q: &DiagonalQuadratic,
    init: &[f64],
    cfg: &SolveConfig,
) -> Result<FixedSolve> {
    cfg.validate()?;
    check_dims(sys, w, q, init)?;
    let n = sys.num_unknowns();
    let w = w.as_slice();
    let rhs = normal_rhs(sys, w, q);
    let inv_diag: Vec<f64> = normal_diagonal(sys, w, q)
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut x = init.to_vec();
    let mut kx = vec![0.0; n];
    apply_normal(sys, w, q, &x, &mut kx);
    let mut r: Vec<f64> = rhs.iter().zip(&kx).map(|(b, a)| b - a).collect();
    let rhs_norm = dot(&rhs, &rhs).sqrt();
    let mut r_norm = dot(&r, &r).sqrt();
    let scale = if rhs_norm > 0.0 { rhs_norm } else { r_norm };
    let rel = |rn: f64| if scale > 0.0 { rn / scale } else { 0.0 };

    let mut best_x = x.clone();
    let mut best_rel = rel(r_norm);
    let mut converged = best_rel <= cfg.cg_tol;
    let mut iters = 0;

    if !converged {
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, b)| a * b).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut kp = vec![0.0; n];
        while iters < cfg.cg_max_iters {
            iters += 1;
            apply_normal(sys, w, q, &p, &mut kp);
            let pkp = dot(&p, &kp);
            if !(pkp > 0.0) {
                break;
            }
            let alpha = rz / pkp;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * kp[i];
            }
            r_norm = dot(&r, &r).sqrt();
            let cur = rel(r_norm);
            if cur < best_rel {
                best_rel = cur;
                best_x.copy_from_slice(&x);
            }
            if cur <= cfg.cg_tol {
                converged = true;
                break;
            }
            for i in 0..n {
                z[i] = r[i] * inv_diag[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
    }

    anchor_gauge(sys, w, q, init, &mut best_x);
    Ok(FixedSolve {
        x: best_x,
        converged,
        cg_iters: iters,
        rel_residual: best_rel,
    })
}

/// Spatial plus temporal energy at `d`.
pub fn total_energy(sys: &SparseConstraintSystem, w: &WeightVector, q: &DiagonalQuadratic, d: &[f64]) -> Result<f64> {
    Ok(spatial_energy(sys, w, d)? + temporal_energy(d, q)?)
}

/// Gradient `2 (A^T W A d - A^T W b) + 2 Λ (d - t)` of [`total_energy`].
pub fn energy_gradient(sys: &SparseConstraintSystem, w: &WeightVector, q: &DiagonalQuadratic, d: &[f64]) -> Result<Vec<f64>> {
    check_dims(sys, w, q, d)?;
    let w = w.as_slice();
    let mut kd = vec![0.0; d.len()];
    apply_normal(sys, w, q, d, &mut kd);
    let rhs = normal_rhs(sys, w, q);
    Ok(kd.iter().zip(&rhs).map(|(a, b)| 2.0 * (a - b)).collect())
}

/// Iteratively reweighted refinement: solve the fixed-weight problem,
/// recompute bilateral weights at the new iterate, repeat until the total
/// energy settles.
///
/// First weights come from `init` when `q` has an active pixel: the init is
/// then the data, and its depth steps are the only evidence of edges that the
/// normals cannot show. With no data term the init is only a starting point,
/// so the first solve uses even 0.5 weights; weights from a noisy start
/// saturate the sigmoid and cut small noise islands loose for good.
pub fn irls_refine(
    sys: &SparseConstraintSystem,
    q: &DiagonalQuadratic,
    init_log_depth: &[f64],
    cfg: &SolveConfig,
) -> Result<RefineResult> {
    cfg.validate()?;
    let mut d = init_log_depth.to_vec();
    let first_k = if q.active.iter().any(|&a| a) { cfg.k } else { 0.0 };
    let mut w = bilateral_weights(sys, &d, first_k)?;
    check_dims(sys, &w, q, &d)?;
    let mut prev_energy = total_energy(sys, &w, q, &d)?;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut cg_converged = true;
    for it in 0..cfg.irls_max_iters {
        if it > 0 {
            w = bilateral_weights(sys, &d, cfg.k)?;
        }
        let sol = solve_fixed_weights(sys, &w, q, &d, cfg)?;
        cg_converged &= sol.converged;
        d = sol.x;
        let e = total_energy(sys, &w, q, &d)?;
        trace.push(e);
        let change = (prev_energy - e).abs();
        if change == 0.0 || change <= cfg.irls_tol * prev_energy.abs() {
            converged = true;
            break;
        }
        prev_energy = e;
    }
    Ok(RefineResult {
        iters_used: trace.len(),
        d_log: d,
        energy_trace: trace,
        converged,
        cg_converged,
    })
}
