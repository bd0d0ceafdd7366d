//! Finite-difference differential calculus, Gauss–Legendre quadrature, and
//! small dense symmetric linear algebra.
//!
//! All derivatives are central differences with per-coordinate relative
//! steps `h_i = step * max(1, |x_i|)`. Matrices here are small (state
//! dimensions up to 16), so plain dense factorizations are used throughout.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::SymmetricEigen;

use crate::error::{Error, Result};
use crate::field::{Mat, ScalarField, State, VectorField};

/// Relative singular-value threshold for numerical rank decisions.
pub const RANK_TOL: f64 = 1e-8;

/// Finite-difference steps and quadrature order shared across the toolkit.
#[derive(Debug, Clone, Copy)]
pub struct StepConfig {
    /// Relative step for first derivatives.
    pub fd_step: f64,
    /// Relative step for second derivatives.
    pub hessian_step: f64,
    /// Gauss–Legendre node count on [0, 1].
    pub quad_order: usize,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            fd_step: 1e-6,
            hessian_step: 1e-4,
            quad_order: 16,
        }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fd_step > 0.0 && self.fd_step < 1.0) {
            return Err(Error::contract(format!(
                "fd_step must lie in (0, 1), got {}",
                self.fd_step
            )));
        }
        if !(self.hessian_step > 0.0 && self.hessian_step < 1.0) {
            return Err(Error::contract(format!(
                "hessian_step must lie in (0, 1), got {}",
                self.hessian_step
            )));
        }
        if self.quad_order < 2 || self.quad_order > 64 {
            return Err(Error::contract(format!(
                "quad_order must lie in 2..=64, got {}",
                self.quad_order
            )));
        }
        Ok(())
    }
}

fn step_for(step: f64, coord: f64) -> f64 {
    step * coord.abs().max(1.0)
}

fn probe(field: &VectorField, x: &State, coord: usize, side: &str) -> Result<State> {
    let v = field.eval(x).map_err(|e| {
        Error::numerical(format!(
            "field evaluation failed at {side} probe of coordinate {coord}: {e}"
        ))
    })?;
    if v.iter().any(|e| !e.is_finite()) {
        return Err(Error::numerical(format!(
            "field produced a non-finite value at {side} probe of coordinate {coord}"
        )));
    }
    Ok(v)
}

/// Central-difference Jacobian of a vector field.
pub fn jacobian(field: &VectorField, x: &State, cfg: &StepConfig) -> Result<Mat> {
    jacobian_cols(field, x, 0..x.len(), cfg)
}

/// Central-difference Jacobian restricted to the given coordinate range.
///
/// Returns the `n_out x cols.len()` block of the full Jacobian; used where
/// only a sub-block is needed (e.g. derivatives with respect to the first
/// `m` coordinates) to avoid probing the remaining directions.
pub fn jacobian_cols(
    field: &VectorField,
    x: &State,
    cols: std::ops::Range<usize>,
    cfg: &StepConfig,
) -> Result<Mat> {
    if cols.end > x.len() {
        return Err(Error::contract(format!(
            "jacobian column range {}..{} exceeds dimension {}",
            cols.start,
            cols.end,
            x.len()
        )));
    }
    let mut xp = x.clone();
    let mut out: Option<Mat> = None;
    for (k, i) in cols.clone().enumerate() {
        let h = step_for(cfg.fd_step, x[i]);
        xp[i] = x[i] + h;
        let fp = probe(field, &xp, i, "+h")?;
        xp[i] = x[i] - h;
        let fm = probe(field, &xp, i, "-h")?;
        xp[i] = x[i];
        let col = (fp - fm) / (2.0 * h);
        let m = out.get_or_insert_with(|| Mat::zeros(col.len(), cols.len()));
        if m.nrows() != col.len() {
            return Err(Error::numerical(
                "field output dimension changed between probes",
            ));
        }
        m.set_column(k, &col);
    }
    out.ok_or_else(|| Error::contract("jacobian requested over an empty column range"))
}

/// Central-difference gradient of a scalar field.
pub fn gradient(scalar: &ScalarField, x: &State, cfg: &StepConfig) -> Result<State> {
    let as_vec = scalar_as_vector(scalar);
    let j = jacobian(&as_vec, x, cfg)?;
    Ok(j.row(0).transpose())
}

fn scalar_as_vector(scalar: &ScalarField) -> VectorField {
    let s = scalar.clone();
    VectorField::new(move |x| Ok(State::from_vec(vec![s.eval(x)?])))
}

/// Central-difference Hessian of a scalar field.
///
/// The off-diagonal entries use the four-point cross stencil; the result is
/// mirrored across the diagonal, so the output equals its transpose exactly.
pub fn hessian(scalar: &ScalarField, x: &State, cfg: &StepConfig) -> Result<Mat> {
    let n = x.len();
    let eval = |pt: &State, what: &str| -> Result<f64> {
        let v = scalar
            .eval(pt)
            .map_err(|e| Error::numerical(format!("scalar evaluation failed at {what}: {e}")))?;
        if !v.is_finite() {
            return Err(Error::numerical(format!("scalar non-finite at {what}")));
        }
        Ok(v)
    };
    let f0 = eval(x, "center")?;
    let mut h = Mat::zeros(n, n);
    let mut xp = x.clone();
    let steps: Vec<f64> = (0..n).map(|i| step_for(cfg.hessian_step, x[i])).collect();
    for i in 0..n {
        let hi = steps[i];
        xp[i] = x[i] + hi;
        let fp = eval(&xp, &format!("+h probe of coordinate {i}"))?;
        xp[i] = x[i] - hi;
        let fm = eval(&xp, &format!("-h probe of coordinate {i}"))?;
        xp[i] = x[i];
        h[(i, i)] = (fp - 2.0 * f0 + fm) / (hi * hi);
        for j in (i + 1)..n {
            let hj = steps[j];
            xp[i] = x[i] + hi;
            xp[j] = x[j] + hj;
            let fpp = eval(&xp, &format!("++ probe of coordinates {i},{j}"))?;
            xp[j] = x[j] - hj;
            let fpm = eval(&xp, &format!("+- probe of coordinates {i},{j}"))?;
            xp[i] = x[i] - hi;
            xp[j] = x[j] + hj;
            let fmp = eval(&xp, &format!("-+ probe of coordinates {i},{j}"))?;
            xp[j] = x[j] - hj;
            let fmm = eval(&xp, &format!("-- probe of coordinates {i},{j}"))?;
            xp[i] = x[i];
            xp[j] = x[j];
            let mixed = (fpp - fpm - fmp + fmm) / (4.0 * hi * hj);
            h[(i, j)] = mixed;
            h[(j, i)] = mixed;
        }
    }
    Ok(h)
}

/// Lie bracket `[v, w](x) = Jw(x) v(x) - Jv(x) w(x)` via finite differences.
pub fn lie_bracket(v: &VectorField, w: &VectorField, x: &State, cfg: &StepConfig) -> Result<State> {
    let vx = v.eval_finite(x, "lie_bracket first field")?;
    let wx = w.eval_finite(x, "lie_bracket second field")?;
    if vx.len() != wx.len() || vx.len() != x.len() {
        return Err(Error::contract(format!(
            "lie_bracket dimension mismatch: |v| = {}, |w| = {}, |x| = {}",
            vx.len(),
            wx.len(),
            x.len()
        )));
    }
    let jw = jacobian(w, x, cfg)?;
    let jv = jacobian(v, x, cfg)?;
    Ok(jw * vx - jv * wx)
}

// Gauss–Legendre nodes/weights on [0, 1], cached per order. Nodes are the
// Legendre roots found by Newton iteration on the three-term recurrence.
fn gauss_legendre_01(order: usize) -> Arc<Vec<(f64, f64)>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Vec<(f64, f64)>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(table) = cache.lock().unwrap().get(&order) {
        return table.clone();
    }
    let n = order;
    let mut table = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        table.push(((x + 1.0) / 2.0, w / 2.0));
    }
    let table = Arc::new(table);
    cache.lock().unwrap().insert(order, table.clone());
    table
}

/// Gauss–Legendre quadrature of `integrand` over [0, 1].
///
/// Exact (to roundoff) for polynomial integrands of degree `2 * quad_order - 1`
/// or less. Works for any output supporting addition and scalar multiplication
/// (vectors, matrices, reals).
pub fn line_integral<T>(integrand: impl Fn(f64) -> Result<T>, cfg: &StepConfig) -> Result<T>
where
    T: std::ops::Add<T, Output = T> + std::ops::Mul<f64, Output = T>,
{
    let table = gauss_legendre_01(cfg.quad_order);
    let mut acc: Option<T> = None;
    for &(node, weight) in table.iter() {
        let v = integrand(node)
            .map_err(|e| Error::numerical(format!("integrand failed at node {node:.6}: {e}")))?;
        let term = v * weight;
        acc = Some(match acc {
            None => term,
            Some(a) => a + term,
        });
    }
    acc.ok_or_else(|| Error::contract("quadrature with zero nodes"))
}

fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0_f64, |a, &v| a.max(v.abs()))
}

/// Smallest and largest eigenvalues of a symmetric matrix.
pub fn sym_eig_extrema(a: &Mat) -> Result<(f64, f64)> {
    if a.nrows() != a.ncols() {
        return Err(Error::contract(format!(
            "sym_eig_extrema expects a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let asym = max_abs(&(a - a.transpose()));
    if asym > 1e-10 * (1.0 + max_abs(a)) {
        return Err(Error::contract(format!(
            "sym_eig_extrema expects a symmetric matrix (asymmetry {asym:.3e})"
        )));
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &l in eig.eigenvalues.iter() {
        lo = lo.min(l);
        hi = hi.max(l);
    }
    Ok((lo, hi))
}

/// Number of singular values above `RANK_TOL * sigma_max`.
pub fn numerical_rank(a: &Mat) -> usize {
    let sv = a.clone().singular_values();
    let smax = sv.iter().fold(0.0_f64, |a, &v| a.max(v));
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * smax).count()
}

/// Moore–Penrose pseudoinverse `(G^T G)^-1 G^T` for full-column-rank G.
pub fn pseudo_inverse(g: &Mat) -> Result<Mat> {
    let (n, m) = (g.nrows(), g.ncols());
    if m > n {
        return Err(Error::contract(format!(
            "pseudo_inverse expects at least as many rows as columns, got {n}x{m}"
        )));
    }
    let sv = g.clone().singular_values();
    let smax = sv.iter().fold(0.0_f64, |a, &v| a.max(v));
    let smin = sv.iter().fold(f64::INFINITY, |a, &v| a.min(v));
    if smax == 0.0 || smin <= RANK_TOL * smax {
        return Err(Error::singular(
            "pseudo_inverse (rank-deficient input)",
            if smin > 0.0 { smax / smin } else { f64::INFINITY },
        ));
    }
    let gtg = g.transpose() * g;
    let chol = nalgebra::Cholesky::new(gtg)
        .ok_or_else(|| Error::singular("pseudo_inverse normal equations", smax / smin))?;
    Ok(chol.inverse() * g.transpose())
}
