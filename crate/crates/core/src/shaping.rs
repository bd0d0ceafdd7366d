//! Construction of the shaped energy function.
//!
//! The pipeline: `build_rho` turns the reduced matching equation into an
//! explicit evaluator for the eta-gradient of the transformed energy;
//! `verify_m1` checks a candidate gain map against its PDE system;
//! `select_m2` picks the constant free gain from the definiteness bound;
//! `build_beta`/`build_energy` assemble the xi-gradient and the energy
//! itself by quadrature along the segment to the equilibrium.

use crate::error::{Error, Result};
use crate::field::{stack, Mat, MatrixField, ScalarField, State, VectorField};
use crate::model::{AffineSystem, CoordinateChange, DomainBox, SampleGrid, TargetStructure};
use crate::numerics::{self, StepConfig};

/// Relative (to box width) slack used when checking that quadrature
/// segments map back into the domain; tolerant of finite-difference probe
/// excursions.
const SEGMENT_SLACK: f64 = 1e-3;

/// Builds the evaluator for the eta-gradient of the transformed energy:
/// solve `(G_perp F_d deta^T/dx) rho = G_perp f` at `x = tau^-1(z)`.
pub fn build_rho(
    sys: &AffineSystem,
    tgt: &TargetStructure,
    coords: &CoordinateChange,
    cfg: StepConfig,
) -> VectorField {
    let f = sys.f.clone();
    let f_d = tgt.f_d.clone();
    let g_perp = tgt.g_perp.clone();
    let coords = coords.clone();
    let (n, m) = (coords.n, coords.m);
    VectorField::new(move |z| {
        let x = coords.inverse.eval_finite(z, "inverse coordinate map")?;
        let jt = coords.jacobian_at(&x, &cfg)?;
        let eta_jac = jt.rows(m, n - m).into_owned();
        let gp = g_perp.eval(&x)?;
        let w = &gp * f_d.eval(&x)?;
        let a = &w * eta_jac.transpose();
        let rhs = gp * f.eval_finite(&x, "drift")?;
        let lu = a.clone().lu();
        lu.solve(&rhs).ok_or_else(|| {
            let sv = a.singular_values();
            let smax = sv.iter().cloned().fold(0.0f64, f64::max);
            let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
            Error::singular(
                "reduced matching system",
                if smin > 0.0 { smax / smin } else { f64::INFINITY },
            )
        })
    })
}

/// Worst-case residuals of the three gain-map conditions over a grid in
/// transformed coordinates.
#[derive(Debug, Clone)]
pub struct GainMapResiduals {
    /// `M1 = M1^T`.
    pub symmetry: f64,
    /// Cross-derivative symmetry in the xi block.
    pub xi_cross: f64,
    /// Eta derivatives against second xi-derivatives of rho.
    pub eta_vs_rho: f64,
}

impl GainMapResiduals {
    pub fn pass(&self, tol_first: f64, tol_second: f64) -> bool {
        self.symmetry <= tol_first && self.xi_cross <= tol_first && self.eta_vs_rho <= tol_second
    }
}

fn matrix_directional_derivative(
    m1: &MatrixField,
    z: &State,
    dir: usize,
    step: f64,
) -> Result<Mat> {
    let h = step * z[dir].abs().max(1.0);
    let mut zp = z.clone();
    zp[dir] = z[dir] + h;
    let fp = m1.eval(&zp)?;
    zp[dir] = z[dir] - h;
    let fm = m1.eval(&zp)?;
    Ok((fp - fm) / (2.0 * h))
}

/// Verifies a candidate gain map against its defining PDE system by finite
/// differences; failures are residuals, not errors.
pub fn verify_m1(
    m1: &MatrixField,
    rho: &VectorField,
    m: usize,
    z_grid: &SampleGrid,
    cfg: &StepConfig,
) -> Result<GainMapResiduals> {
    let mut symmetry = 0.0f64;
    let mut xi_cross = 0.0f64;
    let mut eta_vs_rho = 0.0f64;
    for z in z_grid.iter() {
        let n = z.len();
        let m_at = m1.eval(z)?;
        if m_at.nrows() != m || m_at.ncols() != m {
            return Err(Error::contract(format!(
                "gain map must be {m}x{m}, got {}x{}",
                m_at.nrows(),
                m_at.ncols()
            )));
        }
        symmetry = symmetry.max((&m_at - m_at.transpose()).amax());

        let d_xi: Vec<Mat> = (0..m)
            .map(|k| matrix_directional_derivative(m1, z, k, cfg.fd_step))
            .collect::<Result<_>>()?;
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    xi_cross = xi_cross.max((d_xi[k][(i, j)] - d_xi[j][(i, k)]).abs());
                }
            }
        }

        for k in 0..(n - m) {
            let lhs = matrix_directional_derivative(m1, z, m + k, cfg.fd_step)?;
            let rho_k = rho.clone();
            let component = ScalarField::new(move |p| Ok(rho_k.eval(p)?[k]));
            let hess = numerics::hessian(&component, z, cfg)?;
            for i in 0..m {
                for j in 0..m {
                    eta_vs_rho = eta_vs_rho.max((lhs[(i, j)] - hess[(i, j)]).abs());
                }
            }
        }
    }
    Ok(GainMapResiduals {
        symmetry,
        xi_cross,
        eta_vs_rho,
    })
}

/// Outcome of the free-gain selection.
#[derive(Debug, Clone)]
pub struct GainSelection {
    /// Chosen constant free gain (a multiple of the identity).
    pub m2: Mat,
    /// Margin that was applied on top of the bound.
    pub margin: f64,
    /// `lambda_max(C^T B^-1 C)` — the coupling term of the definiteness
    /// bound, with the inverse that makes the Schur complement argument and
    /// the worked example's numbers consistent.
    pub coupling: f64,
    /// `lambda_max(C^T B C)` as literally printed in the source statement
    /// of the bound; reported for reference only.
    pub coupling_literal: f64,
    /// `lambda_min(M1(z*))`.
    pub m1_min: f64,
    /// `max(0, coupling - m1_min + margin)`: the scalar put on the diagonal.
    pub required: f64,
    /// `d rho / d eta (z*)`.
    pub b: Mat,
    /// `d rho / d xi (z*)`.
    pub c: Mat,
}

/// Default margin policy: ten percent of the coupling term, floor 1.
pub fn default_margin(coupling: f64) -> f64 {
    (0.1 * coupling).max(1.0)
}

/// Picks the constant free gain `M2 = alpha I` so the equilibrium Hessian
/// block bound holds with the given margin. Errors when the eta-block
/// Jacobian of rho is not positive definite (the construction's hypothesis).
pub fn select_m2(
    rho: &VectorField,
    m1: &MatrixField,
    z_star: &State,
    m: usize,
    margin: f64,
    cfg: &StepConfig,
) -> Result<GainSelection> {
    if !(margin > 0.0) {
        return Err(Error::contract(format!("margin must be positive, got {margin}")));
    }
    let n = z_star.len();
    let j = numerics::jacobian(rho, z_star, cfg)?;
    if j.nrows() != n - m {
        return Err(Error::contract(format!(
            "rho returns {} components, expected {}",
            j.nrows(),
            n - m
        )));
    }
    let b = j.columns(m, n - m).into_owned();
    let c = j.columns(0, m).into_owned();
    let b_sym = (&b + b.transpose()) * 0.5;
    let (b_min, _) = numerics::sym_eig_extrema(&b_sym)?;
    if b_min <= 0.0 {
        return Err(Error::Shapeability(format!(
            "eta-block Jacobian of rho at the equilibrium is not positive definite \
             (lambda_min = {b_min:.6e}); the definiteness construction does not apply"
        )));
    }
    let b_inv = nalgebra::Cholesky::new(b_sym.clone())
        .ok_or_else(|| Error::singular("eta-block Jacobian of rho", f64::INFINITY))?
        .inverse();
    let coupled = c.transpose() * &b_inv * &c;
    let coupled = (&coupled + coupled.transpose()) * 0.5;
    let (_, coupling) = numerics::sym_eig_extrema(&coupled)?;
    let literal = c.transpose() * &b_sym * &c;
    let literal = (&literal + literal.transpose()) * 0.5;
    let (_, coupling_literal) = numerics::sym_eig_extrema(&literal)?;

    let m1_at = m1.eval(z_star)?;
    let m1_sym = (&m1_at + m1_at.transpose()) * 0.5;
    let (m1_min, _) = numerics::sym_eig_extrema(&m1_sym)?;

    let required = (coupling - m1_min + margin).max(0.0);
    Ok(GainSelection {
        m2: Mat::identity(m, m) * required,
        margin,
        coupling,
        coupling_literal,
        m1_min,
        required,
        b,
        c,
    })
}

/// `M(z) = M1(z) + M2`.
pub fn combined_gain_map(m1: &MatrixField, m2: &Mat) -> MatrixField {
    let m1 = m1.clone();
    let m2 = m2.clone();
    MatrixField::new(move |z| Ok(m1.eval(z)? + &m2))
}

fn guard_segment(
    coords: &CoordinateChange,
    domain: &DomainBox,
    z_star: &State,
    ztilde: &State,
) -> Result<()> {
    for k in 1..=8 {
        let lam = k as f64 / 9.0;
        let z = z_star + ztilde * lam;
        let x = coords.inverse.eval_finite(&z, "inverse coordinate map")?;
        if !domain.contains_with_slack(&x, SEGMENT_SLACK) {
            return Err(Error::Domain(format!(
                "segment point at lambda = {lam:.3} maps to {x:?}, outside the domain box"
            )));
        }
    }
    Ok(())
}

/// Assembles the xi-gradient of the energy by quadrature:
/// `beta(z) = (int_0^1 [M | d^T rho/d xi](z* + l ztilde) dl) ztilde`.
/// Exactly zero at the equilibrium.
pub fn build_beta(
    m_total: &MatrixField,
    rho: &VectorField,
    coords: &CoordinateChange,
    domain: &DomainBox,
    cfg: StepConfig,
) -> VectorField {
    let m_total = m_total.clone();
    let rho = rho.clone();
    let coords = coords.clone();
    let domain = domain.clone();
    let (n, m) = (coords.n, coords.m);
    VectorField::new(move |z| {
        let ztilde = z - &coords.z_star;
        if ztilde.amax() == 0.0 {
            return Ok(State::zeros(m));
        }
        guard_segment(&coords, &domain, &coords.z_star, &ztilde)?;
        let q = numerics::line_integral(
            |lam| {
                let zl = &coords.z_star + &ztilde * lam;
                let m_at = m_total.eval(&zl)?;
                let drho_dxi = numerics::jacobian_cols(&rho, &zl, 0..m, &cfg)?;
                let mut row_block = Mat::zeros(m, n);
                row_block.columns_mut(0, m).copy_from(&m_at);
                row_block
                    .columns_mut(m, n - m)
                    .copy_from(&drho_dxi.transpose());
                Ok(row_block)
            },
            &cfg,
        )?;
        Ok(q * ztilde)
    })
}

/// Assembles the transformed energy and its gradient pulled back to the
/// original coordinates:
/// `H(z) = (int_0^1 [beta^T rho^T](z* + l ztilde) dl) ztilde`, zero at the
/// equilibrium, and `grad_x H(x) = d^T tau/dx [beta; rho]` at `z = tau(x)`.
pub fn build_energy(
    beta: &VectorField,
    rho: &VectorField,
    coords: &CoordinateChange,
    domain: &DomainBox,
    cfg: StepConfig,
) -> (ScalarField, VectorField) {
    let h_bar = {
        let beta = beta.clone();
        let rho = rho.clone();
        let coords = coords.clone();
        let domain = domain.clone();
        ScalarField::new(move |z| {
            let ztilde = z - &coords.z_star;
            if ztilde.amax() == 0.0 {
                return Ok(0.0);
            }
            guard_segment(&coords, &domain, &coords.z_star, &ztilde)?;
            let v = numerics::line_integral(
                |lam| {
                    let zl = &coords.z_star + &ztilde * lam;
                    Ok(stack(&beta.eval(&zl)?, &rho.eval(&zl)?))
                },
                &cfg,
            )?;
            Ok(v.dot(&ztilde))
        })
    };
    let grad_hd_x = {
        let beta = beta.clone();
        let rho = rho.clone();
        let coords = coords.clone();
        VectorField::new(move |x| {
            let z = coords.forward(x)?;
            let g_z = stack(&beta.eval(&z)?, &rho.eval(&z)?);
            let jt = coords.jacobian_at(x, &cfg)?;
            Ok(jt.transpose() * g_z)
        })
    };
    (h_bar, grad_hd_x)
}

/// The fully assembled shaped energy.
#[derive(Debug, Clone)]
pub struct ShapedEnergy {
    pub rho: VectorField,
    pub m1: MatrixField,
    pub m2: Mat,
    pub beta: VectorField,
    /// Energy in transformed coordinates, zero at the equilibrium.
    pub h_bar: ScalarField,
    /// Energy in original coordinates.
    pub hd_x: ScalarField,
    /// Gradient of the energy in original coordinates.
    pub grad_hd_x: VectorField,
    pub z_star: State,
}

impl ShapedEnergy {
    /// Runs the construction end to end for a validated system, target
    /// structure, coordinate change, and candidate gain map.
    pub fn construct(
        sys: &AffineSystem,
        tgt: &TargetStructure,
        coords: &CoordinateChange,
        m1: &MatrixField,
        m2: &Mat,
        cfg: StepConfig,
    ) -> Result<Self> {
        let rho = build_rho(sys, tgt, coords, cfg);
        let m_total = combined_gain_map(m1, m2);
        let beta = build_beta(&m_total, &rho, coords, &sys.domain, cfg);
        let (h_bar, grad_hd_x) = build_energy(&beta, &rho, coords, &sys.domain, cfg);
        let hd_x = {
            let h_bar = h_bar.clone();
            let coords = coords.clone();
            ScalarField::new(move |x| h_bar.eval(&coords.forward(x)?))
        };
        Ok(Self {
            rho,
            m1: m1.clone(),
            m2: m2.clone(),
            beta,
            h_bar,
            hd_x,
            grad_hd_x,
            z_star: coords.z_star.clone(),
        })
    }
}

/// Minimum eigenvalues of the energy Hessian in both coordinate systems.
#[derive(Debug, Clone, Copy)]
pub struct HessianCertificate {
    pub lambda_min_z: f64,
    pub lambda_min_x: f64,
    /// Congruence preserves definiteness, so the signs must agree.
    pub consistent: bool,
    pub pass: bool,
}

/// Finite-difference Hessians of the energy at the equilibrium in both
/// coordinates. An indefinite Hessian is reported, not an error.
pub fn hessian_certificate(
    energy: &ShapedEnergy,
    x_star: &State,
    cfg: &StepConfig,
) -> Result<HessianCertificate> {
    let hz = numerics::hessian(&energy.h_bar, &energy.z_star, cfg)?;
    let (lambda_min_z, _) = numerics::sym_eig_extrema(&hz)?;
    let hx = numerics::hessian(&energy.hd_x, x_star, cfg)?;
    let (lambda_min_x, _) = numerics::sym_eig_extrema(&hx)?;
    let sign = |v: f64| {
        if v.abs() <= 1e-12 {
            0
        } else {
            v.signum() as i32
        }
    };
    Ok(HessianCertificate {
        lambda_min_z,
        lambda_min_x,
        consistent: sign(lambda_min_z) == sign(lambda_min_x),
        pass: lambda_min_z > 0.0 && lambda_min_x > 0.0,
    })
}

/// Master invariant of the construction: worst matching-equation residual
/// `|G_perp F_d grad_x H - G_perp f|` over a grid in original coordinates.
pub fn matching_residual_max(
    sys: &AffineSystem,
    tgt: &TargetStructure,
    energy: &ShapedEnergy,
    grid: &SampleGrid,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for x in grid.iter() {
        let w = tgt.coefficient(x)?;
        let lhs = w * energy.grad_hd_x.eval_finite(x, "energy gradient")?;
        let rhs = tgt.g_perp.eval(x)? * sys.f.eval_finite(x, "drift")?;
        worst = worst.max((lhs - rhs).norm());
    }
    Ok(worst)
}

/// Consistency of the assembled gradient `[beta; rho]` with a
/// finite-difference gradient of the energy, relative to the gradient
/// scale. Checks the integrability of the construction.
pub fn gradient_consistency(
    energy: &ShapedEnergy,
    z_grid: &SampleGrid,
    cfg: &StepConfig,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for z in z_grid.iter() {
        let assembled = stack(&energy.beta.eval(z)?, &energy.rho.eval(z)?);
        let fd = numerics::gradient(&energy.h_bar, z, cfg)?;
        let rel = (fd - &assembled).amax() / (1.0 + assembled.amax());
        worst = worst.max(rel);
    }
    Ok(worst)
}
