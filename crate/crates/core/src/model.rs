//! Plant and target-structure representations, the characteristic change of
//! coordinates, sampled state grids, and structural validation.
//!
//! Universally quantified conditions ("for all x in the domain") are checked
//! on a deterministic Latin-hypercube sample plus the equilibrium; reports say
//! so rather than claiming proof.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::{stack, Mat, MatrixField, State, VectorField};
use crate::numerics::{self, StepConfig};
use crate::report::KvReport;

/// Axis-aligned box domain; simply connected by construction.
#[derive(Debug, Clone)]
pub struct DomainBox {
    lower: State,
    upper: State,
}

impl DomainBox {
    pub fn new(lower: State, upper: State) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::contract("domain bounds have mismatched dimensions"));
        }
        for i in 0..lower.len() {
            if !(lower[i].is_finite() && upper[i].is_finite() && lower[i] < upper[i]) {
                return Err(Error::contract(format!(
                    "domain bound {i} invalid: [{}, {}]",
                    lower[i], upper[i]
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &State {
        &self.lower
    }

    pub fn upper(&self) -> &State {
        &self.upper
    }

    pub fn contains(&self, x: &State) -> bool {
        self.contains_with_slack(x, 0.0)
    }

    /// Membership with a relative slack per coordinate, used when probing
    /// points produced by roundoff-prone maps.
    pub fn contains_with_slack(&self, x: &State, rel: f64) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        (0..self.dim()).all(|i| {
            let pad = rel * (self.upper[i] - self.lower[i]);
            x[i].is_finite() && x[i] >= self.lower[i] - pad && x[i] <= self.upper[i] + pad
        })
    }
}

/// Points at which sampled verifications run. Always contains the
/// equilibrium when built through [`SampleGrid::latin_hypercube`].
#[derive(Debug, Clone)]
pub struct SampleGrid {
    pub points: Vec<State>,
}

impl SampleGrid {
    /// Deterministic Latin-hypercube sample of `count` points, plus `x_star`.
    pub fn latin_hypercube(domain: &DomainBox, count: usize, seed: u64, x_star: &State) -> Result<Self> {
        if count == 0 {
            return Err(Error::contract("sample grid needs at least one point"));
        }
        if !domain.contains(x_star) {
            return Err(Error::contract("x_star lies outside the domain box"));
        }
        let n = domain.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut strata: Vec<Vec<usize>> = Vec::with_capacity(n);
        for _ in 0..n {
            let mut order: Vec<usize> = (0..count).collect();
            order.shuffle(&mut rng);
            strata.push(order);
        }
        let mut points = Vec::with_capacity(count + 1);
        for k in 0..count {
            let mut p = State::zeros(n);
            for i in 0..n {
                let width = (domain.upper()[i] - domain.lower()[i]) / count as f64;
                let offset: f64 = rng.random();
                p[i] = domain.lower()[i] + (strata[i][k] as f64 + offset) * width;
            }
            points.push(p);
        }
        points.push(x_star.clone());
        Ok(Self { points })
    }

    pub fn from_points(points: Vec<State>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::contract("sample grid needs at least one point"));
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, State> {
        self.points.iter()
    }

    /// Maps every point through `map`, yielding a grid in the new coordinates.
    pub fn map(&self, map: impl Fn(&State) -> Result<State>) -> Result<Self> {
        let points = self
            .points
            .iter()
            .map(|p| map(p))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { points })
    }
}

/// Residual tolerances for every sampled check in the toolkit.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    /// `G_perp * G = 0`.
    pub annihilation: f64,
    /// Assignable-equilibrium residual `|G_perp(x*) f(x*)|`.
    pub equilibrium: f64,
    /// `lambda_max(F_d + F_d^T) <= 0`.
    pub dissipation: f64,
    /// Coordinate-change round trip.
    pub inverse: f64,
    /// Characteristic-coordinate residual `|G_perp F_d grad(xi)|`.
    pub characteristic: f64,
    /// Jacobian-symmetry residual in the gradient-field test.
    pub gradient_field_symmetry: f64,
    /// Deviation of `G_perp F_d` from its equilibrium value.
    pub constant_coefficient: f64,
    /// Antisymmetrized Lie-derivative residual of the forcing terms.
    pub forcing_lie: f64,
    /// First-derivative PDE residuals on candidate gain maps.
    pub pde: f64,
    /// Second-derivative PDE residual (finite differences are noisier here).
    pub pde_second: f64,
    /// Matching-equation residual of the constructed energy.
    pub matching: f64,
    /// Agreement of assembled and finite-difference energy gradients.
    pub gradient: f64,
    /// Allowed per-step energy increase during simulation audits.
    pub lyapunov: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            annihilation: 1e-9,
            equilibrium: 1e-9,
            dissipation: 1e-9,
            inverse: 1e-12,
            characteristic: 1e-9,
            gradient_field_symmetry: 1e-7,
            constant_coefficient: 1e-9,
            forcing_lie: 1e-9,
            pde: 1e-6,
            pde_second: 1e-4,
            matching: 1e-7,
            gradient: 1e-6,
            lyapunov: 1e-9,
        }
    }
}

/// Control-affine plant `x_dot = f(x) + G(x) u` on a box domain, with the
/// desired equilibrium stored in the same coordinates as the fields.
#[derive(Debug, Clone)]
pub struct AffineSystem {
    pub n: usize,
    pub m: usize,
    pub f: VectorField,
    pub g: MatrixField,
    pub domain: DomainBox,
    pub x_star: State,
}

impl AffineSystem {
    pub fn new(f: VectorField, g: MatrixField, domain: DomainBox, x_star: State) -> Result<Self> {
        let n = domain.dim();
        if x_star.len() != n {
            return Err(Error::contract("x_star dimension does not match the domain"));
        }
        if !domain.contains(&x_star) {
            return Err(Error::contract("x_star lies outside the domain box"));
        }
        let f0 = f.eval_finite(&x_star, "drift f")?;
        if f0.len() != n {
            return Err(Error::contract(format!(
                "drift returns dimension {}, expected {n}",
                f0.len()
            )));
        }
        let g0 = g.eval(&x_star)?;
        if g0.nrows() != n {
            return Err(Error::contract(format!(
                "input matrix has {} rows, expected {n}",
                g0.nrows()
            )));
        }
        let m = g0.ncols();
        if m == 0 || m >= n {
            return Err(Error::contract(format!(
                "input dimension must satisfy 0 < m < n, got m = {m}, n = {n}"
            )));
        }
        Ok(Self {
            n,
            m,
            f,
            g,
            domain,
            x_star,
        })
    }
}

/// Desired closed-loop structure: `F_d = J_d - R_d` and a full-rank left
/// annihilator of the input matrix.
#[derive(Debug, Clone)]
pub struct TargetStructure {
    pub f_d: MatrixField,
    pub g_perp: MatrixField,
}

impl TargetStructure {
    pub fn new(f_d: MatrixField, g_perp: MatrixField) -> Self {
        Self { f_d, g_perp }
    }

    pub fn constant(f_d: Mat, g_perp: Mat) -> Self {
        Self {
            f_d: MatrixField::constant(f_d),
            g_perp: MatrixField::constant(g_perp),
        }
    }

    /// `W(x) = G_perp(x) F_d(x)`, the coefficient of the matching equation.
    pub fn coefficient(&self, x: &State) -> Result<Mat> {
        Ok(self.g_perp.eval(x)? * self.f_d.eval(x)?)
    }

    /// Row `i` of `W` as a vector field (a spanning field of the
    /// matching-equation distribution).
    pub fn spanning_field(&self, i: usize) -> VectorField {
        let f_d = self.f_d.clone();
        let g_perp = self.g_perp.clone();
        VectorField::new(move |x| {
            let w = g_perp.eval(x)? * f_d.eval(x)?;
            if i >= w.nrows() {
                return Err(Error::contract(format!(
                    "spanning field index {i} out of range for {} rows",
                    w.nrows()
                )));
            }
            Ok(w.row(i).transpose())
        })
    }
}

/// Result of a Newton inversion.
#[derive(Debug, Clone)]
pub struct NewtonResult {
    pub x: State,
    pub iterations: usize,
    pub residual: f64,
}

/// Solves `tau(x) = z` by damped-free Newton iteration from `x_guess`.
pub fn newton_inverse(
    tau: &VectorField,
    z: &State,
    x_guess: &State,
    cfg: &StepConfig,
    tol: f64,
) -> Result<NewtonResult> {
    const MAX_ITER: usize = 50;
    let mut x = x_guess.clone();
    let mut trace: Vec<f64> = Vec::new();
    for iter in 0..=MAX_ITER {
        let r = tau.eval_finite(&x, "forward map")? - z;
        let rnorm = r.norm();
        trace.push(rnorm);
        if rnorm <= tol {
            return Ok(NewtonResult {
                x,
                iterations: iter,
                residual: rnorm,
            });
        }
        if iter == MAX_ITER {
            break;
        }
        let j = numerics::jacobian(tau, &x, cfg)?;
        let lu = j.clone().lu();
        let delta = lu.solve(&r).ok_or_else(|| {
            Error::numerical(format!(
                "newton_inverse: singular Jacobian at iteration {iter}; residual trace {trace:?}"
            ))
        })?;
        x -= delta;
    }
    Err(Error::numerical(format!(
        "newton_inverse: no convergence after {MAX_ITER} iterations; residual trace {trace:?}"
    )))
}

/// Characteristic change of coordinates `z = tau(x) = [xi(x); eta(x)]`.
#[derive(Debug, Clone)]
pub struct CoordinateChange {
    pub n: usize,
    pub m: usize,
    pub xi: VectorField,
    pub eta: VectorField,
    pub inverse: VectorField,
    pub z_star: State,
    jacobian: Option<MatrixField>,
}

impl CoordinateChange {
    /// General constructor; pass `jacobian` when the forward Jacobian is
    /// known in closed form (it is reused heavily downstream).
    pub fn new(
        m: usize,
        xi: VectorField,
        eta: VectorField,
        inverse: VectorField,
        x_star: &State,
        jacobian: Option<MatrixField>,
    ) -> Result<Self> {
        let n = x_star.len();
        let xi0 = xi.eval_finite(x_star, "xi")?;
        let eta0 = eta.eval_finite(x_star, "eta")?;
        if xi0.len() != m || eta0.len() != n - m {
            return Err(Error::contract(format!(
                "coordinate blocks have dimensions {} and {}, expected {m} and {}",
                xi0.len(),
                eta0.len(),
                n - m
            )));
        }
        let z_star = stack(&xi0, &eta0);
        Ok(Self {
            n,
            m,
            xi,
            eta,
            inverse,
            z_star,
            jacobian,
        })
    }

    /// Linear change of coordinates `z = T x` with exact inverse.
    pub fn linear(t: &Mat, m: usize, x_star: &State) -> Result<Self> {
        let n = x_star.len();
        if t.nrows() != n || t.ncols() != n {
            return Err(Error::contract("linear coordinate matrix must be n x n"));
        }
        let t_inv = t.clone().try_inverse().ok_or_else(|| {
            let sv = t.clone().singular_values();
            let smax = sv.iter().cloned().fold(0.0f64, f64::max);
            let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
            Error::singular(
                "linear coordinate change",
                if smin > 0.0 { smax / smin } else { f64::INFINITY },
            )
        })?;
        let t_xi = t.rows(0, m).into_owned();
        let t_eta = t.rows(m, n - m).into_owned();
        let xi = VectorField::from_fn(move |x| &t_xi * x);
        let t_eta2 = t_eta;
        let eta = VectorField::from_fn(move |x| &t_eta2 * x);
        let inverse = VectorField::from_fn(move |z| &t_inv * z);
        let jac = MatrixField::constant(t.clone());
        Self::new(m, xi, eta, inverse, x_star, Some(jac))
    }

    /// Builds the inverse by Newton iteration on the forward map, seeded at
    /// the equilibrium. Suitable when no closed-form inverse is available.
    pub fn with_newton_inverse(
        m: usize,
        xi: VectorField,
        eta: VectorField,
        x_star: &State,
        cfg: StepConfig,
        tol: f64,
    ) -> Result<Self> {
        let forward = forward_field(&xi, &eta);
        let seed = x_star.clone();
        let inverse = VectorField::new(move |z| {
            Ok(newton_inverse(&forward, z, &seed, &cfg, tol)?.x)
        });
        Self::new(m, xi, eta, inverse, x_star, None)
    }

    pub fn forward(&self, x: &State) -> Result<State> {
        let xi = self.xi.eval_finite(x, "xi")?;
        let eta = self.eta.eval_finite(x, "eta")?;
        Ok(stack(&xi, &eta))
    }

    pub fn forward_field(&self) -> VectorField {
        forward_field(&self.xi, &self.eta)
    }

    /// Forward Jacobian `d tau / d x`: analytic when supplied, otherwise
    /// finite differences.
    pub fn jacobian_at(&self, x: &State, cfg: &StepConfig) -> Result<Mat> {
        match &self.jacobian {
            Some(j) => j.eval(x),
            None => numerics::jacobian(&self.forward_field(), x, cfg),
        }
    }

    /// Worst round-trip error `max |inverse(tau(x)) - x|` over a grid.
    pub fn round_trip_residual(&self, grid: &SampleGrid) -> Result<f64> {
        let mut worst = 0.0f64;
        for x in grid.iter() {
            let z = self.forward(x)?;
            let back = self.inverse.eval_finite(&z, "inverse")?;
            worst = worst.max((back - x).amax());
        }
        Ok(worst)
    }
}

fn forward_field(xi: &VectorField, eta: &VectorField) -> VectorField {
    let xi = xi.clone();
    let eta = eta.clone();
    VectorField::new(move |x| {
        let a = xi.eval(x)?;
        let b = eta.eval(x)?;
        Ok(stack(&a, &b))
    })
}

/// One structural condition with its worst-case residual over the grid.
#[derive(Debug, Clone)]
pub struct ConditionCheck {
    pub name: &'static str,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Outcome of [`validate_system`]: per-condition residuals, never an error.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub checks: Vec<ConditionCheck>,
    /// Extremal eigenvalues of `F_d + F_d^T` over the grid (min, max).
    pub dissipation_extrema: (f64, f64),
    pub grid_size: usize,
    pub pass: bool,
}

impl ValidationReport {
    pub fn kv(&self) -> KvReport {
        let mut r = KvReport::new();
        r.note(format!(
            "Structural validation over {} sampled points: {}.",
            self.grid_size,
            if self.pass { "pass" } else { "FAIL" }
        ));
        for c in &self.checks {
            if !c.pass {
                r.note(format!(
                    "  condition '{}' failed: residual {:.3e} exceeds tolerance {:.3e}",
                    c.name, c.residual, c.tolerance
                ));
            }
        }
        for c in &self.checks {
            r.push_f64(format!("validate.{}.residual", c.name), c.residual);
            r.push_f64(format!("validate.{}.tolerance", c.name), c.tolerance);
            r.push_bool(format!("validate.{}.pass", c.name), c.pass);
        }
        r.push_f64("validate.dissipation.lambda_min", self.dissipation_extrema.0);
        r.push_f64("validate.dissipation.lambda_max", self.dissipation_extrema.1);
        r.push("validate.grid_size", self.grid_size);
        r.push_bool("validate.pass", self.pass);
        r
    }

    pub fn failed_conditions(&self) -> Vec<&'static str> {
        self.checks.iter().filter(|c| !c.pass).map(|c| c.name).collect()
    }
}

/// Checks the structural preconditions on a sampled grid: full input rank,
/// annihilation, dissipativity of the target structure, and that the
/// equilibrium is assignable. Failures are report entries, not errors.
pub fn validate_system(
    sys: &AffineSystem,
    tgt: &TargetStructure,
    grid: &SampleGrid,
    tol: &Tolerances,
) -> Result<ValidationReport> {
    if grid.is_empty() {
        return Err(Error::contract("validation grid is empty"));
    }
    let mut rank_defect = 0usize;
    let mut ann = 0.0f64;
    let mut diss_min = f64::INFINITY;
    let mut diss_max = f64::NEG_INFINITY;
    for x in grid.iter() {
        let g = sys.g.eval(x)?;
        rank_defect = rank_defect.max(sys.m.saturating_sub(numerics::numerical_rank(&g)));
        let gp = tgt.g_perp.eval(x)?;
        ann = ann.max((&gp * &g).amax());
        let fd = tgt.f_d.eval(x)?;
        let (lo, hi) = numerics::sym_eig_extrema(&(&fd + fd.transpose()))?;
        diss_min = diss_min.min(lo);
        diss_max = diss_max.max(hi);
    }
    let eq_res = (tgt.g_perp.eval(&sys.x_star)? * sys.f.eval_finite(&sys.x_star, "drift f")?).norm();

    let checks = vec![
        ConditionCheck {
            name: "rank_g_defect",
            residual: rank_defect as f64,
            tolerance: 0.0,
            pass: rank_defect == 0,
        },
        ConditionCheck {
            name: "annihilation",
            residual: ann,
            tolerance: tol.annihilation,
            pass: ann <= tol.annihilation,
        },
        ConditionCheck {
            name: "dissipation",
            residual: diss_max,
            tolerance: tol.dissipation,
            pass: diss_max <= tol.dissipation,
        },
        ConditionCheck {
            name: "equilibrium",
            residual: eq_res,
            tolerance: tol.equilibrium,
            pass: eq_res <= tol.equilibrium,
        },
    ];
    let pass = checks.iter().all(|c| c.pass);
    Ok(ValidationReport {
        checks,
        dissipation_extrema: (diss_min, diss_max),
        grid_size: grid.len(),
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maglev;
    use crate::numerics::pseudo_inverse;
    use approx::assert_abs_diff_eq;

    fn maglev_setup() -> (AffineSystem, TargetStructure, SampleGrid) {
        let params = maglev::MaglevParams::default();
        let gains = maglev::MaglevGains::default();
        let bundle = maglev::build(&params, &gains).unwrap();
        let grid =
            SampleGrid::latin_hypercube(&bundle.system.domain, 64, 7, &bundle.system.x_star)
                .unwrap();
        (bundle.system, bundle.target, grid)
    }

    #[test]
    fn maglev_validation_passes_with_expected_extrema() {
        let (sys, tgt, grid) = maglev_setup();
        let report = validate_system(&sys, &tgt, &grid, &Tolerances::default()).unwrap();
        assert!(report.pass, "failed: {:?}", report.failed_conditions());
        assert_abs_diff_eq!(report.dissipation_extrema.0, -4.0, epsilon = 1e-9);
        assert_abs_diff_eq!(report.dissipation_extrema.1, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn positive_v12_fails_dissipation() {
        let (sys, _, grid) = maglev_setup();
        let gains = maglev::MaglevGains::unchecked(-2.0, -2.0, 2.0, 2.0, 400.0, 20.0);
        let tgt = TargetStructure::constant(maglev::f_d_matrix(&gains), maglev::g_perp_matrix());
        let report = validate_system(&sys, &tgt, &grid, &Tolerances::default()).unwrap();
        assert!(!report.pass);
        assert_eq!(report.failed_conditions(), vec!["dissipation"]);
        assert_abs_diff_eq!(report.dissipation_extrema.1, 4.0, epsilon = 1e-9);
    }

    #[test]
    fn equilibrium_residual_is_exactly_zero() {
        let (sys, tgt, _) = maglev_setup();
        let grid = SampleGrid::from_points(vec![sys.x_star.clone()]).unwrap();
        let report = validate_system(&sys, &tgt, &grid, &Tolerances::default()).unwrap();
        let eq = report.checks.iter().find(|c| c.name == "equilibrium").unwrap();
        assert_eq!(eq.residual, 0.0);
    }

    #[test]
    fn annihilator_and_pseudoinverse_identities_on_grid() {
        let (sys, tgt, grid) = maglev_setup();
        for x in grid.iter() {
            let g = sys.g.eval(x).unwrap();
            let gp = tgt.g_perp.eval(x).unwrap();
            assert!((&gp * &g).amax() < 1e-9);
            let gi = pseudo_inverse(&g).unwrap();
            assert!((gi * g - Mat::identity(sys.m, sys.m)).amax() < 1e-9);
        }
    }

    #[test]
    fn validation_is_deterministic() {
        let (sys, tgt, grid) = maglev_setup();
        let a = validate_system(&sys, &tgt, &grid, &Tolerances::default()).unwrap();
        let b = validate_system(&sys, &tgt, &grid, &Tolerances::default()).unwrap();
        for (ca, cb) in a.checks.iter().zip(b.checks.iter()) {
            assert_eq!(ca.residual.to_bits(), cb.residual.to_bits());
        }
    }

    #[test]
    fn grid_is_deterministic_and_contains_x_star() {
        let (sys, _, _) = maglev_setup();
        let a = SampleGrid::latin_hypercube(&sys.domain, 32, 5, &sys.x_star).unwrap();
        let b = SampleGrid::latin_hypercube(&sys.domain, 32, 5, &sys.x_star).unwrap();
        assert_eq!(a.len(), 33);
        for (pa, pb) in a.iter().zip(b.iter()) {
            assert_eq!(pa, pb);
        }
        assert!(a.iter().all(|p| sys.domain.contains(p)));
        assert_eq!(a.points.last().unwrap(), &sys.x_star);
    }

    #[test]
    fn newton_on_linear_map_converges_in_one_iteration() {
        let t = Mat::from_row_slice(2, 2, &[2.0, 1.0, 0.0, -1.0]);
        let t2 = t.clone();
        let tau = VectorField::from_fn(move |x| &t2 * x);
        let z = State::from_vec(vec![3.0, -1.0]);
        let res = newton_inverse(&tau, &z, &State::zeros(2), &StepConfig::default(), 1e-12).unwrap();
        assert_eq!(res.iterations, 1);
        assert!((t * &res.x - z).norm() < 1e-12);
    }

    #[test]
    fn newton_on_identity_returns_target() {
        let tau = VectorField::from_fn(|x| x.clone());
        let z = State::from_vec(vec![0.25, -7.0]);
        let res = newton_inverse(&tau, &z, &State::zeros(2), &StepConfig::default(), 1e-12).unwrap();
        assert_abs_diff_eq!(res.x, z, epsilon = 1e-12);
    }

    #[test]
    fn newton_matches_bisection_on_cubic() {
        // tau(x) = (x1^3 + x1, x2); solve tau(x) = (2, 5).
        let tau = VectorField::from_fn(|x| State::from_vec(vec![x[0].powi(3) + x[0], x[1]]));
        let z = State::from_vec(vec![2.0, 5.0]);
        let res =
            newton_inverse(&tau, &z, &State::from_vec(vec![0.5, 0.0]), &StepConfig::default(), 1e-12)
                .unwrap();

        // Independent oracle: bisect x^3 + x - 2 on [0, 2].
        let (mut lo, mut hi) = (0.0f64, 2.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid.powi(3) + mid - 2.0 > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let root = 0.5 * (lo + hi);
        assert_abs_diff_eq!(res.x[0], root, epsilon = 1e-10);
        assert_abs_diff_eq!(res.x[1], 5.0, epsilon = 1e-12);
    }

    #[test]
    fn newton_reports_trace_on_failure() {
        // tau has a root of multiplicity issues around x = 0 and never hits z.
        let tau = VectorField::from_fn(|x| State::from_vec(vec![x[0].powi(2)]));
        let z = State::from_vec(vec![-1.0]);
        let err = newton_inverse(
            &tau,
            &z,
            &State::from_vec(vec![1.0]),
            &StepConfig::default(),
            1e-12,
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("residual trace"), "{msg}");
    }

    #[test]
    fn round_trip_on_maglev_grid() {
        let params = maglev::MaglevParams::default();
        let gains = maglev::MaglevGains::default();
        let bundle = maglev::build(&params, &gains).unwrap();
        let grid =
            SampleGrid::latin_hypercube(&bundle.system.domain, 64, 11, &bundle.system.x_star)
                .unwrap();
        let res = bundle.coords.round_trip_residual(&grid).unwrap();
        assert!(res < 1e-12, "round trip residual {res}");
    }

    #[test]
    fn newton_based_coordinate_round_trip() {
        // Mildly nonlinear forward map, inverse built by Newton iteration.
        let xi = VectorField::from_fn(|x| State::from_vec(vec![x[0] + 0.1 * x[1] * x[1]]));
        let eta = VectorField::from_fn(|x| State::from_vec(vec![x[1]]));
        let x_star = State::zeros(2);
        let coords = CoordinateChange::with_newton_inverse(
            1,
            xi,
            eta,
            &x_star,
            StepConfig::default(),
            1e-12,
        )
        .unwrap();
        let domain = DomainBox::new(
            State::from_vec(vec![-1.0, -1.0]),
            State::from_vec(vec![1.0, 1.0]),
        )
        .unwrap();
        let grid = SampleGrid::latin_hypercube(&domain, 16, 3, &x_star).unwrap();
        let res = coords.round_trip_residual(&grid).unwrap();
        assert!(res < 1e-10, "round trip residual {res}");
    }
}
