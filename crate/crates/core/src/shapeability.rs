//! Numerical shapeability tests: involutivity of the matching-equation
//! distribution, verification of characteristic coordinates, and the three
//! sufficient-condition routes (gradient fields, single unactuated
//! direction, constant coefficient).
//!
//! Every test here is sampled: results are reported as "consistent with"
//! the property on the grid, never as proof.

use crate::error::{Error, Result};
use crate::field::{Mat, State, VectorField};
use crate::model::{AffineSystem, CoordinateChange, SampleGrid, TargetStructure, Tolerances};
use crate::numerics::{self, StepConfig};
use crate::report::KvReport;

/// Per-point distribution ranks before and after adjoining Lie brackets.
#[derive(Debug, Clone)]
pub struct InvolutivityResult {
    /// `(rank span{w_i}, rank span{w_i} + brackets)` per grid point.
    pub per_point: Vec<(usize, usize)>,
    /// Largest bracket norm seen anywhere on the grid.
    pub max_bracket_norm: f64,
    /// Ranks agree at `n - m` on every point.
    pub involutive_on_grid: bool,
    /// The distribution kept rank `n - m` everywhere (no regularity drop).
    pub regular: bool,
}

/// Rank/involutivity scan of the distribution spanned by the rows of
/// `G_perp F_d`.
pub fn involutivity_check(
    tgt: &TargetStructure,
    grid: &SampleGrid,
    cfg: &StepConfig,
) -> Result<InvolutivityResult> {
    let first = grid
        .iter()
        .next()
        .ok_or_else(|| Error::contract("involutivity check needs a nonempty grid"))?;
    let w0 = tgt.coefficient(first)?;
    let (rows, n) = (w0.nrows(), w0.ncols());
    let fields: Vec<VectorField> = (0..rows).map(|i| tgt.spanning_field(i)).collect();

    let mut per_point = Vec::with_capacity(grid.len());
    let mut max_bracket_norm = 0.0f64;
    let mut involutive = true;
    let mut regular = true;
    for x in grid.iter() {
        let mut span = Mat::zeros(n, rows);
        for (i, wf) in fields.iter().enumerate() {
            span.set_column(i, &wf.eval_finite(x, "spanning field")?);
        }
        let base_rank = numerics::numerical_rank(&span);
        if base_rank < rows {
            regular = false;
        }
        let mut brackets: Vec<State> = Vec::new();
        for i in 0..rows {
            for j in (i + 1)..rows {
                let b = numerics::lie_bracket(&fields[i], &fields[j], x, cfg)?;
                max_bracket_norm = max_bracket_norm.max(b.norm());
                brackets.push(b);
            }
        }
        let mut extended = Mat::zeros(n, rows + brackets.len());
        extended.columns_mut(0, rows).copy_from(&span);
        for (k, b) in brackets.iter().enumerate() {
            extended.set_column(rows + k, b);
        }
        let ext_rank = numerics::numerical_rank(&extended);
        if !(base_rank == ext_rank && base_rank == rows) {
            involutive = false;
        }
        per_point.push((base_rank, ext_rank));
    }
    Ok(InvolutivityResult {
        per_point,
        max_bracket_norm,
        involutive_on_grid: involutive,
        regular,
    })
}

/// Residuals of candidate characteristic coordinates.
#[derive(Debug, Clone)]
pub struct CharacteristicResult {
    /// Worst `|W grad(xi_i)|` per coordinate over the grid.
    pub per_coordinate: Vec<f64>,
    /// Worst residual over all coordinates.
    pub residual: f64,
    /// Smallest rank of the stacked gradients over the grid.
    pub independence_rank: usize,
    /// Stacked gradients have full rank `m` everywhere.
    pub independent: bool,
}

/// Checks that `xi` solves the homogeneous matching PDE on the grid and that
/// its component gradients stay independent.
pub fn check_characteristic(
    tgt: &TargetStructure,
    xi: &VectorField,
    m: usize,
    grid: &SampleGrid,
    cfg: &StepConfig,
) -> Result<CharacteristicResult> {
    let mut per_coordinate = vec![0.0f64; m];
    let mut min_rank = usize::MAX;
    for x in grid.iter() {
        let grads = numerics::jacobian(xi, x, cfg)?; // m x n
        if grads.nrows() != m {
            return Err(Error::contract(format!(
                "characteristic candidate returns {} components, expected {m}",
                grads.nrows()
            )));
        }
        let w = tgt.coefficient(x)?;
        for i in 0..m {
            let gi = grads.row(i).transpose();
            per_coordinate[i] = per_coordinate[i].max((&w * gi).norm());
        }
        min_rank = min_rank.min(numerics::numerical_rank(&grads));
    }
    let residual = per_coordinate.iter().cloned().fold(0.0f64, f64::max);
    Ok(CharacteristicResult {
        per_coordinate,
        residual,
        independence_rank: min_rank,
        independent: min_rank == m,
    })
}

/// Gradient-field route: worst asymmetry of the Jacobian of
/// `x -> F_d(x)^-1 g_i(x)` over grid points and input columns.
pub fn check_theorem3(
    sys: &AffineSystem,
    tgt: &TargetStructure,
    grid: &SampleGrid,
    cfg: &StepConfig,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for i in 0..sys.m {
        let f_d = tgt.f_d.clone();
        let g = sys.g.clone();
        let field = VectorField::new(move |x| {
            let fd = f_d.eval(x)?;
            let gi = g.eval(x)?.column(i).into_owned();
            let lu = fd.clone().lu();
            lu.solve(&gi).ok_or_else(|| {
                let sv = fd.singular_values();
                let smax = sv.iter().cloned().fold(0.0f64, f64::max);
                let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
                Error::singular(
                    format!("F_d at sample point {x:?}"),
                    if smin > 0.0 { smax / smin } else { f64::INFINITY },
                )
            })
        });
        for x in grid.iter() {
            let j = numerics::jacobian(&field, x, cfg).map_err(|e| match e {
                // Surface the singularity, not the probe wrapper around it.
                Error::Numerical(msg) if msg.contains("singular matrix") => Error::numerical(msg),
                other => other,
            })?;
            worst = worst.max((&j - j.transpose()).amax());
        }
    }
    Ok(worst)
}

/// Constant-coefficient route residuals.
#[derive(Debug, Clone)]
pub struct ConstantCoefficientResult {
    /// Worst entrywise deviation of `W(x)` from `W(x*)`.
    pub const_residual: f64,
    /// Worst antisymmetrized Lie derivative `|L_wi s_j - L_wj s_i|`.
    pub lie_residual: f64,
    /// `W(x*)` has rank `n - m`.
    pub full_rank: bool,
}

/// Checks the constant-coefficient sufficient condition: `W = G_perp F_d`
/// constant with full rank, and compatibility of the forcing terms
/// `s = G_perp f` under the spanning fields.
pub fn check_theorem5(
    sys: &AffineSystem,
    tgt: &TargetStructure,
    grid: &SampleGrid,
    cfg: &StepConfig,
) -> Result<ConstantCoefficientResult> {
    let w_star = tgt.coefficient(&sys.x_star)?;
    let rows = w_star.nrows();
    let full_rank = numerics::numerical_rank(&w_star) == rows;

    let mut const_residual = 0.0f64;
    for x in grid.iter() {
        const_residual = const_residual.max((tgt.coefficient(x)? - &w_star).amax());
    }

    let f = sys.f.clone();
    let g_perp = tgt.g_perp.clone();
    let s = VectorField::new(move |x| Ok(g_perp.eval(x)? * f.eval(x)?));
    let w_fields: Vec<VectorField> = (0..rows).map(|i| tgt.spanning_field(i)).collect();

    let mut lie_residual = 0.0f64;
    for x in grid.iter() {
        let grad_s = numerics::jacobian(&s, x, cfg)?; // (n-m) x n
        let w_at: Vec<State> = w_fields
            .iter()
            .map(|wf| wf.eval_finite(x, "spanning field"))
            .collect::<Result<_>>()?;
        for i in 0..rows {
            for j in (i + 1)..rows {
                let lhs = grad_s.row(j).transpose().dot(&w_at[i]);
                let rhs = grad_s.row(i).transpose().dot(&w_at[j]);
                lie_residual = lie_residual.max((lhs - rhs).abs());
            }
        }
    }
    Ok(ConstantCoefficientResult {
        const_residual,
        lie_residual,
        full_rank,
    })
}

/// Overall shapeability verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// Consistent with maximum energy shapeability on the sampled grid.
    Pass,
    /// Some required residual exceeded its tolerance.
    Fail,
    /// The distribution dropped rank on the grid; the sampled tests cannot
    /// distinguish the regular cases, so no verdict is issued.
    AbortedIrregular,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Pass => write!(f, "pass"),
            Verdict::Fail => write!(f, "fail"),
            Verdict::AbortedIrregular => write!(f, "aborted-irregular"),
        }
    }
}

/// Aggregate of all shapeability checks.
#[derive(Debug, Clone)]
pub struct ShapeabilityReport {
    pub involutivity: InvolutivityResult,
    pub characteristic: CharacteristicResult,
    pub gradient_route_residual: Option<f64>,
    pub gradient_route_error: Option<String>,
    pub gradient_route_pass: bool,
    pub single_direction_applicable: bool,
    pub single_direction_pass: bool,
    pub constant_route: ConstantCoefficientResult,
    pub constant_route_pass: bool,
    pub verdict: Verdict,
}

impl ShapeabilityReport {
    pub fn kv(&self) -> KvReport {
        let mut r = KvReport::new();
        r.note(format!(
            "Shapeability assessment: {} (sampled verification, {} grid points).",
            self.verdict,
            self.involutivity.per_point.len()
        ));
        if self.involutivity.involutive_on_grid {
            r.note("Distribution ranks are consistent with an involutive distribution on the grid.".to_string());
        }
        let mut routes = Vec::new();
        if self.gradient_route_pass {
            routes.push("gradient-fields");
        }
        if self.single_direction_pass {
            routes.push("single-unactuated-direction");
        }
        if self.constant_route_pass {
            routes.push("constant-coefficient");
        }
        if routes.is_empty() {
            r.note("No solvability route passed.".to_string());
        } else {
            r.note(format!("Solvability route(s) passing: {}.", routes.join(", ")));
        }
        if let Some(err) = &self.gradient_route_error {
            r.note(format!("gradient-fields route not evaluable: {err}"));
        }
        r.push_bool("shapeability.involutive_on_grid", self.involutivity.involutive_on_grid);
        r.push_bool("shapeability.regular", self.involutivity.regular);
        r.push_f64("shapeability.max_bracket_norm", self.involutivity.max_bracket_norm);
        r.push_f64("shapeability.characteristic_residual", self.characteristic.residual);
        r.push("shapeability.independence_rank", self.characteristic.independence_rank);
        r.push_bool("shapeability.independent", self.characteristic.independent);
        match self.gradient_route_residual {
            Some(v) => r.push_f64("shapeability.thm3_residual", v),
            None => r.push("shapeability.thm3_residual", "unavailable"),
        }
        r.push_bool("shapeability.thm3_pass", self.gradient_route_pass);
        r.push_bool("shapeability.thm4_applicable", self.single_direction_applicable);
        r.push_bool("shapeability.thm4_pass", self.single_direction_pass);
        r.push_f64("shapeability.thm5_const_residual", self.constant_route.const_residual);
        r.push_f64("shapeability.thm5_lie_residual", self.constant_route.lie_residual);
        r.push_bool("shapeability.thm5_full_rank", self.constant_route.full_rank);
        r.push_bool("shapeability.thm5_pass", self.constant_route_pass);
        r.push("shapeability.verdict", self.verdict);
        r
    }
}

/// Runs every check and combines them: the verdict passes when the supplied
/// characteristic coordinates verify (small residual, independent gradients)
/// and at least one solvability route holds.
pub fn assess(
    sys: &AffineSystem,
    tgt: &TargetStructure,
    coords: &CoordinateChange,
    grid: &SampleGrid,
    tol: &Tolerances,
    cfg: &StepConfig,
) -> Result<ShapeabilityReport> {
    let involutivity = involutivity_check(tgt, grid, cfg)?;
    let characteristic = check_characteristic(tgt, &coords.xi, sys.m, grid, cfg)?;

    let (gradient_route_residual, gradient_route_error) = match check_theorem3(sys, tgt, grid, cfg)
    {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let gradient_route_pass =
        gradient_route_residual.is_some_and(|v| v <= tol.gradient_field_symmetry);

    let single_direction_applicable = sys.m == sys.n - 1;
    let single_direction_pass = if single_direction_applicable {
        let mut nonvanishing = true;
        for x in grid.iter() {
            let w = tgt.coefficient(x)?;
            if numerics::numerical_rank(&w) < 1 {
                nonvanishing = false;
                break;
            }
        }
        nonvanishing
    } else {
        false
    };

    let constant_route = check_theorem5(sys, tgt, grid, cfg)?;
    let constant_route_pass = constant_route.full_rank
        && constant_route.const_residual <= tol.constant_coefficient
        && constant_route.lie_residual <= tol.forcing_lie;

    let verdict = if !involutivity.regular {
        Verdict::AbortedIrregular
    } else {
        let coords_ok =
            characteristic.residual <= tol.characteristic && characteristic.independent;
        let any_route = gradient_route_pass || single_direction_pass || constant_route_pass;
        if coords_ok && any_route {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    };

    Ok(ShapeabilityReport {
        involutivity,
        characteristic,
        gradient_route_residual,
        gradient_route_error,
        gradient_route_pass,
        single_direction_applicable,
        single_direction_pass,
        constant_route,
        constant_route_pass,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::MatrixField;
    use crate::maglev;
    use crate::model::DomainBox;
    use approx::assert_abs_diff_eq;

    fn maglev_fixture() -> (AffineSystem, TargetStructure, CoordinateChange, SampleGrid) {
        let bundle = maglev::build(&maglev::MaglevParams::default(), &maglev::MaglevGains::default())
            .unwrap();
        let grid =
            SampleGrid::latin_hypercube(&bundle.system.domain, 64, 13, &bundle.system.x_star)
                .unwrap();
        (bundle.system, bundle.target, bundle.coords, grid)
    }

    #[test]
    fn maglev_distribution_is_involutive_with_zero_brackets() {
        let (_, tgt, _, grid) = maglev_fixture();
        let res = involutivity_check(&tgt, &grid, &StepConfig::default()).unwrap();
        assert!(res.involutive_on_grid);
        assert!(res.regular);
        assert!(res.max_bracket_norm < 1e-10);
        assert!(res.per_point.iter().all(|&(a, b)| a == 2 && b == 2));
    }

    #[test]
    fn bracket_raising_rank_is_detected() {
        // Spanning fields (1,0,0) and (0,1,x1): bracket (0,0,1) raises the
        // rank to 3.
        let g_perp = MatrixField::from_fn(|x| {
            Mat::from_row_slice(2, 3, &[1., 0., 0., 0., 1., x[0]])
        });
        let tgt = TargetStructure::new(MatrixField::constant(Mat::identity(3, 3)), g_perp);
        let domain = DomainBox::new(
            State::from_vec(vec![-1., -1., -1.]),
            State::from_vec(vec![1., 1., 1.]),
        )
        .unwrap();
        let grid = SampleGrid::latin_hypercube(&domain, 8, 2, &State::zeros(3)).unwrap();
        let res = involutivity_check(&tgt, &grid, &StepConfig::default()).unwrap();
        assert!(!res.involutive_on_grid);
        assert!(res.regular);
        assert!(res.per_point.iter().all(|&(a, b)| a == 2 && b == 3));
    }

    #[test]
    fn single_field_distribution_is_involutive() {
        let tgt = TargetStructure::constant(
            Mat::identity(2, 2),
            Mat::from_row_slice(1, 2, &[1.0, 0.0]),
        );
        let domain =
            DomainBox::new(State::from_vec(vec![-1., -1.]), State::from_vec(vec![1., 1.])).unwrap();
        let grid = SampleGrid::latin_hypercube(&domain, 8, 2, &State::zeros(2)).unwrap();
        let res = involutivity_check(&tgt, &grid, &StepConfig::default()).unwrap();
        assert!(res.involutive_on_grid);
        assert!(res.per_point.iter().all(|&(a, b)| a == 1 && b == 1));
    }

    #[test]
    fn maglev_characteristic_coordinate_verifies() {
        let (sys, tgt, coords, grid) = maglev_fixture();
        let res =
            check_characteristic(&tgt, &coords.xi, sys.m, &grid, &StepConfig::default()).unwrap();
        assert!(res.residual <= 1e-9, "residual {}", res.residual);
        assert!(res.independent);
    }

    #[test]
    fn constant_candidate_is_flagged_dependent() {
        let (sys, tgt, _, grid) = maglev_fixture();
        let xi = VectorField::constant(State::from_vec(vec![3.0]));
        let res = check_characteristic(&tgt, &xi, sys.m, &grid, &StepConfig::default()).unwrap();
        assert_eq!(res.residual, 0.0);
        assert_eq!(res.independence_rank, 0);
        assert!(!res.independent);
    }

    #[test]
    fn wrong_candidate_has_nonzero_residual() {
        let (sys, tgt, _, grid) = maglev_fixture();
        let xi = VectorField::from_fn(|x| State::from_vec(vec![x[1]]));
        let res = check_characteristic(&tgt, &xi, sys.m, &grid, &StepConfig::default()).unwrap();
        // W e2 = (v12, -v13) = (-2, -2), norm 2*sqrt(2).
        assert_abs_diff_eq!(res.residual, 8.0f64.sqrt(), epsilon = 1e-6);
    }

    #[test]
    fn gradient_route_constant_fields_have_zero_residual() {
        let (sys, tgt, _, grid) = maglev_fixture();
        let res = check_theorem3(&sys, &tgt, &grid, &StepConfig::default()).unwrap();
        assert!(res < 1e-12, "residual {res}");
    }

    #[test]
    fn gradient_route_symmetric_and_asymmetric_cases() {
        let domain =
            DomainBox::new(State::from_vec(vec![-1., -1.]), State::from_vec(vec![1., 1.])).unwrap();
        let grid = SampleGrid::latin_hypercube(&domain, 8, 4, &State::zeros(2)).unwrap();
        let tgt = TargetStructure::constant(
            Mat::identity(2, 2),
            Mat::from_row_slice(1, 2, &[0.0, 1.0]),
        );
        // g(x) = (x2, x1): Jacobian [[0,1],[1,0]] is symmetric.
        let sym_g = MatrixField::from_fn(|x| Mat::from_column_slice(2, 1, &[x[1], x[0]]));
        let sys_sym = AffineSystem::new(
            VectorField::constant(State::zeros(2)),
            sym_g,
            domain.clone(),
            State::zeros(2),
        )
        .unwrap();
        let res = check_theorem3(&sys_sym, &tgt, &grid, &StepConfig::default()).unwrap();
        assert!(res < 1e-8, "residual {res}");

        // g(x) = (x2, 0): J - J^T has entries of magnitude 1.
        let asym_g = MatrixField::from_fn(|x| Mat::from_column_slice(2, 1, &[x[1], 0.0]));
        let sys_asym = AffineSystem::new(
            VectorField::constant(State::zeros(2)),
            asym_g,
            domain,
            State::zeros(2),
        )
        .unwrap();
        let res = check_theorem3(&sys_asym, &tgt, &grid, &StepConfig::default()).unwrap();
        assert_abs_diff_eq!(res, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn constant_route_passes_for_maglev() {
        let (sys, tgt, _, grid) = maglev_fixture();
        let res = check_theorem5(&sys, &tgt, &grid, &StepConfig::default()).unwrap();
        assert!(res.full_rank);
        assert!(res.const_residual < 1e-12);
        assert!(res.lie_residual <= 1e-9, "lie residual {}", res.lie_residual);
    }

    #[test]
    fn forcing_incompatibility_matches_formula_at_origin() {
        let params = maglev::MaglevParams::default();
        let sys = maglev::error_system(&params).unwrap();
        // v11 = 1 instead of 0: the compatibility term (y1* + x1)/k survives.
        let gains = maglev::MaglevGains::default();
        let mut fd = maglev::f_d_matrix(&gains);
        fd[(1, 0)] = 1.0;
        let tgt = TargetStructure::constant(fd, maglev::g_perp_matrix());
        let origin_grid = SampleGrid::from_points(vec![sys.x_star.clone()]).unwrap();
        let res = check_theorem5(&sys, &tgt, &origin_grid, &StepConfig::default()).unwrap();
        let expected = params.y1_star() / params.k;
        assert_abs_diff_eq!(res.lie_residual, expected, epsilon = 1e-4);
    }

    #[test]
    fn homogeneous_forcing_has_zero_lie_residual() {
        let domain =
            DomainBox::new(State::from_vec(vec![-1., -1., -1.]), State::from_vec(vec![1., 1., 1.]))
                .unwrap();
        let grid = SampleGrid::latin_hypercube(&domain, 8, 9, &State::zeros(3)).unwrap();
        let sys = AffineSystem::new(
            VectorField::constant(State::zeros(3)),
            MatrixField::constant(Mat::from_column_slice(3, 1, &[1., 0., 0.])),
            domain,
            State::zeros(3),
        )
        .unwrap();
        let tgt = TargetStructure::constant(
            maglev::f_d_matrix(&maglev::MaglevGains::default()),
            maglev::g_perp_matrix(),
        );
        let res = check_theorem5(&sys, &tgt, &grid, &StepConfig::default()).unwrap();
        assert_eq!(res.lie_residual, 0.0);
    }

    #[test]
    fn maglev_assessment_passes_via_constant_route() {
        let (sys, tgt, coords, grid) = maglev_fixture();
        let rep = assess(&sys, &tgt, &coords, &grid, &Tolerances::default(), &StepConfig::default())
            .unwrap();
        assert_eq!(rep.verdict, Verdict::Pass);
        assert!(rep.constant_route_pass);
        assert!(!rep.single_direction_applicable); // m = 1, n = 3
        assert!(rep.gradient_route_pass); // constant F_d^-1 g
        let kv = rep.kv();
        assert_eq!(kv.get("shapeability.verdict"), Some("pass"));
    }

    #[test]
    fn dissipation_sign_flip_does_not_affect_shapeability() {
        let params = maglev::MaglevParams::default();
        let sys = maglev::error_system(&params).unwrap();
        // v12 = +1 keeps F_d invertible but makes F_d + F_d^T indefinite;
        // that failure belongs to the structural validation, not here.
        let gains = maglev::MaglevGains::unchecked(-2.0, -2.0, 1.0, 2.0, 400.0, 20.0);
        let fd = maglev::f_d_matrix(&gains);
        let t = fd.transpose().try_inverse().unwrap();
        let coords = CoordinateChange::linear(&t, 1, &sys.x_star).unwrap();
        let tgt = TargetStructure::constant(fd, maglev::g_perp_matrix());
        let grid = SampleGrid::latin_hypercube(&sys.domain, 32, 17, &sys.x_star).unwrap();
        let rep = assess(&sys, &tgt, &coords, &grid, &Tolerances::default(), &StepConfig::default())
            .unwrap();
        assert_eq!(rep.verdict, Verdict::Pass);
    }

    #[test]
    fn double_integrator_passes_via_single_direction_route() {
        let domain =
            DomainBox::new(State::from_vec(vec![-2., -2.]), State::from_vec(vec![2., 2.])).unwrap();
        let sys = AffineSystem::new(
            VectorField::from_fn(|x| State::from_vec(vec![x[1], 0.0])),
            MatrixField::constant(Mat::from_column_slice(2, 1, &[0., 1.])),
            domain.clone(),
            State::zeros(2),
        )
        .unwrap();
        let fd = Mat::from_row_slice(2, 2, &[0., 1., -1., -1.]);
        let tgt = TargetStructure::constant(fd, Mat::from_row_slice(1, 2, &[1., 0.]));
        let coords = CoordinateChange::linear(&Mat::identity(2, 2), 1, &sys.x_star).unwrap();
        let grid = SampleGrid::latin_hypercube(&domain, 16, 3, &sys.x_star).unwrap();
        let rep = assess(&sys, &tgt, &coords, &grid, &Tolerances::default(), &StepConfig::default())
            .unwrap();
        assert_eq!(rep.verdict, Verdict::Pass);
        assert!(rep.single_direction_applicable);
        assert!(rep.single_direction_pass);
    }

    #[test]
    fn irregular_distribution_aborts_verdict() {
        // W(x) = (x1, 0): vanishes at x1 = 0, so the distribution drops rank.
        let g_perp = MatrixField::from_fn(|x| Mat::from_row_slice(1, 2, &[x[0], 0.0]));
        let tgt = TargetStructure::new(MatrixField::constant(Mat::identity(2, 2)), g_perp);
        let domain =
            DomainBox::new(State::from_vec(vec![-1., -1.]), State::from_vec(vec![1., 1.])).unwrap();
        let sys = AffineSystem::new(
            VectorField::constant(State::zeros(2)),
            MatrixField::constant(Mat::from_column_slice(2, 1, &[0., 1.])),
            domain.clone(),
            State::zeros(2),
        )
        .unwrap();
        let coords = CoordinateChange::linear(&Mat::identity(2, 2), 1, &sys.x_star).unwrap();
        // x* = 0 is on the grid, where W vanishes.
        let grid = SampleGrid::latin_hypercube(&domain, 8, 1, &sys.x_star).unwrap();
        let rep = assess(&sys, &tgt, &coords, &grid, &Tolerances::default(), &StepConfig::default())
            .unwrap();
        assert_eq!(rep.verdict, Verdict::AbortedIrregular);
    }

    #[test]
    fn verdict_is_monotone_in_tolerances() {
        let (sys, tgt, coords, grid) = maglev_fixture();
        let tol = Tolerances::default();
        let mut tighter = tol;
        tighter.characteristic *= 1e-3;
        tighter.forcing_lie *= 1e-3;
        let cfg = StepConfig::default();
        let base = assess(&sys, &tgt, &coords, &grid, &tol, &cfg).unwrap().verdict;
        let tight = assess(&sys, &tgt, &coords, &grid, &tighter, &cfg).unwrap().verdict;
        // Shrinking tolerances may only move pass -> fail, never the reverse.
        if base == Verdict::Fail {
            assert_eq!(tight, Verdict::Fail);
        }
    }
}
