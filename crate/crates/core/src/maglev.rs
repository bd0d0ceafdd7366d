//! Magnetic-levitation ball: error dynamics, target-structure
//! parameterization, characteristic coordinates, and closed-form oracles.
//!
//! States are error coordinates `x = y - y*` where `y = (flux, position,
//! momentum)` and `y* = (sqrt(2 k m a), y2*, 0)`, so the equilibrium to
//! stabilize is the origin.

use crate::error::{Error, Result};
use crate::field::{Mat, MatrixField, State, VectorField};
use crate::model::{AffineSystem, CoordinateChange, DomainBox, TargetStructure};

/// Physical parameters, all SI.
#[derive(Debug, Clone, Copy)]
pub struct MaglevParams {
    /// Coil resistance-like coefficient (Ohm).
    pub gamma: f64,
    /// Magnetic constant (N m / A).
    pub k: f64,
    /// Contact gap: the ball touches the electromagnet at position `c` (m).
    pub c: f64,
    /// Ball mass (kg).
    pub mass: f64,
    /// Gravitational acceleration (m/s^2).
    pub a: f64,
    /// Target ball position (m), strictly below `c`.
    pub y2_star: f64,
}

impl Default for MaglevParams {
    fn default() -> Self {
        Self {
            gamma: 2.52,
            k: 6.4042e-5,
            c: 0.005,
            mass: 0.0844,
            a: 9.81,
            y2_star: 0.002,
        }
    }
}

impl MaglevParams {
    pub fn validate(&self) -> Result<()> {
        let entries = [
            ("gamma", self.gamma),
            ("k", self.k),
            ("c", self.c),
            ("mass", self.mass),
            ("a", self.a),
            ("y2_star", self.y2_star),
        ];
        for (name, v) in entries {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::contract(format!(
                    "maglev parameter {name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.y2_star >= self.c {
            return Err(Error::contract(format!(
                "target position y2_star = {} must lie below the contact gap c = {}",
                self.y2_star, self.c
            )));
        }
        Ok(())
    }

    /// Equilibrium flux `sqrt(2 k m a)`.
    pub fn y1_star(&self) -> f64 {
        (2.0 * self.k * self.mass * self.a).sqrt()
    }

    /// Physical setpoint `(y1*, y2*, 0)`; error states are offsets from it.
    pub fn y_star(&self) -> State {
        State::from_vec(vec![self.y1_star(), self.y2_star, 0.0])
    }
}

/// Free entries of the target-structure parameterization plus the two
/// energy-shaping gains. The remaining entries are fixed by the solvability
/// analysis: `alpha12 = v11 = v23 = 0`, `v21 = -alpha13`, `v22 = -v13`.
#[derive(Debug, Clone, Copy)]
pub struct MaglevGains {
    pub alpha11: f64,
    pub alpha13: f64,
    pub v12: f64,
    pub v13: f64,
    pub p1: f64,
    pub p2: f64,
}

impl Default for MaglevGains {
    fn default() -> Self {
        Self {
            alpha11: -2.0,
            alpha13: -2.0,
            v12: -2.0,
            v13: 2.0,
            p1: 400.0,
            p2: 20.0,
        }
    }
}

impl MaglevGains {
    /// Validating constructor; rejects any sign-constraint violation and
    /// names the offending gain.
    pub fn new(alpha11: f64, alpha13: f64, v12: f64, v13: f64, p1: f64, p2: f64) -> Result<Self> {
        let g = Self::unchecked(alpha11, alpha13, v12, v13, p1, p2);
        g.validate()?;
        Ok(g)
    }

    /// Bypasses the sign constraints. Used when a deliberately inadmissible
    /// gain set should flow into the structural checks as data.
    pub fn unchecked(alpha11: f64, alpha13: f64, v12: f64, v13: f64, p1: f64, p2: f64) -> Self {
        Self {
            alpha11,
            alpha13,
            v12,
            v13,
            p1,
            p2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let negative = [
            ("alpha11", self.alpha11),
            ("alpha13", self.alpha13),
            ("v12", self.v12),
        ];
        for (name, v) in negative {
            if !(v.is_finite() && v < 0.0) {
                return Err(Error::contract(format!(
                    "gain {name} must be negative, got {v}"
                )));
            }
        }
        let positive = [("v13", self.v13), ("p1", self.p1), ("p2", self.p2)];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::contract(format!(
                    "gain {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// The constant target matrix with the fixed entries substituted.
pub fn f_d_matrix(g: &MaglevGains) -> Mat {
    Mat::from_row_slice(
        3,
        3,
        &[
            g.alpha11, 0.0, g.alpha13, //
            0.0, g.v12, g.v13, //
            -g.alpha13, -g.v13, 0.0,
        ],
    )
}

/// Left annihilator of the input column: rows select the unactuated states.
pub fn g_perp_matrix() -> Mat {
    Mat::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0])
}

/// Default error-state box. Keeps the physical position below the contact
/// gap with margin: `x2 <= 0.0025` means `y2 <= 0.0045 < c`.
pub fn domain_box() -> DomainBox {
    DomainBox::new(
        State::from_vec(vec![-0.005, -0.002, -0.01]),
        State::from_vec(vec![0.005, 0.0025, 0.01]),
    )
    .expect("static bounds")
}

/// Error dynamics of the levitated ball.
pub fn error_system(params: &MaglevParams) -> Result<AffineSystem> {
    params.validate()?;
    let p = *params;
    let y1s = p.y1_star();
    let f = VectorField::from_fn(move |x| {
        State::from_vec(vec![
            -(p.gamma / p.k) * (p.c - x[1] - p.y2_star) * (x[0] + y1s),
            x[2] / p.mass,
            x[0] * x[0] / (2.0 * p.k) + (y1s / p.k) * x[0],
        ])
    });
    let g = MatrixField::constant(Mat::from_column_slice(3, 1, &[1.0, 0.0, 0.0]));
    AffineSystem::new(f, g, domain_box(), State::zeros(3))
}

/// Everything the design pipeline needs for the maglev.
#[derive(Debug, Clone)]
pub struct MaglevBundle {
    pub system: AffineSystem,
    pub target: TargetStructure,
    pub coords: CoordinateChange,
    pub m1: MatrixField,
}

/// Builds system, target structure, characteristic coordinates
/// (`z = F_d^-T x`, linear with exact inverse), and the candidate gain map
/// `M1(z) = p1 + p2 z1^2 + (alpha11^2 / k) z3`.
pub fn build(params: &MaglevParams, gains: &MaglevGains) -> Result<MaglevBundle> {
    let system = error_system(params)?;
    let fd = f_d_matrix(gains);
    let target = TargetStructure::constant(fd.clone(), g_perp_matrix());
    let t = fd.transpose().try_inverse().ok_or_else(|| {
        Error::singular("maglev target matrix F_d", f64::INFINITY)
    })?;
    let coords = CoordinateChange::linear(&t, 1, &system.x_star)?;
    let m1 = m1_field(params, gains);
    Ok(MaglevBundle {
        system,
        target,
        coords,
        m1,
    })
}

/// Candidate solution of the gain-map PDE, in characteristic coordinates.
pub fn m1_field(params: &MaglevParams, gains: &MaglevGains) -> MatrixField {
    let (p1, p2) = (gains.p1, gains.p2);
    let a11_sq_over_k = gains.alpha11 * gains.alpha11 / params.k;
    MatrixField::from_fn(move |z| {
        Mat::from_element(1, 1, p1 + p2 * z[0] * z[0] + a11_sq_over_k * z[2])
    })
}

/// Closed-form first component of the shaped-energy gradient in `z`.
/// Serves as the independent oracle for the line-integral construction.
pub fn closed_form_grad_z1(z: &State, params: &MaglevParams, gains: &MaglevGains) -> f64 {
    let y1s = params.y1_star();
    let k = params.k;
    let m = params.mass;
    gains.p1 * z[0]
        + gains.p2 / 3.0 * z[0].powi(3)
        + gains.alpha11 * gains.alpha11 / k * z[0] * z[2]
        + gains.alpha13 / m * z[1]
        + gains.alpha11 * y1s / k * z[2]
        - gains.alpha11 * gains.alpha13 / (2.0 * k) * z[2] * z[2]
}

/// Closed-form control law; oracle for the synthesized feedback.
///
/// The coordinate map `z = F_d^-T x` is evaluated here by a hand-rolled
/// cofactor solve so the oracle shares no linear-algebra path with the
/// pipeline.
pub fn closed_form_control(x: &State, params: &MaglevParams, gains: &MaglevGains) -> f64 {
    let y1s = params.y1_star();
    let feedforward =
        params.gamma / params.k * (params.c - x[1] - params.y2_star) * (x[0] + y1s);
    let z = solve3_transpose(&f_d_matrix(gains), x);
    feedforward + closed_form_grad_z1(&z, params, gains)
}

// Solves F_d^T z = x by Cramer's rule (3x3 only).
fn solve3_transpose(f_d: &Mat, x: &State) -> State {
    let a = f_d.transpose();
    let det = a[(0, 0)] * (a[(1, 1)] * a[(2, 2)] - a[(1, 2)] * a[(2, 1)])
        - a[(0, 1)] * (a[(1, 0)] * a[(2, 2)] - a[(1, 2)] * a[(2, 0)])
        + a[(0, 2)] * (a[(1, 0)] * a[(2, 1)] - a[(1, 1)] * a[(2, 0)]);
    let mut z = State::zeros(3);
    for col in 0..3 {
        let mut b = a.clone();
        for row in 0..3 {
            b[(row, col)] = x[row];
        }
        let det_b = b[(0, 0)] * (b[(1, 1)] * b[(2, 2)] - b[(1, 2)] * b[(2, 1)])
            - b[(0, 1)] * (b[(1, 0)] * b[(2, 2)] - b[(1, 2)] * b[(2, 0)])
            + b[(0, 2)] * (b[(1, 0)] * b[(2, 1)] - b[(1, 1)] * b[(2, 0)]);
        z[col] = det_b / det;
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn equilibrium_flux_matches_hand_value() {
        let p = MaglevParams::default();
        assert_abs_diff_eq!(p.y1_star(), 0.0102980, epsilon = 1e-6);
    }

    #[test]
    fn default_target_matrix() {
        let fd = f_d_matrix(&MaglevGains::default());
        let expected = Mat::from_row_slice(
            3,
            3,
            &[-2., 0., -2., 0., -2., 2., 2., -2., 0.],
        );
        assert_eq!(fd, expected);
        assert_abs_diff_eq!(fd.determinant(), -16.0, epsilon = 1e-12);
        let sym = &fd + fd.transpose();
        let diag = Mat::from_diagonal(&State::from_vec(vec![-4.0, -4.0, 0.0]));
        assert_eq!(sym, diag);
    }

    #[test]
    fn annihilator_kills_input_exactly() {
        let g = Mat::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let prod = g_perp_matrix() * g;
        assert!(prod.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn grad_oracle_spot_values() {
        let p = MaglevParams::default();
        let g = MaglevGains::default();
        assert_eq!(closed_form_grad_z1(&State::zeros(3), &p, &g), 0.0);
        let v = closed_form_grad_z1(&State::from_vec(vec![1.0, 0.0, 0.0]), &p, &g);
        assert_abs_diff_eq!(v, 400.0 + 20.0 / 3.0, epsilon = 1e-12);
        let v = closed_form_grad_z1(&State::from_vec(vec![0.0, 1.0, 0.0]), &p, &g);
        assert_abs_diff_eq!(v, -2.0 / 0.0844, epsilon = 1e-12);
    }

    #[test]
    fn control_oracle_at_origin_is_feedforward() {
        let p = MaglevParams::default();
        let g = MaglevGains::default();
        let u0 = closed_form_control(&State::zeros(3), &p, &g);
        let expected = p.gamma / p.k * (p.c - p.y2_star) * p.y1_star();
        assert_abs_diff_eq!(u0, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(u0, 1.2157, epsilon = 5e-4);
    }

    #[test]
    fn control_oracle_at_contact_drops_feedforward() {
        let p = MaglevParams::default();
        let g = MaglevGains::default();
        let x = State::from_vec(vec![0.001, p.c - p.y2_star, -0.002]);
        let u = closed_form_control(&x, &p, &g);
        let z = solve3_transpose(&f_d_matrix(&g), &x);
        assert_abs_diff_eq!(u, closed_form_grad_z1(&z, &p, &g), epsilon = 1e-12);
    }

    #[test]
    fn cramer_solve_matches_inverse() {
        let fd = f_d_matrix(&MaglevGains::default());
        let x = State::from_vec(vec![0.003, -0.001, 0.007]);
        let z = solve3_transpose(&fd, &x);
        let t = fd.transpose().try_inverse().unwrap();
        assert_abs_diff_eq!(z, t * x, epsilon = 1e-14);
    }

    #[test]
    fn gain_validation_names_offender() {
        let err = MaglevGains::new(-2.0, 2.0, -2.0, 2.0, 400.0, 20.0).unwrap_err();
        assert!(err.to_string().contains("alpha13"), "{err}");
        let err = MaglevGains::new(-2.0, -2.0, -2.0, -2.0, 400.0, 20.0).unwrap_err();
        assert!(err.to_string().contains("v13"), "{err}");
        let err = MaglevGains::new(-2.0, -2.0, -2.0, 2.0, 0.0, 20.0).unwrap_err();
        assert!(err.to_string().contains("p1"), "{err}");
    }

    #[test]
    fn param_validation_rejects_contact_violation() {
        let p = MaglevParams {
            y2_star: 0.006,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn bundle_coordinates_fix_origin() {
        let bundle = build(&MaglevParams::default(), &MaglevGains::default()).unwrap();
        assert_eq!(bundle.coords.z_star, State::zeros(3));
        let x = State::from_vec(vec![0.001, 0.0005, -0.004]);
        let z = bundle.coords.forward(&x).unwrap();
        let back = bundle.coords.inverse.eval(&z).unwrap();
        assert_abs_diff_eq!(back, x, epsilon = 1e-14);
    }

    proptest! {
        // Any admissible gain set keeps the forcing-term compatibility exact:
        // the fixed entries v11 = v23 = 0 remove the state-dependent term.
        #[test]
        fn admissible_gains_validate(
            a11 in -5.0f64..-0.5,
            a13 in -5.0f64..-0.5,
            v12 in -5.0f64..-0.5,
            v13 in 0.5f64..5.0,
        ) {
            let g = MaglevGains::new(a11, a13, v12, v13, 100.0, 10.0).unwrap();
            let fd = f_d_matrix(&g);
            // F_d + F_d^T = diag(2 a11, 2 v12, 0).
            let sym = &fd + fd.transpose();
            prop_assert!((sym[(0, 0)] - 2.0 * a11).abs() < 1e-12);
            prop_assert!((sym[(1, 1)] - 2.0 * v12).abs() < 1e-12);
            for (i, j) in [(0, 1), (0, 2), (1, 2)] {
                prop_assert!(sym[(i, j)].abs() < 1e-12);
                prop_assert!(sym[(j, i)].abs() < 1e-12);
            }
            prop_assert!(sym[(2, 2)].abs() < 1e-12);
        }
    }
}
