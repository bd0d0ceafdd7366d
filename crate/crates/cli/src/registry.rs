//! Named system registry. Custom plants are compiled-in builders keyed by
//! `system.name`; each returns everything the pipeline needs.

use idapbc_core::field::{Mat, MatrixField, State, VectorField};
use idapbc_core::maglev::{self, MaglevGains};
use idapbc_core::model::{AffineSystem, CoordinateChange, DomainBox, TargetStructure};
use idapbc_core::Error;

use crate::config::AppConfig;

/// A fully wired plant: system, target structure, coordinates, candidate
/// gain map, plus presentation metadata.
pub struct SystemBundle {
    pub system: AffineSystem,
    pub target: TargetStructure,
    /// Absent when the coordinate construction itself failed (e.g. a
    /// singular target matrix); the failure text is kept for the report.
    pub coords: Option<CoordinateChange>,
    pub coords_error: Option<String>,
    pub m1: MatrixField,
    /// Added to states for CSV/plots (physical setpoint), when applicable.
    pub offset: Option<State>,
    /// One label per state, with units, for plot axes.
    pub state_labels: Vec<String>,
    pub input_label: String,
    pub default_x0: State,
}

pub fn known_systems() -> &'static [&'static str] {
    &["maglev", "double_integrator"]
}

/// Builds the named system. With `strict` gains are sign-validated up front
/// (a violation is a configuration error); without it inadmissible gains
/// flow through so the structural checks can report them as findings.
pub fn build_bundle(cfg: &AppConfig, strict: bool) -> Result<SystemBundle, Error> {
    match cfg.system.as_str() {
        "maglev" => build_maglev(cfg, strict),
        "double_integrator" => build_double_integrator(cfg),
        other => Err(Error::contract(format!(
            "unknown system '{other}'; known systems: {}",
            known_systems().join(", ")
        ))),
    }
}

fn build_maglev(cfg: &AppConfig, strict: bool) -> Result<SystemBundle, Error> {
    let g = &cfg.gains;
    let gains = if strict {
        MaglevGains::new(g.alpha11, g.alpha13, g.v12, g.v13, g.p1, g.p2)?
    } else {
        MaglevGains::unchecked(g.alpha11, g.alpha13, g.v12, g.v13, g.p1, g.p2)
    };
    let system = maglev::error_system(&cfg.params)?;
    let fd = maglev::f_d_matrix(&gains);
    let target = TargetStructure::constant(fd.clone(), maglev::g_perp_matrix());
    let (coords, coords_error) = match fd.transpose().try_inverse() {
        Some(t) => match CoordinateChange::linear(&t, 1, &system.x_star) {
            Ok(c) => (Some(c), None),
            Err(e) => (None, Some(e.to_string())),
        },
        None => (
            None,
            Some("target matrix F_d is singular; characteristic coordinates unavailable".into()),
        ),
    };
    let m1 = maglev::m1_field(&cfg.params, &gains);
    Ok(SystemBundle {
        system,
        target,
        coords,
        coords_error,
        m1,
        offset: Some(cfg.params.y_star()),
        state_labels: vec![
            "y1 [Wb]".into(),
            "y2 [m]".into(),
            "y3 [kg m/s]".into(),
        ],
        input_label: "u [V]".into(),
        default_x0: State::from_vec(vec![0.0, -cfg.params.y2_star, 0.0]),
    })
}

/// Minimal custom-system example: a double integrator with one input.
/// Demonstrates the single-unactuated-direction route end to end.
fn build_double_integrator(cfg: &AppConfig) -> Result<SystemBundle, Error> {
    let p1 = cfg.gains.p1;
    if !(p1.is_finite() && p1 > 0.0) {
        return Err(Error::contract(format!(
            "gain p1 must be positive for the double integrator, got {p1}"
        )));
    }
    let domain = DomainBox::new(
        State::from_vec(vec![-5.0, -5.0]),
        State::from_vec(vec![5.0, 5.0]),
    )?;
    let system = AffineSystem::new(
        VectorField::from_fn(|x| State::from_vec(vec![x[1], 0.0])),
        MatrixField::constant(Mat::from_column_slice(2, 1, &[0.0, 1.0])),
        domain,
        State::zeros(2),
    )?;
    let target = TargetStructure::constant(
        Mat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -1.0]),
        Mat::from_row_slice(1, 2, &[1.0, 0.0]),
    );
    let coords = CoordinateChange::linear(&Mat::identity(2, 2), 1, &system.x_star)?;
    let m1 = MatrixField::constant(Mat::from_element(1, 1, p1));
    Ok(SystemBundle {
        system,
        target,
        coords: Some(coords),
        coords_error: None,
        m1,
        offset: None,
        state_labels: vec!["y1 [m]".into(), "y2 [m/s]".into()],
        input_label: "u [m/s^2]".into(),
        default_x0: State::from_vec(vec![1.0, 0.0]),
    })
}
