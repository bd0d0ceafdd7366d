//! The four subcommands. Exit codes are a stable contract:
//! 0 success, 1 check/certificate/audit failure, 2 configuration error,
//! 3 numerical failure.

use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use idapbc_core::controller::{self, Controller};
use idapbc_core::field::{Mat, State};
use idapbc_core::model::{self, SampleGrid};
use idapbc_core::shapeability::{self, Verdict};
use idapbc_core::shaping::{self, GainMapResiduals, GainSelection, HessianCertificate, ShapedEnergy};
use idapbc_core::sim::{self, SimConfig};
use idapbc_core::{Error, KvReport};

use crate::config::AppConfig;
use crate::registry::{self, SystemBundle};
use crate::svg;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

fn exit_for(e: &Error) -> i32 {
    match e {
        Error::Contract(_) => EXIT_CONFIG,
        Error::Shapeability(_) => EXIT_FAIL,
        Error::Numerical(_) | Error::Singular { .. } | Error::Domain(_) => EXIT_NUMERICAL,
    }
}

fn write_report(out_dir: &Path, name: &str, report: &KvReport) -> Result<(), i32> {
    let write = || -> std::io::Result<()> {
        fs::create_dir_all(out_dir)?;
        fs::write(out_dir.join(format!("{name}.txt")), report.to_text())?;
        fs::write(out_dir.join(format!("{name}.kv")), report.to_kv_string())?;
        Ok(())
    };
    write().map_err(|e| {
        eprintln!("error: cannot write report to {}: {e}", out_dir.display());
        EXIT_CONFIG
    })
}

fn print_summary(report: &KvReport, out_dir: &Path, name: &str) {
    print!("{}", report.to_text());
    println!("report: {}", out_dir.join(format!("{name}.txt")).display());
}

fn sample_grid(cfg: &AppConfig, bundle: &SystemBundle) -> Result<SampleGrid, Error> {
    SampleGrid::latin_hypercube(
        &bundle.system.domain,
        cfg.grid_count,
        cfg.grid_seed,
        &bundle.system.x_star,
    )
}

/// Structural validation plus shapeability assessment. Returns the exit
/// code contribution and appends everything to the report.
fn run_check(
    cfg: &AppConfig,
    bundle: &SystemBundle,
    report: &mut KvReport,
) -> Result<i32, i32> {
    let grid = sample_grid(cfg, bundle).map_err(|e| {
        eprintln!("error: {e}");
        exit_for(&e)
    })?;
    let validation = model::validate_system(&bundle.system, &bundle.target, &grid, &cfg.tol)
        .map_err(|e| {
            eprintln!("error: {e}");
            exit_for(&e)
        })?;
    report.extend(validation.kv());

    let mut code = if validation.pass { EXIT_OK } else { EXIT_FAIL };
    match &bundle.coords {
        Some(coords) => {
            match shapeability::assess(
                &bundle.system,
                &bundle.target,
                coords,
                &grid,
                &cfg.tol,
                &cfg.steps,
            ) {
                Ok(rep) => {
                    if rep.verdict != Verdict::Pass {
                        code = code.max(EXIT_FAIL);
                    }
                    report.extend(rep.kv());
                }
                Err(e) => {
                    report.note(format!("shapeability assessment failed: {e}"));
                    code = code.max(exit_for(&e));
                }
            }
        }
        None => {
            let why = bundle
                .coords_error
                .clone()
                .unwrap_or_else(|| "coordinate change unavailable".into());
            report.note(format!("shapeability not assessed: {why}"));
            code = code.max(if validation.pass { EXIT_NUMERICAL } else { EXIT_FAIL });
        }
    }
    Ok(code)
}

pub fn cmd_check(cfg: &AppConfig) -> i32 {
    let bundle = match registry::build_bundle(cfg, false) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_for(&e);
        }
    };
    let mut report = KvReport::new();
    let code = match run_check(cfg, &bundle, &mut report) {
        Ok(c) => c,
        Err(c) => return c,
    };
    report.push("check.exit", code);
    report.extend(cfg.effective_kv());
    if let Err(c) = write_report(&cfg.out_dir, "check_report", &report) {
        return c;
    }
    print_summary(&report, &cfg.out_dir, "check_report");
    code
}

/// Everything the design produced, for reuse by `simulate`.
pub struct Designed {
    pub bundle: SystemBundle,
    pub energy: ShapedEnergy,
    pub ctrl: Controller,
    pub selection: GainSelection,
    pub certificate: HessianCertificate,
    pub matching_residual: f64,
    pub m1_residuals: GainMapResiduals,
    pub m2_used: Mat,
}

fn run_design(cfg: &AppConfig, report: &mut KvReport) -> Result<Designed, i32> {
    let bundle = registry::build_bundle(cfg, true).map_err(|e| {
        eprintln!("error: {e}");
        exit_for(&e)
    })?;
    let check_code = run_check(cfg, &bundle, report)?;
    if check_code != EXIT_OK {
        report.note("design aborted: preliminary checks failed.".to_string());
        return Err(check_code);
    }
    let coords = bundle.coords.as_ref().expect("checked above");
    let grid = sample_grid(cfg, &bundle).map_err(|e| exit_for(&e))?;
    let m = bundle.system.m;

    let rho = shaping::build_rho(&bundle.system, &bundle.target, coords, cfg.steps);
    let z_grid = grid
        .map(|x| coords.forward(x))
        .map_err(|e| exit_for(&e))?;
    let m1_residuals = shaping::verify_m1(&bundle.m1, &rho, m, &z_grid, &cfg.steps)
        .map_err(|e| exit_for(&e))?;
    let m1_pass = m1_residuals.pass(cfg.tol.pde, cfg.tol.pde_second);

    // Selection runs twice when the margin follows the default policy,
    // which needs the coupling value first.
    let probe = shaping::select_m2(&rho, &bundle.m1, &coords.z_star, m, 1.0, &cfg.steps)
        .map_err(|e| {
            report.note(format!("free-gain selection failed: {e}"));
            eprintln!("error: {e}");
            exit_for(&e)
        })?;
    let margin = cfg
        .design
        .margin
        .unwrap_or_else(|| shaping::default_margin(probe.coupling));
    let selection = shaping::select_m2(&rho, &bundle.m1, &coords.z_star, m, margin, &cfg.steps)
        .map_err(|e| exit_for(&e))?;
    let m2_used = if cfg.design.auto_m2 {
        selection.m2.clone()
    } else {
        Mat::identity(m, m) * cfg.design.m2
    };

    let energy = ShapedEnergy::construct(
        &bundle.system,
        &bundle.target,
        coords,
        &bundle.m1,
        &m2_used,
        cfg.steps,
    )
    .map_err(|e| {
        eprintln!("error: {e}");
        exit_for(&e)
    })?;
    let certificate = shaping::hessian_certificate(&energy, &bundle.system.x_star, &cfg.steps)
        .map_err(|e| exit_for(&e))?;
    let matching_residual =
        shaping::matching_residual_max(&bundle.system, &bundle.target, &energy, &grid)
            .map_err(|e| exit_for(&e))?;
    let ctrl = controller::synthesize(&bundle.system, &bundle.target, coords, &energy, cfg.steps)
        .map_err(|e| {
            eprintln!("error: {e}");
            exit_for(&e)
        })?;

    // Spot agreement of the two feedback forms on a handful of samples.
    let mut form_agreement = 0.0f64;
    for x in grid.iter().take(16) {
        let a = ctrl.control(x).map_err(|e| exit_for(&e))?;
        let b = ctrl.control_matching_form(x).map_err(|e| exit_for(&e))?;
        form_agreement = form_agreement.max((a - b).amax());
    }

    report.note(format!(
        "Design: coupling bound {:.4}, lambda_min(M1(z*)) = {:.4}, margin {:.4}, \
         required free gain {:.4}, used M2 = {:.4}.",
        selection.coupling,
        selection.m1_min,
        selection.margin,
        selection.required,
        m2_used.get((0, 0)).copied().unwrap_or(0.0)
    ));
    report.note(format!(
        "Certificate: lambda_min = {:.6} (transformed), {:.6} (original); matching residual {:.3e}.",
        certificate.lambda_min_z, certificate.lambda_min_x, matching_residual
    ));
    if !m1_pass {
        report.note(format!(
            "warning: candidate gain map residuals exceed tolerances: {m1_residuals:?}"
        ));
    }
    report.push_f64("design.bound.coupling", selection.coupling);
    report.push_f64("design.bound.coupling_literal", selection.coupling_literal);
    report.push_f64("design.bound.m1_min", selection.m1_min);
    report.push_f64("design.selection.margin", selection.margin);
    report.push_f64("design.selection.required", selection.required);
    report.push_bool("design.auto_m2", cfg.design.auto_m2);
    report.push_f64(
        "design.m2_used",
        m2_used.get((0, 0)).copied().unwrap_or(0.0),
    );
    report.push_f64("design.m1.symmetry", m1_residuals.symmetry);
    report.push_f64("design.m1.xi_cross", m1_residuals.xi_cross);
    report.push_f64("design.m1.eta_vs_rho", m1_residuals.eta_vs_rho);
    report.push_bool("design.m1.pass", m1_pass);
    report.push_f64("design.certificate.lambda_min_z", certificate.lambda_min_z);
    report.push_f64("design.certificate.lambda_min_x", certificate.lambda_min_x);
    report.push_bool("design.certificate.consistent", certificate.consistent);
    report.push_bool("design.certificate.pass", certificate.pass);
    report.push_f64("design.matching_residual", matching_residual);
    report.push_f64("design.form_agreement", form_agreement);

    let pass = certificate.pass && matching_residual <= cfg.tol.matching;
    report.push_bool("design.pass", pass);
    if pass {
        Ok(Designed {
            bundle,
            energy,
            ctrl,
            selection,
            certificate,
            matching_residual,
            m1_residuals,
            m2_used,
        })
    } else {
        report.note(if certificate.pass {
            "design FAILED: matching residual exceeds tolerance.".to_string()
        } else {
            "design FAILED: equilibrium Hessian is not positive definite.".to_string()
        });
        Err(EXIT_FAIL)
    }
}

pub fn cmd_design(cfg: &AppConfig) -> i32 {
    let mut report = KvReport::new();
    let outcome = run_design(cfg, &mut report);
    report.extend(cfg.effective_kv());
    if let Err(c) = write_report(&cfg.out_dir, "design_report", &report) {
        return c;
    }
    print_summary(&report, &cfg.out_dir, "design_report");
    match outcome {
        Ok(_) => EXIT_OK,
        Err(code) => code,
    }
}

fn sim_config(cfg: &AppConfig, bundle: &SystemBundle) -> Result<SimConfig, i32> {
    let x0 = match &cfg.sim.x0 {
        Some(v) => {
            if v.len() != bundle.system.n {
                eprintln!(
                    "error: sim.x0 has {} entries, system has dimension {}",
                    v.len(),
                    bundle.system.n
                );
                return Err(EXIT_CONFIG);
            }
            State::from_vec(v.clone())
        }
        None => bundle.default_x0.clone(),
    };
    Ok(SimConfig {
        dt: cfg.sim.dt,
        t_end: cfg.sim.t_end,
        x0,
        record_every: cfg.sim.record_every,
    })
}

pub fn cmd_simulate(cfg: &AppConfig) -> i32 {
    let mut report = KvReport::new();
    let designed = match run_design(cfg, &mut report) {
        Ok(d) => d,
        Err(code) => {
            report.extend(cfg.effective_kv());
            if let Err(c) = write_report(&cfg.out_dir, "simulate_report", &report) {
                return c;
            }
            print_summary(&report, &cfg.out_dir, "simulate_report");
            return code;
        }
    };
    let scfg = match sim_config(cfg, &designed.bundle) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let traj = match sim::simulate(&designed.ctrl, &scfg) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_for(&e);
        }
    };
    let audit = sim::lyapunov_audit(&traj, cfg.tol.lyapunov);

    if let Err(c) = fs::create_dir_all(&cfg.out_dir).map_err(|e| {
        eprintln!("error: cannot create {}: {e}", cfg.out_dir.display());
        EXIT_CONFIG
    }) {
        return c;
    }
    let csv_path = cfg.out_dir.join("trajectory.csv");
    let csv_result = fs::File::create(&csv_path)
        .and_then(|mut f| traj.write_csv(designed.bundle.offset.as_ref(), &mut f));
    if let Err(e) = csv_result {
        eprintln!("error: cannot write {}: {e}", csv_path.display());
        return EXIT_CONFIG;
    }

    if cfg.sim.plot {
        let mut series: Vec<(String, Vec<f64>)> = Vec::new();
        for i in 0..designed.bundle.system.n {
            let shift = designed.bundle.offset.as_ref().map_or(0.0, |o| o[i]);
            let label = designed
                .bundle
                .state_labels
                .get(i)
                .cloned()
                .unwrap_or_else(|| format!("y{}", i + 1));
            series.push((label, traj.states.iter().map(|x| x[i] + shift).collect()));
        }
        series.push((
            designed.bundle.input_label.clone(),
            traj.inputs.iter().map(|u| u[0]).collect(),
        ));
        let svg_text = svg::render(&traj.t, &series, "t [s]");
        let svg_path = cfg.out_dir.join("trajectory.svg");
        if let Err(e) = fs::write(&svg_path, svg_text) {
            eprintln!("error: cannot write {}: {e}", svg_path.display());
            return EXIT_CONFIG;
        }
    }

    let final_err = traj
        .last_state()
        .map(|x| (x - &designed.bundle.system.x_star).norm())
        .unwrap_or(f64::NAN);
    report.note(format!(
        "Simulation: {} recorded samples over {:.3} s; final equilibrium error {:.3e}.",
        traj.len(),
        scfg.t_end,
        final_err
    ));
    for ev in &traj.events {
        report.note(format!("event: {} at t = {:.6} s", ev.kind, ev.time));
    }
    if !audit.clean() {
        report.note(format!(
            "energy audit violation at t = {:.6} s (max increase {:.3e})",
            audit.first_violation.unwrap_or(f64::NAN),
            audit.max_increase
        ));
    }
    report.push("sim.rows", traj.len());
    report.push_f64("sim.final_err", final_err);
    report.push("sim.events", traj.events.len());
    report.push_f64("sim.audit.max_increase", audit.max_increase);
    report.push_bool("sim.audit.clean", audit.clean());
    report.push("sim.csv", csv_path.display());
    report.extend(cfg.effective_kv());
    if let Err(c) = write_report(&cfg.out_dir, "simulate_report", &report) {
        return c;
    }
    print_summary(&report, &cfg.out_dir, "simulate_report");
    if traj.events.is_empty() && audit.clean() {
        EXIT_OK
    } else {
        EXIT_FAIL
    }
}

struct SweepRow {
    g1: f64,
    g2: f64,
    certificate: bool,
    converged: bool,
    final_err: f64,
}

fn sweep_cell(cfg: &AppConfig, g1: f64, g2: f64) -> SweepRow {
    let mut cell_cfg = cfg.clone();
    let mut failed = SweepRow {
        g1,
        g2,
        certificate: false,
        converged: false,
        final_err: f64::NAN,
    };
    if cell_cfg.gains.set_by_name(&cfg.sweep.gain1, g1).is_err()
        || cell_cfg.gains.set_by_name(&cfg.sweep.gain2, g2).is_err()
    {
        return failed;
    }
    let bundle = match registry::build_bundle(&cell_cfg, false) {
        Ok(b) => b,
        Err(_) => return failed,
    };
    let coords = match &bundle.coords {
        Some(c) => c,
        None => return failed,
    };
    let m = bundle.system.m;
    let m2 = Mat::identity(m, m) * cell_cfg.design.m2;
    let energy = match ShapedEnergy::construct(
        &bundle.system,
        &bundle.target,
        coords,
        &bundle.m1,
        &m2,
        cell_cfg.steps,
    ) {
        Ok(e) => e,
        Err(_) => return failed,
    };
    let certificate = shaping::hessian_certificate(&energy, &bundle.system.x_star, &cell_cfg.steps)
        .map(|c| c.pass)
        .unwrap_or(false);
    failed.certificate = certificate;
    let ctrl = match controller::synthesize(
        &bundle.system,
        &bundle.target,
        coords,
        &energy,
        cell_cfg.steps,
    ) {
        Ok(c) => c,
        Err(_) => return failed,
    };
    let scfg = match sim_config(&cell_cfg, &bundle) {
        Ok(s) => s,
        Err(_) => return failed,
    };
    let traj = match sim::simulate(&ctrl, &scfg) {
        Ok(t) => t,
        Err(_) => return failed,
    };
    let audit = sim::lyapunov_audit(&traj, cell_cfg.tol.lyapunov);
    let final_err = traj
        .last_state()
        .map(|x| (x - &bundle.system.x_star).norm())
        .unwrap_or(f64::NAN);
    SweepRow {
        g1,
        g2,
        certificate,
        converged: traj.events.is_empty()
            && audit.clean()
            && final_err <= cell_cfg.sweep.converge_tol,
        final_err,
    }
}

pub fn cmd_sweep(cfg: &AppConfig) -> i32 {
    if cfg.sweep.values1.is_empty() || cfg.sweep.values2.is_empty() {
        eprintln!("error: sweep ranges must be non-empty (sweep.values1 / sweep.values2)");
        return EXIT_CONFIG;
    }
    {
        let mut scratch = cfg.gains;
        if let Err(e) = scratch
            .set_by_name(&cfg.sweep.gain1, 0.0)
            .and_then(|_| scratch.set_by_name(&cfg.sweep.gain2, 0.0))
        {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    }
    if cfg.sweep.workers == 0 {
        eprintln!("error: sweep.workers must be at least 1");
        return EXIT_CONFIG;
    }

    let cells: Vec<(f64, f64)> = cfg
        .sweep
        .values1
        .iter()
        .flat_map(|&a| cfg.sweep.values2.iter().map(move |&b| (a, b)))
        .collect();
    let results: Vec<Mutex<Option<SweepRow>>> =
        (0..cells.len()).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = cfg.sweep.workers.min(cells.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= cells.len() {
                    break;
                }
                let (g1, g2) = cells[i];
                let row = sweep_cell(cfg, g1, g2);
                *results[i].lock().unwrap() = Some(row);
            });
        }
    });

    if let Err(e) = fs::create_dir_all(&cfg.out_dir) {
        eprintln!("error: cannot create {}: {e}", cfg.out_dir.display());
        return EXIT_CONFIG;
    }
    let csv_path = cfg.out_dir.join("sweep.csv");
    let mut out = match fs::File::create(&csv_path) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: cannot write {}: {e}", csv_path.display());
            return EXIT_CONFIG;
        }
    };
    let mut write_rows = || -> std::io::Result<(usize, usize)> {
        writeln!(out, "gain1,gain2,certificate,converged,final_err")?;
        let mut certified = 0;
        let mut converged = 0;
        for cell in &results {
            let row = cell.lock().unwrap();
            let row = row.as_ref().expect("all cells processed");
            writeln!(
                out,
                "{:.10e},{:.10e},{},{},{:.10e}",
                row.g1, row.g2, row.certificate, row.converged, row.final_err
            )?;
            certified += row.certificate as usize;
            converged += row.converged as usize;
        }
        Ok((certified, converged))
    };
    let (certified, converged) = match write_rows() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: cannot write {}: {e}", csv_path.display());
            return EXIT_CONFIG;
        }
    };

    let mut report = KvReport::new();
    report.note(format!(
        "Sweep over {} x {} = {} cells ({} certified, {} converged); table: {}.",
        cfg.sweep.values1.len(),
        cfg.sweep.values2.len(),
        cells.len(),
        certified,
        converged,
        csv_path.display()
    ));
    report.push("sweep.cells", cells.len());
    report.push("sweep.certified", certified);
    report.push("sweep.converged", converged);
    report.push("sweep.csv", csv_path.display());
    report.extend(cfg.effective_kv());
    if let Err(c) = write_report(&cfg.out_dir, "sweep_report", &report) {
        return c;
    }
    print_summary(&report, &cfg.out_dir, "sweep_report");
    EXIT_OK
}
