//! Fixed-step closed-loop integration with energy and residual monitoring.
//!
//! Classical fourth-order Runge–Kutta with the controller evaluated at every
//! stage. Leaving the domain box or producing a non-finite state ends the
//! run with an event; the partial trajectory is still returned as data.

use std::io::Write;

use crate::controller::Controller;
use crate::error::{Error, Result};
use crate::field::State;

/// Integration settings.
#[derive(Debug, Clone)]
pub struct SimConfig {
    /// Step size (s).
    pub dt: f64,
    /// Horizon (s).
    pub t_end: f64,
    /// Initial state, in the same coordinates as the system.
    pub x0: State,
    /// Record every k-th step (1 records every step).
    pub record_every: usize,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::contract(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= self.dt) {
            return Err(Error::contract(format!(
                "t_end = {} must be at least one step dt = {}",
                self.t_end, self.dt
            )));
        }
        if self.record_every == 0 {
            return Err(Error::contract("record_every must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// The state left the domain box.
    DomainExit,
    /// The state or an evaluation became non-finite.
    NonFinite,
}

impl std::fmt::Display for EventKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EventKind::DomainExit => write!(f, "domain-exit"),
            EventKind::NonFinite => write!(f, "non-finite"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
}

/// Recorded closed-loop run.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub states: Vec<State>,
    pub inputs: Vec<State>,
    pub energy: Vec<f64>,
    pub residuals: Vec<f64>,
    pub events: Vec<Event>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn last_state(&self) -> Option<&State> {
        self.states.last()
    }

    /// CSV export: header `t,y1,...,yn,u1,...,um,H_d,residual`, one row per
    /// recorded sample, 17 significant digits. `offset` shifts the recorded
    /// states into physical units (e.g. adding the setpoint back onto error
    /// coordinates).
    pub fn write_csv<W: Write>(&self, offset: Option<&State>, mut w: W) -> std::io::Result<()> {
        let n = self.states.first().map_or(0, |s| s.len());
        let m = self.inputs.first().map_or(0, |u| u.len());
        write!(w, "t")?;
        for i in 1..=n {
            write!(w, ",y{i}")?;
        }
        if m == 1 {
            write!(w, ",u")?;
        } else {
            for i in 1..=m {
                write!(w, ",u{i}")?;
            }
        }
        writeln!(w, ",H_d,residual")?;
        for k in 0..self.len() {
            write!(w, "{:.16e}", self.t[k])?;
            for i in 0..n {
                let shift = offset.map_or(0.0, |o| o[i]);
                write!(w, ",{:.16e}", self.states[k][i] + shift)?;
            }
            for i in 0..m {
                write!(w, ",{:.16e}", self.inputs[k][i])?;
            }
            writeln!(w, ",{:.16e},{:.16e}", self.energy[k], self.residuals[k])?;
        }
        Ok(())
    }
}

enum StageOutcome {
    Ok(State),
    Event(EventKind),
}

fn stage(ctrl: &Controller, x: &State) -> Result<StageOutcome> {
    match ctrl.closed_loop(x) {
        Ok(v) => {
            if v.iter().any(|e| !e.is_finite()) {
                Ok(StageOutcome::Event(EventKind::NonFinite))
            } else {
                Ok(StageOutcome::Ok(v))
            }
        }
        Err(Error::Domain(_)) => Ok(StageOutcome::Event(EventKind::DomainExit)),
        Err(e) => Err(e),
    }
}

/// Integrates the closed loop from `cfg.x0` over `[0, t_end]`.
///
/// Deterministic: identical configurations produce bit-identical
/// trajectories.
pub fn simulate(ctrl: &Controller, cfg: &SimConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let sys = ctrl.system();
    if cfg.x0.len() != sys.n {
        return Err(Error::contract(format!(
            "x0 has dimension {}, expected {}",
            cfg.x0.len(),
            sys.n
        )));
    }
    if !sys.domain.contains(&cfg.x0) {
        return Err(Error::contract("x0 lies outside the domain box"));
    }

    let steps = (cfg.t_end / cfg.dt).round().max(1.0) as usize;
    let mut traj = Trajectory::default();
    let mut x = cfg.x0.clone();

    let record = |traj: &mut Trajectory, t: f64, x: &State| -> Result<()> {
        traj.t.push(t);
        traj.states.push(x.clone());
        traj.inputs.push(ctrl.control(x)?);
        traj.energy.push(ctrl.energy_at(x)?);
        traj.residuals.push(ctrl.matching_residual(x)?);
        Ok(())
    };

    'outer: for k in 0..=steps {
        let t = k as f64 * cfg.dt;
        if k % cfg.record_every == 0 {
            record(&mut traj, t, &x)?;
        }
        if k == steps {
            break;
        }
        // Classical RK4: the controller is evaluated inside the closed-loop
        // field at each stage state.
        let h = cfg.dt;
        let mut ks: Vec<State> = Vec::with_capacity(4);
        for (coef, prev) in [(0.0, None), (0.5, Some(0)), (0.5, Some(1)), (1.0, Some(2))] {
            let probe_state = match prev {
                None => x.clone(),
                Some(i) => &x + &ks[i] * (coef * h),
            };
            match stage(ctrl, &probe_state)? {
                StageOutcome::Ok(v) => ks.push(v),
                StageOutcome::Event(kind) => {
                    traj.events.push(Event { time: t, kind });
                    break 'outer;
                }
            }
        }
        let next = &x + (&ks[0] + &ks[1] * 2.0 + &ks[2] * 2.0 + &ks[3]) * (h / 6.0);
        let t_next = (k + 1) as f64 * cfg.dt;
        if next.iter().any(|e| !e.is_finite()) {
            traj.events.push(Event {
                time: t_next,
                kind: EventKind::NonFinite,
            });
            break;
        }
        if !sys.domain.contains(&next) {
            traj.events.push(Event {
                time: t_next,
                kind: EventKind::DomainExit,
            });
            break;
        }
        x = next;
    }
    Ok(traj)
}

/// Energy-monotonicity audit over a recorded trajectory.
#[derive(Debug, Clone, Copy)]
pub struct LyapunovAudit {
    /// Largest forward difference of the recorded energy.
    pub max_increase: f64,
    /// Time of the first increase beyond `tol * (1 + |H|)`, if any.
    pub first_violation: Option<f64>,
}

impl LyapunovAudit {
    pub fn clean(&self) -> bool {
        self.first_violation.is_none()
    }
}

/// Scans recorded energies for increases beyond `tol * (1 + |H|)` per step.
pub fn lyapunov_audit(traj: &Trajectory, tol: f64) -> LyapunovAudit {
    let mut max_increase = 0.0f64;
    let mut first_violation = None;
    for k in 1..traj.energy.len() {
        let inc = traj.energy[k] - traj.energy[k - 1];
        max_increase = max_increase.max(inc);
        if first_violation.is_none() && inc > tol * (1.0 + traj.energy[k - 1].abs()) {
            first_violation = Some(traj.t[k]);
        }
    }
    LyapunovAudit {
        max_increase,
        first_violation,
    }
}
