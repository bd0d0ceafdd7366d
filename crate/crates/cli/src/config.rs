//! Flat-text run configuration: `section.key = value` lines, `#` comments.
//!
//! Every key has a default; the effective configuration (defaults plus
//! overrides) is embedded in each report so runs are reproducible from the
//! report alone.

use std::collections::BTreeMap;
use std::path::PathBuf;

use idapbc_core::maglev::MaglevParams;
use idapbc_core::{KvReport, StepConfig, Tolerances};

/// All recognized keys. Unknown keys are configuration errors so typos
/// cannot silently fall back to defaults.
const KNOWN_KEYS: &[&str] = &[
    "system.name",
    "params.gamma",
    "params.k",
    "params.c",
    "params.mass",
    "params.a",
    "params.y2_star",
    "gains.alpha11",
    "gains.alpha13",
    "gains.v12",
    "gains.v13",
    "gains.p1",
    "gains.p2",
    "grid.count",
    "grid.seed",
    "tol.annihilation",
    "tol.equilibrium",
    "tol.dissipation",
    "tol.inverse",
    "tol.characteristic",
    "tol.gradient_field_symmetry",
    "tol.constant_coefficient",
    "tol.forcing_lie",
    "tol.pde",
    "tol.pde_second",
    "tol.matching",
    "tol.gradient",
    "tol.lyapunov",
    "numerics.fd_step",
    "numerics.hessian_step",
    "numerics.quad_order",
    "design.m2",
    "design.auto_m2",
    "design.margin",
    "sim.dt",
    "sim.t_end",
    "sim.x0",
    "sim.record_every",
    "sim.plot",
    "sweep.gain1",
    "sweep.values1",
    "sweep.gain2",
    "sweep.values2",
    "sweep.workers",
    "sweep.converge_tol",
    "output.dir",
];

/// Raw gain entries prior to sign validation.
#[derive(Debug, Clone, Copy)]
pub struct GainValues {
    pub alpha11: f64,
    pub alpha13: f64,
    pub v12: f64,
    pub v13: f64,
    pub p1: f64,
    pub p2: f64,
}

impl Default for GainValues {
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

impl GainValues {
    pub fn set_by_name(&mut self, name: &str, value: f64) -> Result<(), String> {
        match name {
            "alpha11" => self.alpha11 = value,
            "alpha13" => self.alpha13 = value,
            "v12" => self.v12 = value,
            "v13" => self.v13 = value,
            "p1" => self.p1 = value,
            "p2" => self.p2 = value,
            other => return Err(format!("unknown gain name '{other}'")),
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DesignCfg {
    /// Constant free gain placed on the diagonal when `auto_m2` is off.
    pub m2: f64,
    /// Use the selected gain instead of the configured constant.
    pub auto_m2: bool,
    /// Margin for the selection; `None` applies the default policy.
    pub margin: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SimCfg {
    pub dt: f64,
    pub t_end: f64,
    /// `None` uses the system's default initial state.
    pub x0: Option<Vec<f64>>,
    pub record_every: usize,
    pub plot: bool,
}

#[derive(Debug, Clone)]
pub struct SweepCfg {
    pub gain1: String,
    pub values1: Vec<f64>,
    pub gain2: String,
    pub values2: Vec<f64>,
    pub workers: usize,
    pub converge_tol: f64,
}

/// Fully typed run configuration.
#[derive(Debug, Clone)]
pub struct AppConfig {
    pub system: String,
    pub params: MaglevParams,
    pub gains: GainValues,
    pub grid_count: usize,
    pub grid_seed: u64,
    pub tol: Tolerances,
    pub steps: StepConfig,
    pub design: DesignCfg,
    pub sim: SimCfg,
    pub sweep: SweepCfg,
    pub out_dir: PathBuf,
}

/// Parses config text into a key/value map. Comments start at `#`.
pub fn parse_text(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected 'key = value', got '{line}'", lineno + 1))?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() || value.is_empty() {
            return Err(format!("line {}: empty key or value", lineno + 1));
        }
        if !KNOWN_KEYS.contains(&key) {
            return Err(format!("line {}: unknown key '{key}'", lineno + 1));
        }
        map.insert(key.to_string(), value.to_string());
    }
    Ok(map)
}

/// Applies `--set key=value` overrides on top of a parsed map.
pub fn apply_overrides(
    map: &mut BTreeMap<String, String>,
    sets: &[String],
) -> Result<(), String> {
    for s in sets {
        let (key, value) = s
            .split_once('=')
            .ok_or_else(|| format!("--set expects key=value, got '{s}'"))?;
        let key = key.trim();
        let value = value.trim();
        if !KNOWN_KEYS.contains(&key) {
            return Err(format!("--set: unknown key '{key}'"));
        }
        map.insert(key.to_string(), value.to_string());
    }
    Ok(())
}

fn get_f64(map: &BTreeMap<String, String>, key: &str, default: f64) -> Result<f64, String> {
    match map.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse::<f64>()
            .map_err(|_| format!("{key}: expected a number, got '{v}'")),
    }
}

fn get_usize(map: &BTreeMap<String, String>, key: &str, default: usize) -> Result<usize, String> {
    match map.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse::<usize>()
            .map_err(|_| format!("{key}: expected a non-negative integer, got '{v}'")),
    }
}

fn get_bool(map: &BTreeMap<String, String>, key: &str, default: bool) -> Result<bool, String> {
    match map.get(key) {
        None => Ok(default),
        Some(v) => match v.as_str() {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            other => Err(format!("{key}: expected true/false, got '{other}'")),
        },
    }
}

fn get_list(map: &BTreeMap<String, String>, key: &str) -> Result<Option<Vec<f64>>, String> {
    match map.get(key) {
        None => Ok(None),
        Some(v) => {
            let mut out = Vec::new();
            for part in v.split(',') {
                let part = part.trim();
                if part.is_empty() {
                    continue;
                }
                out.push(
                    part.parse::<f64>()
                        .map_err(|_| format!("{key}: expected a number list, got '{part}'"))?,
                );
            }
            Ok(Some(out))
        }
    }
}

impl AppConfig {
    pub fn from_map(map: &BTreeMap<String, String>, out_flag: Option<PathBuf>) -> Result<Self, String> {
        let dp = MaglevParams::default();
        let params = MaglevParams {
            gamma: get_f64(map, "params.gamma", dp.gamma)?,
            k: get_f64(map, "params.k", dp.k)?,
            c: get_f64(map, "params.c", dp.c)?,
            mass: get_f64(map, "params.mass", dp.mass)?,
            a: get_f64(map, "params.a", dp.a)?,
            y2_star: get_f64(map, "params.y2_star", dp.y2_star)?,
        };
        let dg = GainValues::default();
        let gains = GainValues {
            alpha11: get_f64(map, "gains.alpha11", dg.alpha11)?,
            alpha13: get_f64(map, "gains.alpha13", dg.alpha13)?,
            v12: get_f64(map, "gains.v12", dg.v12)?,
            v13: get_f64(map, "gains.v13", dg.v13)?,
            p1: get_f64(map, "gains.p1", dg.p1)?,
            p2: get_f64(map, "gains.p2", dg.p2)?,
        };
        let dt = Tolerances::default();
        let tol = Tolerances {
            annihilation: get_f64(map, "tol.annihilation", dt.annihilation)?,
            equilibrium: get_f64(map, "tol.equilibrium", dt.equilibrium)?,
            dissipation: get_f64(map, "tol.dissipation", dt.dissipation)?,
            inverse: get_f64(map, "tol.inverse", dt.inverse)?,
            characteristic: get_f64(map, "tol.characteristic", dt.characteristic)?,
            gradient_field_symmetry: get_f64(
                map,
                "tol.gradient_field_symmetry",
                dt.gradient_field_symmetry,
            )?,
            constant_coefficient: get_f64(map, "tol.constant_coefficient", dt.constant_coefficient)?,
            forcing_lie: get_f64(map, "tol.forcing_lie", dt.forcing_lie)?,
            pde: get_f64(map, "tol.pde", dt.pde)?,
            pde_second: get_f64(map, "tol.pde_second", dt.pde_second)?,
            matching: get_f64(map, "tol.matching", dt.matching)?,
            gradient: get_f64(map, "tol.gradient", dt.gradient)?,
            lyapunov: get_f64(map, "tol.lyapunov", dt.lyapunov)?,
        };
        let ds = StepConfig::default();
        let steps = StepConfig {
            fd_step: get_f64(map, "numerics.fd_step", ds.fd_step)?,
            hessian_step: get_f64(map, "numerics.hessian_step", ds.hessian_step)?,
            quad_order: get_usize(map, "numerics.quad_order", ds.quad_order)?,
        };
        steps.validate().map_err(|e| e.to_string())?;
        let design = DesignCfg {
            m2: get_f64(map, "design.m2", 0.0)?,
            auto_m2: get_bool(map, "design.auto_m2", false)?,
            margin: match map.get("design.margin") {
                None => None,
                Some(_) => Some(get_f64(map, "design.margin", 0.0)?),
            },
        };
        let sim = SimCfg {
            dt: get_f64(map, "sim.dt", 1e-4)?,
            t_end: get_f64(map, "sim.t_end", 2.0)?,
            x0: get_list(map, "sim.x0")?,
            record_every: get_usize(map, "sim.record_every", 10)?,
            plot: get_bool(map, "sim.plot", true)?,
        };
        let sweep = SweepCfg {
            gain1: map.get("sweep.gain1").cloned().unwrap_or_else(|| "p1".into()),
            values1: get_list(map, "sweep.values1")?.unwrap_or_default(),
            gain2: map.get("sweep.gain2").cloned().unwrap_or_else(|| "p2".into()),
            values2: get_list(map, "sweep.values2")?.unwrap_or_else(|| vec![dg.p2]),
            workers: get_usize(map, "sweep.workers", 4)?,
            converge_tol: get_f64(map, "sweep.converge_tol", 1e-3)?,
        };
        let out_dir = out_flag.unwrap_or_else(|| {
            PathBuf::from(map.get("output.dir").cloned().unwrap_or_else(|| "out".into()))
        });
        Ok(Self {
            system: map.get("system.name").cloned().unwrap_or_else(|| "maglev".into()),
            params,
            gains,
            grid_count: get_usize(map, "grid.count", 512)?,
            grid_seed: get_usize(map, "grid.seed", 42)? as u64,
            tol,
            steps,
            design,
            sim,
            sweep,
            out_dir,
        })
    }

    /// The full effective configuration, defaults included.
    pub fn effective_kv(&self) -> KvReport {
        let mut r = KvReport::new();
        r.push("config.system.name", &self.system);
        r.push_f64("config.params.gamma", self.params.gamma);
        r.push_f64("config.params.k", self.params.k);
        r.push_f64("config.params.c", self.params.c);
        r.push_f64("config.params.mass", self.params.mass);
        r.push_f64("config.params.a", self.params.a);
        r.push_f64("config.params.y2_star", self.params.y2_star);
        r.push_f64("config.gains.alpha11", self.gains.alpha11);
        r.push_f64("config.gains.alpha13", self.gains.alpha13);
        r.push_f64("config.gains.v12", self.gains.v12);
        r.push_f64("config.gains.v13", self.gains.v13);
        r.push_f64("config.gains.p1", self.gains.p1);
        r.push_f64("config.gains.p2", self.gains.p2);
        r.push("config.grid.count", self.grid_count);
        r.push("config.grid.seed", self.grid_seed);
        r.push_f64("config.tol.annihilation", self.tol.annihilation);
        r.push_f64("config.tol.equilibrium", self.tol.equilibrium);
        r.push_f64("config.tol.dissipation", self.tol.dissipation);
        r.push_f64("config.tol.inverse", self.tol.inverse);
        r.push_f64("config.tol.characteristic", self.tol.characteristic);
        r.push_f64(
            "config.tol.gradient_field_symmetry",
            self.tol.gradient_field_symmetry,
        );
        r.push_f64("config.tol.constant_coefficient", self.tol.constant_coefficient);
        r.push_f64("config.tol.forcing_lie", self.tol.forcing_lie);
        r.push_f64("config.tol.pde", self.tol.pde);
        r.push_f64("config.tol.pde_second", self.tol.pde_second);
        r.push_f64("config.tol.matching", self.tol.matching);
        r.push_f64("config.tol.gradient", self.tol.gradient);
        r.push_f64("config.tol.lyapunov", self.tol.lyapunov);
        r.push_f64("config.numerics.fd_step", self.steps.fd_step);
        r.push_f64("config.numerics.hessian_step", self.steps.hessian_step);
        r.push("config.numerics.quad_order", self.steps.quad_order);
        r.push_f64("config.design.m2", self.design.m2);
        r.push_bool("config.design.auto_m2", self.design.auto_m2);
        match self.design.margin {
            Some(m) => r.push_f64("config.design.margin", m),
            None => r.push("config.design.margin", "default"),
        }
        r.push_f64("config.sim.dt", self.sim.dt);
        r.push_f64("config.sim.t_end", self.sim.t_end);
        match &self.sim.x0 {
            Some(x0) => r.push(
                "config.sim.x0",
                x0.iter()
                    .map(|v| format!("{v}"))
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            None => r.push("config.sim.x0", "default"),
        }
        r.push("config.sim.record_every", self.sim.record_every);
        r.push_bool("config.sim.plot", self.sim.plot);
        r.push("config.sweep.gain1", &self.sweep.gain1);
        r.push(
            "config.sweep.values1",
            self.sweep
                .values1
                .iter()
                .map(|v| format!("{v}"))
                .collect::<Vec<_>>()
                .join(","),
        );
        r.push("config.sweep.gain2", &self.sweep.gain2);
        r.push(
            "config.sweep.values2",
            self.sweep
                .values2
                .iter()
                .map(|v| format!("{v}"))
                .collect::<Vec<_>>()
                .join(","),
        );
        r.push("config.sweep.workers", self.sweep.workers);
        r.push_f64("config.sweep.converge_tol", self.sweep.converge_tol);
        r.push("config.output.dir", self.out_dir.display());
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_typed_values_with_comments() {
        let text = "\
# run setup
system.name = maglev
gains.p1 = 100   # below the bound
sim.x0 = 0, -0.002, 0
design.auto_m2 = true
";
        let map = parse_text(text).unwrap();
        let cfg = AppConfig::from_map(&map, None).unwrap();
        assert_eq!(cfg.gains.p1, 100.0);
        assert_eq!(cfg.sim.x0, Some(vec![0.0, -0.002, 0.0]));
        assert!(cfg.design.auto_m2);
        assert_eq!(cfg.gains.p2, 20.0); // default survives
    }

    #[test]
    fn unknown_key_is_an_error() {
        assert!(parse_text("gains.p9 = 3").is_err());
        let mut map = BTreeMap::new();
        assert!(apply_overrides(&mut map, &["nope=1".into()]).is_err());
    }

    #[test]
    fn overrides_win() {
        let mut map = parse_text("gains.p1 = 100").unwrap();
        apply_overrides(&mut map, &["gains.p1=250".into()]).unwrap();
        let cfg = AppConfig::from_map(&map, None).unwrap();
        assert_eq!(cfg.gains.p1, 250.0);
    }

    #[test]
    fn effective_config_lists_defaults() {
        let cfg = AppConfig::from_map(&BTreeMap::new(), None).unwrap();
        let kv = cfg.effective_kv();
        assert!(kv.get("config.gains.p1").is_some());
        assert!(kv.get("config.sim.dt").is_some());
    }
}
