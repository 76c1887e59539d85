//! Scenario configuration: built-in study cases and the TOML config format.
//!
//! A scenario bundles a fleet, the load steps to study, and the knobs of
//! every pipeline stage. Config files store coefficients at full value in
//! sections `[fleet]`, `[dg.N]`, `[loads]`, `[oracle]`, `[fit]`, `[droop]`,
//! `[sim]`.

use crate::cost::{DgSpec, Fleet};
use crate::dispatch::OracleConfig;
use crate::error::{Error, Result};
use crate::osf::DEFAULT_SLOPE_TOL;
use crate::sim::DynParams;
use crate::sosf::FitSpec;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

pub const BUILTIN_NAMES: [&str; 3] = ["case1", "case2", "case3"];

/// Frequency-budget inputs of droop synthesis (the gain is derived).
#[derive(Debug, Clone, PartialEq)]
pub struct DroopInput {
    pub f_star: f64,
    pub delta_f_max: f64,
}

impl Default for DroopInput {
    fn default() -> Self {
        DroopInput {
            f_star: 50.0,
            delta_f_max: 0.5,
        }
    }
}

/// Everything one pipeline run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub fleet: Fleet,
    pub load_steps: Vec<f64>,
    pub oracle: OracleConfig,
    /// Load-grid resolution of the solution-function sweep.
    pub grid_points: usize,
    pub slope_tol: f64,
    pub fit: FitSpec,
    pub droop: DroopInput,
    pub dyn_params: DynParams,
    /// Transient plateau duration per load step (s).
    pub plateau_s: f64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.oracle.validate()?;
        if self.grid_points < 2 {
            return Err(Error::Scenario("grid_points must be >= 2".into()));
        }
        if !self.slope_tol.is_finite() || self.slope_tol <= 0.0 {
            return Err(Error::Scenario("slope_tol must be > 0".into()));
        }
        if !self.plateau_s.is_finite() || self.plateau_s <= 0.0 {
            return Err(Error::Scenario("plateau duration must be > 0".into()));
        }
        if self.load_steps.is_empty() {
            return Err(Error::Scenario("need at least one load step".into()));
        }
        for &l in &self.load_steps {
            if !(0.0..=self.fleet.p_l_max()).contains(&l) {
                return Err(Error::Scenario(format!(
                    "load step {l} outside [0, {}]",
                    self.fleet.p_l_max()
                )));
            }
        }
        Ok(())
    }
}

fn dg(id: u32, a: f64, b: f64, c: f64, d: f64, e: f64, p_max: f64) -> DgSpec {
    DgSpec {
        id,
        a,
        b,
        c,
        d,
        e,
        p_max,
    }
}

/// The three built-in study cases. Coefficients are the published study
/// values at full scale.
pub fn builtin(name: &str) -> Option<Scenario> {
    let common_tail = [
        dg(2, 0.0, 5.4e-3, 4.0e-3, 2.0e-3, 0.286, 10.0),
        dg(3, 0.0, 3.3e-3, 1.1e-2, 1.0e-3, 0.286, 8.0),
        dg(4, 0.0, 2.4e-3, 8.0e-3, 4.0e-3, 0.286, 8.0),
    ];
    match name {
        "case1" => Some(Scenario {
            name: "case1".into(),
            fleet: Fleet::new(
                std::iter::once(dg(1, 0.0, 4.0e-3, 4.0e-3, 3.0e-3, 0.286, 10.0))
                    .chain(common_tail.iter().cloned())
                    .collect(),
                36.0,
            )
            .expect("builtin fleet"),
            load_steps: vec![10.0, 15.0, 20.0],
            oracle: OracleConfig::default(),
            grid_points: 361,
            slope_tol: DEFAULT_SLOPE_TOL,
            fit: FitSpec::default(),
            droop: DroopInput::default(),
            dyn_params: DynParams {
                kappa_f: 100.0,
                ..DynParams::default()
            },
            plateau_s: 3.0,
        }),
        "case2" => Some(Scenario {
            name: "case2".into(),
            fleet: Fleet::new(
                std::iter::once(dg(1, 4.0e-4, -5.0e-3, 6.0e-2, 0.0, 0.0, 10.0))
                    .chain(common_tail.iter().cloned())
                    .collect(),
                36.0,
            )
            .expect("builtin fleet"),
            load_steps: vec![10.0, 15.0, 20.0],
            oracle: OracleConfig::default(),
            grid_points: 361,
            slope_tol: DEFAULT_SLOPE_TOL,
            fit: FitSpec::default(),
            droop: DroopInput::default(),
            dyn_params: DynParams {
                kappa_f: 200.0,
                ..DynParams::default()
            },
            plateau_s: 3.0,
        }),
        "case3" => Some(Scenario {
            name: "case3".into(),
            fleet: Fleet::new(
                vec![
                    dg(1, 0.0, 0.8, 4.0e-2, 2.0e-3, 2.86, 1.0),
                    dg(2, 0.0, 0.24, 8.0e-2, 2.0e-3, 2.86, 1.0),
                ],
                2.0,
            )
            .expect("builtin fleet"),
            load_steps: vec![0.8, 1.2, 1.5],
            oracle: OracleConfig {
                grid_step: 1e-3,
                refine: true,
                refine_tol: 1e-7,
            },
            grid_points: 401,
            slope_tol: DEFAULT_SLOPE_TOL,
            fit: FitSpec::default(),
            droop: DroopInput::default(),
            dyn_params: DynParams {
                kappa_f: 20.0,
                ..DynParams::default()
            },
            plateau_s: 3.0,
        }),
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// Config file schema
// ---------------------------------------------------------------------------

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default)]
    scenario: MetaSection,
    fleet: FleetSection,
    dg: BTreeMap<String, DgSection>,
    loads: LoadsSection,
    #[serde(default)]
    oracle: OracleSection,
    #[serde(default)]
    fit: FitSection,
    #[serde(default)]
    droop: DroopSection,
    #[serde(default)]
    sim: SimSection,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaSection {
    #[serde(default)]
    name: Option<String>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FleetSection {
    #[serde(default)]
    p_l_max: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DgSection {
    #[serde(default)]
    a: f64,
    #[serde(default)]
    b: f64,
    #[serde(default)]
    c: f64,
    #[serde(default)]
    d: f64,
    #[serde(default)]
    e: f64,
    p_max: f64,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LoadsSection {
    #[serde(default)]
    steps: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OracleSection {
    grid_step: f64,
    refine: bool,
    refine_tol: f64,
    grid_points: usize,
}

impl Default for OracleSection {
    fn default() -> Self {
        let cfg = OracleConfig::default();
        OracleSection {
            grid_step: cfg.grid_step,
            refine: cfg.refine,
            refine_tol: cfg.refine_tol,
            grid_points: 361,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FitSection {
    epsilon: f64,
    slope_tol: f64,
}

impl Default for FitSection {
    fn default() -> Self {
        FitSection {
            epsilon: FitSpec::default().epsilon,
            slope_tol: DEFAULT_SLOPE_TOL,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DroopSection {
    f_star: f64,
    delta_f_max: f64,
}

impl Default for DroopSection {
    fn default() -> Self {
        let d = DroopInput::default();
        DroopSection {
            f_star: d.f_star,
            delta_f_max: d.delta_f_max,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimSection {
    kappa_f: f64,
    kappa_e: f64,
    dt: f64,
    record_stride: usize,
    plateau_s: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        let d = DynParams::default();
        SimSection {
            kappa_f: d.kappa_f,
            kappa_e: d.kappa_e,
            dt: d.dt,
            record_stride: d.record_stride,
            plateau_s: 3.0,
        }
    }
}

fn scenario_from_file(file: ScenarioFile, fallback_name: &str) -> Result<Scenario> {
    let mut dgs: Vec<(u32, DgSection)> = Vec::with_capacity(file.dg.len());
    for (key, sec) in file.dg {
        let id: u32 = key
            .parse()
            .map_err(|_| Error::Scenario(format!("dg section key '{key}' is not an integer id")))?;
        dgs.push((id, sec));
    }
    dgs.sort_by_key(|(id, _)| *id);
    let specs: Vec<DgSpec> = dgs
        .into_iter()
        .map(|(id, s)| DgSpec::new(id, s.a, s.b, s.c, s.d, s.e, s.p_max))
        .collect::<Result<_>>()?;
    let capacity: f64 = specs.iter().map(|d| d.p_max).sum();
    let fleet = Fleet::new(specs, file.fleet.p_l_max.unwrap_or(capacity))?;
    let scenario = Scenario {
        name: file
            .scenario
            .name
            .unwrap_or_else(|| fallback_name.to_string()),
        fleet,
        load_steps: file.loads.steps,
        oracle: OracleConfig {
            grid_step: file.oracle.grid_step,
            refine: file.oracle.refine,
            refine_tol: file.oracle.refine_tol,
        },
        grid_points: file.oracle.grid_points,
        slope_tol: file.fit.slope_tol,
        fit: FitSpec {
            epsilon: file.fit.epsilon,
        },
        droop: DroopInput {
            f_star: file.droop.f_star,
            delta_f_max: file.droop.delta_f_max,
        },
        dyn_params: DynParams {
            kappa_f: file.sim.kappa_f,
            kappa_e: file.sim.kappa_e,
            dt: file.sim.dt,
            record_stride: file.sim.record_stride,
        },
        plateau_s: file.sim.plateau_s,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Loads a scenario from a built-in name or a TOML config path.
pub fn load_scenario(name_or_path: &str) -> Result<Scenario> {
    if let Some(s) = builtin(name_or_path) {
        return Ok(s);
    }
    let path = Path::new(name_or_path);
    if !path.exists() {
        return Err(Error::Scenario(format!(
            "'{name_or_path}' is neither a built-in scenario ({}) nor a file",
            BUILTIN_NAMES.join(", ")
        )));
    }
    let text = std::fs::read_to_string(path)?;
    let file: ScenarioFile =
        toml::from_str(&text).map_err(|e| Error::Scenario(format!("{}: {e}", path.display())))?;
    let fallback = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("scenario");
    scenario_from_file(file, fallback)
}

/// Serializes a scenario to the config format; parsing the result yields the
/// same scenario (floats round-trip exactly).
pub fn scenario_to_toml(s: &Scenario) -> String {
    let file = ScenarioFile {
        scenario: MetaSection {
            name: Some(s.name.clone()),
        },
        fleet: FleetSection {
            p_l_max: Some(s.fleet.p_l_max()),
        },
        dg: s
            .fleet
            .dgs()
            .iter()
            .map(|d| {
                (
                    d.id.to_string(),
                    DgSection {
                        a: d.a,
                        b: d.b,
                        c: d.c,
                        d: d.d,
                        e: d.e,
                        p_max: d.p_max,
                    },
                )
            })
            .collect(),
        loads: LoadsSection {
            steps: s.load_steps.clone(),
        },
        oracle: OracleSection {
            grid_step: s.oracle.grid_step,
            refine: s.oracle.refine,
            refine_tol: s.oracle.refine_tol,
            grid_points: s.grid_points,
        },
        fit: FitSection {
            epsilon: s.fit.epsilon,
            slope_tol: s.slope_tol,
        },
        droop: DroopSection {
            f_star: s.droop.f_star,
            delta_f_max: s.droop.delta_f_max,
        },
        sim: SimSection {
            kappa_f: s.dyn_params.kappa_f,
            kappa_e: s.dyn_params.kappa_e,
            dt: s.dyn_params.dt,
            record_stride: s.dyn_params.record_stride,
            plateau_s: s.plateau_s,
        },
    };
    toml::to_string_pretty(&file).expect("scenario serialization")
}
