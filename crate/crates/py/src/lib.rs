//! Python bindings: the main types and operations of the droop-dispatch
//! pipeline, exposed as the `ecodroop_py` extension module.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use ecodroop::dispatch::DispatchSolver;
use ecodroop::pipeline::Stage;
use ecodroop::sim::LoadStep;

fn err(e: ecodroop::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "DgSpec", from_py_object)]
#[derive(Clone)]
struct PyDgSpec {
    inner: ecodroop::DgSpec,
}

#[pymethods]
impl PyDgSpec {
    #[new]
    #[pyo3(signature = (id, a=0.0, b=0.0, c=0.0, d=0.0, e=0.0, p_max=1.0))]
    fn new(id: u32, a: f64, b: f64, c: f64, d: f64, e: f64, p_max: f64) -> PyResult<Self> {
        Ok(PyDgSpec {
            inner: ecodroop::DgSpec::new(id, a, b, c, d, e, p_max).map_err(err)?,
        })
    }

    #[getter]
    fn id(&self) -> u32 {
        self.inner.id
    }

    #[getter]
    fn p_max(&self) -> f64 {
        self.inner.p_max
    }

    fn cost(&self, p: f64) -> PyResult<f64> {
        self.inner.cost(p).map_err(err)
    }

    fn marginal_cost(&self, p: f64) -> PyResult<f64> {
        self.inner.marginal_cost(p).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "DgSpec(id={}, a={}, b={}, c={}, d={}, e={}, p_max={})",
            self.inner.id,
            self.inner.a,
            self.inner.b,
            self.inner.c,
            self.inner.d,
            self.inner.e,
            self.inner.p_max
        )
    }
}

#[pyclass(name = "Fleet", from_py_object)]
#[derive(Clone)]
struct PyFleet {
    inner: ecodroop::Fleet,
}

#[pymethods]
impl PyFleet {
    #[new]
    fn new(dgs: Vec<PyDgSpec>, p_l_max: f64) -> PyResult<Self> {
        let specs = dgs.into_iter().map(|d| d.inner).collect();
        Ok(PyFleet {
            inner: ecodroop::Fleet::new(specs, p_l_max).map_err(err)?,
        })
    }

    #[getter]
    fn p_l_max(&self) -> f64 {
        self.inner.p_l_max()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn dg(&self, index: usize) -> PyResult<PyDgSpec> {
        self.inner
            .dgs()
            .get(index)
            .map(|d| PyDgSpec { inner: d.clone() })
            .ok_or_else(|| PyValueError::new_err(format!("dg index {index} out of range")))
    }

    fn total_cost(&self, powers: Vec<f64>) -> PyResult<f64> {
        self.inner.total_cost(&powers).map_err(err)
    }
}

#[pyclass(name = "OracleConfig", from_py_object)]
#[derive(Clone)]
struct PyOracleConfig {
    inner: ecodroop::OracleConfig,
}

#[pymethods]
impl PyOracleConfig {
    #[new]
    #[pyo3(signature = (grid_step=0.01, refine=true, refine_tol=1e-6))]
    fn new(grid_step: f64, refine: bool, refine_tol: f64) -> Self {
        PyOracleConfig {
            inner: ecodroop::OracleConfig {
                grid_step,
                refine,
                refine_tol,
            },
        }
    }
}

#[pyclass(name = "Allocation")]
struct PyAllocation {
    #[pyo3(get)]
    powers: Vec<f64>,
    #[pyo3(get)]
    cost: f64,
    #[pyo3(get)]
    load: f64,
}

impl From<ecodroop::Allocation> for PyAllocation {
    fn from(a: ecodroop::Allocation) -> Self {
        PyAllocation {
            powers: a.powers,
            cost: a.cost,
            load: a.load,
        }
    }
}

#[pyclass(name = "OsfTable")]
struct PyOsfTable {
    inner: ecodroop::OsfTable,
}

#[pymethods]
impl PyOsfTable {
    #[getter]
    fn loads(&self) -> Vec<f64> {
        self.inner.loads.clone()
    }

    #[getter]
    fn costs(&self) -> Vec<f64> {
        self.inner.costs.clone()
    }

    fn column(&self, dg: usize) -> PyResult<Vec<f64>> {
        if dg >= self.inner.n_dgs() {
            return Err(PyValueError::new_err(format!("dg index {dg} out of range")));
        }
        Ok(self.inner.column(dg).to_vec())
    }

    fn sum_residual(&self) -> f64 {
        self.inner.max_sum_residual()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyclass(name = "CriterionReport")]
struct PyCriterionReport {
    inner: ecodroop::CriterionReport,
}

#[pymethods]
impl PyCriterionReport {
    #[getter]
    fn criterion_met(&self) -> bool {
        self.inner.criterion_met
    }

    /// IDs of DGs whose solution function is not strictly increasing.
    #[getter]
    fn flagged(&self) -> Vec<u32> {
        self.inner
            .per_dg
            .iter()
            .filter(|v| !v.monotone)
            .map(|v| v.dg_id)
            .collect()
    }

    /// Violation intervals of one DG as (load_lo, load_hi, power_lo, power_hi).
    fn violations(&self, dg: usize) -> PyResult<Vec<(f64, f64, f64, f64)>> {
        let v = self
            .inner
            .per_dg
            .get(dg)
            .ok_or_else(|| PyValueError::new_err(format!("dg index {dg} out of range")))?;
        Ok(v.violations
            .iter()
            .map(|iv| {
                (
                    iv.load_range.0,
                    iv.load_range.1,
                    iv.power_range.0,
                    iv.power_range.1,
                )
            })
            .collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "CriterionReport(criterion_met={}, flagged={:?})",
            self.inner.criterion_met,
            self.inner
                .per_dg
                .iter()
                .filter(|v| !v.monotone)
                .map(|v| v.dg_id)
                .collect::<Vec<_>>()
        )
    }
}

#[pyclass(name = "SosfFit")]
struct PySosfFit {
    inner: ecodroop::SosfFit,
}

#[pymethods]
impl PySosfFit {
    #[getter]
    fn objective(&self) -> f64 {
        self.inner.objective
    }

    #[getter]
    fn fitted_dgs(&self) -> Vec<usize> {
        self.inner.fitted_dgs.clone()
    }

    /// Fitted curve values of one DG over the sweep grid.
    fn values(&self, dg: usize) -> PyResult<Vec<f64>> {
        self.inner
            .curves
            .get(dg)
            .map(|c| c.ys().to_vec())
            .ok_or_else(|| PyValueError::new_err(format!("dg index {dg} out of range")))
    }
}

#[pyclass(name = "DroopSet")]
struct PyDroopSet {
    inner: ecodroop::DroopSet,
}

#[pymethods]
impl PyDroopSet {
    #[getter]
    fn gain(&self) -> f64 {
        self.inner.config.gain
    }

    #[getter]
    fn f_star(&self) -> f64 {
        self.inner.config.f_star
    }

    #[getter]
    fn delta_f_max(&self) -> f64 {
        self.inner.config.delta_f_max
    }

    /// Droop knots of one DG: (powers_kw, freq_drops_hz).
    fn droop_knots(&self, dg: usize) -> PyResult<(Vec<f64>, Vec<f64>)> {
        self.inner
            .curves
            .get(dg)
            .map(|dc| (dc.curve.xs().to_vec(), dc.curve.ys().to_vec()))
            .ok_or_else(|| PyValueError::new_err(format!("dg index {dg} out of range")))
    }

    /// Frequency drop of one DG at output power `p`.
    fn freq_drop(&self, dg: usize, p: f64) -> PyResult<f64> {
        self.inner
            .curves
            .get(dg)
            .ok_or_else(|| PyValueError::new_err(format!("dg index {dg} out of range")))?
            .freq_drop(p)
            .map_err(err)
    }
}

#[pyclass(name = "SteadyState")]
struct PySteadyState {
    #[pyo3(get)]
    load: f64,
    #[pyo3(get)]
    powers: Vec<f64>,
    #[pyo3(get)]
    frequency: f64,
    #[pyo3(get)]
    droop_value: f64,
    #[pyo3(get)]
    achieved_cost: f64,
    #[pyo3(get)]
    optimal_cost: f64,
    #[pyo3(get)]
    gap_rel: f64,
}

#[pyclass(name = "Trajectory")]
struct PyTrajectory {
    inner: ecodroop::Trajectory,
}

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.times.clone()
    }

    fn powers(&self, dg: usize) -> PyResult<Vec<f64>> {
        self.inner
            .powers
            .get(dg)
            .cloned()
            .ok_or_else(|| PyValueError::new_err(format!("dg index {dg} out of range")))
    }

    fn frequencies(&self, dg: usize) -> PyResult<Vec<f64>> {
        self.inner
            .frequencies
            .get(dg)
            .cloned()
            .ok_or_else(|| PyValueError::new_err(format!("dg index {dg} out of range")))
    }

    #[getter]
    fn plateau_finals(&self) -> Vec<Vec<f64>> {
        self.inner.plateau_finals.clone()
    }
}

#[pyclass(name = "Scenario")]
struct PyScenario {
    inner: ecodroop::Scenario,
}

#[pymethods]
impl PyScenario {
    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn load_steps(&self) -> Vec<f64> {
        self.inner.load_steps.clone()
    }

    #[getter]
    fn grid_points(&self) -> usize {
        self.inner.grid_points
    }

    #[setter]
    fn set_grid_points(&mut self, n: usize) {
        self.inner.grid_points = n;
    }

    fn fleet(&self) -> PyFleet {
        PyFleet {
            inner: self.inner.fleet.clone(),
        }
    }

    fn to_toml(&self) -> String {
        ecodroop::scenario_to_toml(&self.inner)
    }
}

#[pyfunction]
#[pyo3(signature = (fleet, p_l, cfg=None))]
fn solve_dispatch(
    fleet: &PyFleet,
    p_l: f64,
    cfg: Option<PyOracleConfig>,
) -> PyResult<PyAllocation> {
    let cfg = cfg.map(|c| c.inner).unwrap_or_default();
    ecodroop::solve_dispatch(&fleet.inner, p_l, &cfg)
        .map(Into::into)
        .map_err(err)
}

#[pyfunction]
fn exhaustive_oracle(fleet: &PyFleet, p_l: f64, step: f64) -> PyResult<PyAllocation> {
    ecodroop::exhaustive_oracle(&fleet.inner, p_l, step)
        .map(Into::into)
        .map_err(err)
}

#[pyfunction]
fn dual_multiplier(fleet: &PyFleet, alloc: &PyAllocation) -> PyResult<Option<f64>> {
    let a = ecodroop::Allocation {
        powers: alloc.powers.clone(),
        cost: alloc.cost,
        load: alloc.load,
    };
    ecodroop::dual_multiplier(&fleet.inner, &a).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (fleet, grid_points, cfg=None))]
fn sweep_osf(
    fleet: &PyFleet,
    grid_points: usize,
    cfg: Option<PyOracleConfig>,
) -> PyResult<PyOsfTable> {
    let cfg = cfg.map(|c| c.inner).unwrap_or_default();
    ecodroop::sweep_osf(&fleet.inner, grid_points, &cfg)
        .map(|inner| PyOsfTable { inner })
        .map_err(err)
}

#[pyfunction]
#[pyo3(signature = (table, fleet, slope_tol=1e-4))]
fn check_monotonicity(table: &PyOsfTable, fleet: &PyFleet, slope_tol: f64) -> PyCriterionReport {
    PyCriterionReport {
        inner: ecodroop::check_monotonicity(&table.inner, &fleet.inner, slope_tol),
    }
}

#[pyfunction]
fn verify_sum(table: &PyOsfTable) -> f64 {
    ecodroop::verify_sum(&table.inner)
}

#[pyfunction]
#[pyo3(signature = (table, report, epsilon=0.02))]
fn fit_sosf(table: &PyOsfTable, report: &PyCriterionReport, epsilon: f64) -> PyResult<PySosfFit> {
    ecodroop::fit_sosf(&table.inner, &report.inner, &ecodroop::FitSpec { epsilon })
        .map(|inner| PySosfFit { inner })
        .map_err(err)
}

#[pyfunction]
#[pyo3(signature = (fit, fleet, f_star=50.0, delta_f_max=0.5))]
fn build_droop(
    fit: &PySosfFit,
    fleet: &PyFleet,
    f_star: f64,
    delta_f_max: f64,
) -> PyResult<PyDroopSet> {
    let ids: Vec<u32> = fleet.inner.dgs().iter().map(|d| d.id).collect();
    ecodroop::build_droop(&fit.inner.curves, &ids, f_star, delta_f_max)
        .map(|inner| PyDroopSet { inner })
        .map_err(err)
}

#[pyfunction]
#[pyo3(signature = (fleet, droops, p_l, cfg=None))]
fn solve_steady_state(
    fleet: &PyFleet,
    droops: &PyDroopSet,
    p_l: f64,
    cfg: Option<PyOracleConfig>,
) -> PyResult<PySteadyState> {
    let cfg = cfg.map(|c| c.inner).unwrap_or_default();
    let solver = DispatchSolver::new(&fleet.inner, &cfg).map_err(err)?;
    let ss =
        ecodroop::solve_steady_state(&fleet.inner, &droops.inner, &solver, p_l).map_err(err)?;
    Ok(PySteadyState {
        load: ss.load,
        powers: ss.powers,
        frequency: ss.frequency,
        droop_value: ss.droop_value,
        achieved_cost: ss.achieved_cost,
        optimal_cost: ss.optimal_cost,
        gap_rel: ss.gap_rel,
    })
}

#[pyfunction]
#[pyo3(signature = (droops, steps, kappa_f=100.0, kappa_e=5.0, dt=1e-3, record_stride=1))]
fn simulate_transient(
    droops: &PyDroopSet,
    steps: Vec<(f64, f64)>,
    kappa_f: f64,
    kappa_e: f64,
    dt: f64,
    record_stride: usize,
) -> PyResult<PyTrajectory> {
    let profile: Vec<LoadStep> = steps
        .into_iter()
        .map(|(duration_s, level_kw)| LoadStep {
            duration_s,
            level_kw,
        })
        .collect();
    let params = ecodroop::DynParams {
        kappa_f,
        kappa_e,
        dt,
        record_stride,
    };
    ecodroop::simulate_transient(&droops.inner, &profile, &params)
        .map(|inner| PyTrajectory { inner })
        .map_err(err)
}

#[pyfunction]
fn load_scenario(name_or_path: &str) -> PyResult<PyScenario> {
    ecodroop::load_scenario(name_or_path)
        .map(|inner| PyScenario { inner })
        .map_err(err)
}

#[pyfunction]
fn run_pipeline(scenario: &PyScenario, stage: &str, out_dir: &str) -> PyResult<Vec<String>> {
    let stage: Stage = stage.parse().map_err(err)?;
    let outputs = ecodroop::run_pipeline(&scenario.inner, stage, std::path::Path::new(out_dir))
        .map_err(err)?;
    Ok(outputs
        .files
        .iter()
        .map(|p| p.display().to_string())
        .collect())
}

#[pymodule]
fn ecodroop_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDgSpec>()?;
    m.add_class::<PyFleet>()?;
    m.add_class::<PyOracleConfig>()?;
    m.add_class::<PyAllocation>()?;
    m.add_class::<PyOsfTable>()?;
    m.add_class::<PyCriterionReport>()?;
    m.add_class::<PySosfFit>()?;
    m.add_class::<PyDroopSet>()?;
    m.add_class::<PySteadyState>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PyScenario>()?;
    m.add_function(wrap_pyfunction!(solve_dispatch, m)?)?;
    m.add_function(wrap_pyfunction!(exhaustive_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(dual_multiplier, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_osf, m)?)?;
    m.add_function(wrap_pyfunction!(check_monotonicity, m)?)?;
    m.add_function(wrap_pyfunction!(verify_sum, m)?)?;
    m.add_function(wrap_pyfunction!(fit_sosf, m)?)?;
    m.add_function(wrap_pyfunction!(build_droop, m)?)?;
    m.add_function(wrap_pyfunction!(solve_steady_state, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_transient, m)?)?;
    m.add_function(wrap_pyfunction!(load_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}
