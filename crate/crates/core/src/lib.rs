//! Decides whether a microgrid's economic dispatch is achievable by fully
//! decentralized P-f droop control, synthesizes the (sub)optimal droop
//! curves, and verifies the result by simulation against a global-optimum
//! oracle.
//!
//! The pipeline:
//!
//! 1. [`dispatch`] — global dispatch oracle (DP over discretized cumulative
//!    power, robust to nonconvex costs, plus continuous refinement);
//! 2. [`osf`] — sweep the load range into sampled optimal solution
//!    functions and check the strict-monotonicity criterion;
//! 3. [`sosf`] — when the criterion fails, fit monotone surrogate curves by
//!    slope-constrained, sum-coupled least squares;
//! 4. [`droop`] — invert the curves into droop laws with a frequency budget;
//! 5. [`sim`] — solve the decentralized steady state and run load-step
//!    transients, reporting the cost gap against the oracle.
//!
//! [`scenario`] holds the built-in study cases and the config format;
//! [`pipeline`] wires the stages together behind the CLI.

pub mod cost;
pub mod curve;
pub mod dispatch;
pub mod droop;
pub mod error;
pub mod osf;
pub mod pipeline;
pub mod qp;
pub mod scenario;
pub mod sim;
pub mod sosf;

pub use cost::{DgSpec, Fleet};
pub use curve::MonotoneCurve;
pub use dispatch::{
    dual_multiplier, exhaustive_oracle, solve_dispatch, Allocation, DispatchSolver, OracleConfig,
};
pub use droop::{build_droop, eval_frequency, DroopConfig, DroopCurve, DroopSet};
pub use error::{Error, Result};
pub use osf::{
    check_monotonicity, find_reallocation_witness, sweep_osf, verify_sum, CriterionReport, OsfTable,
};
pub use pipeline::{run_pipeline, PipelineOutputs, Stage};
pub use scenario::{builtin, load_scenario, scenario_to_toml, Scenario};
pub use sim::{
    report_scenario, simulate_transient, solve_steady_state, DynParams, LoadStep, ScenarioReport,
    SteadyState, Trajectory,
};
pub use sosf::{fit_sosf, FitSpec, SosfFit};
