//! Error type shared by every module in the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A power argument fell outside a generator's operating range.
    #[error("dg {dg}: power {power} kW outside [0, {p_max}] kW")]
    PowerOutOfRange { dg: u32, power: f64, p_max: f64 },

    /// The number of powers does not match the fleet size.
    #[error("expected {expected} powers, got {got}")]
    PowerCountMismatch { expected: usize, got: usize },

    /// A requested load cannot be served by the fleet.
    #[error("load {load} kW infeasible: fleet serves [0, {capacity}] kW")]
    InfeasibleLoad { load: f64, capacity: f64 },

    /// The brute-force oracle is limited to small fleets.
    #[error("exhaustive oracle supports at most 3 dgs, got {0}")]
    TooManyDgs(usize),

    #[error("invalid fleet: {0}")]
    InvalidFleet(String),

    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    /// Curve evaluation outside the knot span.
    #[error("curve eval at {x} outside domain [{lo}, {hi}]")]
    CurveDomain { x: f64, lo: f64, hi: f64 },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// The alternating-projection solver hit its iteration cap.
    #[error(
        "projection solver stalled after {iterations} iterations \
         (gap {gap:.3e}, eq residual {eq_residual:.3e}, slope residual {slope_residual:.3e})"
    )]
    QpNoConvergence {
        iterations: usize,
        gap: f64,
        eq_residual: f64,
        slope_residual: f64,
    },

    #[error("sosf fit infeasible: {0}")]
    FitInfeasible(String),

    /// Transient integration left the droop domain.
    #[error("transient instability: {0}")]
    Instability(String),

    #[error("scenario: {0}")]
    Scenario(String),

    /// A pipeline stage failed; wraps the underlying error with the stage name.
    #[error("[stage {stage}] {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
