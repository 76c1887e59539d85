//! Generator cost model: cubic-plus-exponential operating cost per DG and
//! fleet-level aggregates.
//!
//! Each distributed generator (DG) carries a comprehensive operating cost
//! `C(P) = a·P³ + b·P² + c·P + d·exp(e·P)` in cost units per hour, with output
//! power `P` in kW. Coefficients are stored at full value; scenario files and
//! the built-in scenarios hold already-scaled numbers.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// One distributed generator: cost coefficients and power capacity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgSpec {
    /// Small integer label, unique within a fleet.
    pub id: u32,
    /// Cubic coefficient (cost·kW⁻³).
    pub a: f64,
    /// Quadratic coefficient (cost·kW⁻²).
    pub b: f64,
    /// Linear coefficient (cost·kW⁻¹).
    pub c: f64,
    /// Exponential amplitude (cost).
    pub d: f64,
    /// Exponential rate (kW⁻¹).
    pub e: f64,
    /// Maximum output power (kW), strictly positive.
    pub p_max: f64,
}

impl DgSpec {
    pub fn new(id: u32, a: f64, b: f64, c: f64, d: f64, e: f64, p_max: f64) -> Result<Self> {
        let spec = DgSpec {
            id,
            a,
            b,
            c,
            d,
            e,
            p_max,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let coeffs = [self.a, self.b, self.c, self.d, self.e, self.p_max];
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidFleet(format!(
                "dg {}: non-finite coefficient",
                self.id
            )));
        }
        if self.p_max <= 0.0 {
            return Err(Error::InvalidFleet(format!(
                "dg {}: p_max must be > 0, got {}",
                self.id, self.p_max
            )));
        }
        Ok(())
    }

    fn check_power(&self, p: f64) -> Result<()> {
        // Allow a hair of slack so refined allocations sitting on a bound pass.
        let slack = 1e-9 * self.p_max.max(1.0);
        if !p.is_finite() || p < -slack || p > self.p_max + slack {
            return Err(Error::PowerOutOfRange {
                dg: self.id,
                power: p,
                p_max: self.p_max,
            });
        }
        Ok(())
    }

    /// Operating cost at output `p` kW.
    pub fn cost(&self, p: f64) -> Result<f64> {
        self.check_power(p)?;
        Ok(self.cost_unchecked(p))
    }

    /// Analytic marginal cost `dC/dP` at output `p` kW.
    pub fn marginal_cost(&self, p: f64) -> Result<f64> {
        self.check_power(p)?;
        Ok(self.marginal_unchecked(p))
    }

    #[inline]
    pub(crate) fn cost_unchecked(&self, p: f64) -> f64 {
        ((self.a * p + self.b) * p + self.c) * p + self.d * (self.e * p).exp()
    }

    #[inline]
    pub(crate) fn marginal_unchecked(&self, p: f64) -> f64 {
        (3.0 * self.a * p + 2.0 * self.b) * p + self.c + self.d * self.e * (self.e * p).exp()
    }
}

/// An ordered set of generators plus the supremum of total load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fleet {
    dgs: Vec<DgSpec>,
    p_l_max: f64,
}

impl Fleet {
    pub fn new(dgs: Vec<DgSpec>, p_l_max: f64) -> Result<Self> {
        if dgs.is_empty() {
            return Err(Error::InvalidFleet("fleet needs at least one dg".into()));
        }
        for dg in &dgs {
            dg.validate()?;
        }
        let mut ids: Vec<u32> = dgs.iter().map(|d| d.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != dgs.len() {
            return Err(Error::InvalidFleet("duplicate dg ids".into()));
        }
        let capacity: f64 = dgs.iter().map(|d| d.p_max).sum();
        if !(p_l_max > 0.0 && p_l_max <= capacity + 1e-9 * capacity.max(1.0)) {
            return Err(Error::InvalidFleet(format!(
                "p_l_max {p_l_max} must lie in (0, {capacity}]"
            )));
        }
        Ok(Fleet { dgs, p_l_max })
    }

    pub fn dgs(&self) -> &[DgSpec] {
        &self.dgs
    }

    pub fn len(&self) -> usize {
        self.dgs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dgs.is_empty()
    }

    /// Supremum of total load (kW).
    pub fn p_l_max(&self) -> f64 {
        self.p_l_max
    }

    /// Sum of generator capacities (kW).
    pub fn capacity(&self) -> f64 {
        self.dgs.iter().map(|d| d.p_max).sum()
    }

    /// Total fleet cost for one power per generator.
    pub fn total_cost(&self, powers: &[f64]) -> Result<f64> {
        if powers.len() != self.dgs.len() {
            return Err(Error::PowerCountMismatch {
                expected: self.dgs.len(),
                got: powers.len(),
            });
        }
        let mut total = 0.0;
        for (dg, &p) in self.dgs.iter().zip(powers) {
            total += dg.cost(p)?;
        }
        Ok(total)
    }
}
