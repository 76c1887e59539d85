//! Continuous piecewise-linear monotone functions with exact inversion.
//!
//! `MonotoneCurve` is the shared representation for optimal solution
//! functions, their fitted surrogates, and droop curves. Construction accepts
//! non-decreasing data (flat segments allowed); inversion requires strict
//! increase, which [`MonotoneCurve::with_slope_floor`] can restore.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCurve {
    xs: Vec<f64>,
    ys: Vec<f64>,
    min_slope: f64,
}

impl MonotoneCurve {
    /// Builds a curve from knot coordinates. `xs` must be strictly
    /// increasing and `ys` non-decreasing; the minimum segment slope is
    /// recorded on the curve.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::InvalidCurve(format!(
                "knot count mismatch: {} xs vs {} ys",
                xs.len(),
                ys.len()
            )));
        }
        if xs.len() < 2 {
            return Err(Error::InvalidCurve("need at least two knots".into()));
        }
        if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidCurve("non-finite knot".into()));
        }
        let mut min_slope = f64::INFINITY;
        for k in 0..xs.len() - 1 {
            let dx = xs[k + 1] - xs[k];
            if dx <= 0.0 {
                return Err(Error::InvalidCurve(format!(
                    "xs not strictly increasing at knot {k}"
                )));
            }
            let slope = (ys[k + 1] - ys[k]) / dx;
            if slope < 0.0 {
                return Err(Error::InvalidCurve(format!(
                    "decreasing segment at knot {k} (slope {slope:.3e})"
                )));
            }
            min_slope = min_slope.min(slope);
        }
        Ok(MonotoneCurve { xs, ys, min_slope })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    /// Smallest segment slope observed at construction.
    pub fn min_slope(&self) -> f64 {
        self.min_slope
    }

    pub fn x_min(&self) -> f64 {
        self.xs[0]
    }

    pub fn x_max(&self) -> f64 {
        *self.xs.last().unwrap()
    }

    pub fn y_min(&self) -> f64 {
        self.ys[0]
    }

    pub fn y_max(&self) -> f64 {
        *self.ys.last().unwrap()
    }

    pub fn is_strictly_increasing(&self) -> bool {
        self.min_slope > 0.0
    }

    fn domain_slack(&self) -> f64 {
        1e-9 * (self.x_max() - self.x_min()).max(1.0)
    }

    /// Evaluates the curve at `x`. Exact at knots; linear in between.
    /// `x` may exceed the knot span by a relative 1e-9 slack.
    pub fn eval(&self, x: f64) -> Result<f64> {
        let slack = self.domain_slack();
        if !x.is_finite() || x < self.x_min() - slack || x > self.x_max() + slack {
            return Err(Error::CurveDomain {
                x,
                lo: self.x_min(),
                hi: self.x_max(),
            });
        }
        Ok(self.eval_clamped(x))
    }

    /// Evaluates with `x` clamped into the knot span.
    pub fn eval_clamped(&self, x: f64) -> f64 {
        let x = x.clamp(self.x_min(), self.x_max());
        match self.xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => self.ys[i],
            Err(i) => {
                // x strictly between xs[i-1] and xs[i]
                let (x0, x1) = (self.xs[i - 1], self.xs[i]);
                let (y0, y1) = (self.ys[i - 1], self.ys[i]);
                y0 + (x - x0) / (x1 - x0) * (y1 - y0)
            }
        }
    }

    /// Exact piecewise-linear inverse (knot coordinates swapped).
    /// Fails if any segment is flat.
    pub fn invert(&self) -> Result<MonotoneCurve> {
        if self.min_slope <= 0.0 {
            return Err(Error::InvalidCurve(
                "cannot invert: curve has a non-increasing segment".into(),
            ));
        }
        MonotoneCurve::new(self.ys.clone(), self.xs.clone())
    }

    /// Returns a copy with every y multiplied by `factor` (> 0).
    pub fn scale_y(&self, factor: f64) -> Result<MonotoneCurve> {
        if !factor.is_finite() || factor <= 0.0 {
            return Err(Error::InvalidCurve(format!(
                "scale factor must be positive and finite, got {factor}"
            )));
        }
        MonotoneCurve::new(
            self.xs.clone(),
            self.ys.iter().map(|y| y * factor).collect(),
        )
    }

    /// Enforces a minimum segment slope by blending with the endpoint chord:
    /// `y' = (1-w)·y + w·chord`, `w = floor / chord_slope`. Endpoint values
    /// are preserved exactly and the perturbation of interior knots is
    /// returned alongside the curve. A curve already satisfying the floor is
    /// returned unchanged with perturbation zero.
    pub fn with_slope_floor(&self, floor: f64) -> Result<(MonotoneCurve, f64)> {
        if !floor.is_finite() || floor <= 0.0 {
            return Err(Error::InvalidCurve(format!(
                "slope floor must be > 0, got {floor}"
            )));
        }
        if self.min_slope >= floor {
            return Ok((self.clone(), 0.0));
        }
        let chord = (self.y_max() - self.y_min()) / (self.x_max() - self.x_min());
        if chord < floor {
            return Err(Error::InvalidCurve(format!(
                "chord slope {chord:.3e} below requested floor {floor:.3e}"
            )));
        }
        let w = floor / chord;
        let x0 = self.x_min();
        let y0 = self.y_min();
        let mut max_delta: f64 = 0.0;
        let ys: Vec<f64> = self
            .xs
            .iter()
            .zip(&self.ys)
            .map(|(&x, &y)| {
                let blended = (1.0 - w) * y + w * (y0 + chord * (x - x0));
                max_delta = max_delta.max((blended - y).abs());
                blended
            })
            .collect();
        Ok((MonotoneCurve::new(self.xs.clone(), ys)?, max_delta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn identity() -> MonotoneCurve {
        MonotoneCurve::new(vec![0.0, 10.0], vec![0.0, 10.0]).unwrap()
    }

    #[test]
    fn identity_inverts_to_itself() {
        let c = identity();
        let inv = c.invert().unwrap();
        assert_eq!(inv.xs(), c.xs());
        assert_eq!(inv.ys(), c.ys());
    }

    #[test]
    fn doubling_inverts_to_halving() {
        let c = MonotoneCurve::new(vec![0.0, 5.0], vec![0.0, 10.0]).unwrap();
        let inv = c.invert().unwrap();
        assert_eq!(inv.x_max(), 10.0);
        assert!((inv.eval(4.0).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn eval_is_exact_at_knots() {
        let c = MonotoneCurve::new(vec![0.0, 0.1, 0.2, 1.0], vec![0.3, 0.7, 0.7, 2.0]).unwrap();
        for (x, y) in c.xs().iter().zip(c.ys()) {
            assert_eq!(c.eval(*x).unwrap(), *y);
        }
        assert_eq!(c.min_slope(), 0.0);
        assert!(!c.is_strictly_increasing());
        assert!(c.invert().is_err());
    }

    #[test]
    fn eval_outside_domain_errors() {
        let c = identity();
        assert!(matches!(c.eval(10.1), Err(Error::CurveDomain { .. })));
        assert!(c.eval(-0.1).is_err());
        // slack admits boundary noise
        assert!(c.eval(10.0 + 1e-11).is_ok());
    }

    #[test]
    fn construction_rejects_bad_knots() {
        assert!(MonotoneCurve::new(vec![0.0, 0.0], vec![0.0, 1.0]).is_err());
        assert!(MonotoneCurve::new(vec![0.0, 1.0], vec![1.0, 0.0]).is_err());
        assert!(MonotoneCurve::new(vec![0.0], vec![0.0]).is_err());
        assert!(MonotoneCurve::new(vec![0.0, f64::NAN], vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn slope_floor_preserves_endpoints() {
        let c = MonotoneCurve::new(vec![0.0, 1.0, 2.0, 3.0, 4.0], vec![0.0, 0.0, 0.0, 1.0, 2.0])
            .unwrap();
        let (floored, delta) = c.with_slope_floor(1e-6).unwrap();
        assert_eq!(floored.y_min(), 0.0);
        assert_eq!(floored.y_max(), 2.0);
        assert!(floored.min_slope() >= 1e-6);
        assert!(delta > 0.0 && delta < 1e-5);
        // already-strict curve passes through untouched
        let strict = identity();
        let (same, d0) = strict.with_slope_floor(1e-6).unwrap();
        assert_eq!(d0, 0.0);
        assert_eq!(same, strict);
    }

    proptest! {
        #[test]
        fn inversion_round_trip(raw in proptest::collection::vec(0.01f64..1.0, 2..20)) {
            // build strictly increasing knots from positive increments
            let mut xs = vec![0.0];
            let mut ys = vec![0.0];
            for (i, r) in raw.iter().enumerate() {
                xs.push(xs[i] + 0.5 + r);
                ys.push(ys[i] + r);
            }
            let span = *xs.last().unwrap();
            let c = MonotoneCurve::new(xs, ys).unwrap();
            let inv = c.invert().unwrap();
            for k in 0..=50 {
                let x = span * k as f64 / 50.0;
                let y = c.eval(x).unwrap();
                let back = inv.eval(y).unwrap();
                prop_assert!((back - x).abs() <= 1e-9 * span.max(1.0));
            }
        }
    }
}
