//! Droop synthesis: turn monotone solution curves into decentralized P-f
//! droop curves `F_i = gain · γ_i⁻¹` with the gain sized to a frequency
//! deviation budget.

use crate::curve::MonotoneCurve;
use crate::error::{Error, Result};

/// Slope floor applied before inversion so saturation plateaus (a DG parked
/// at 0 or at capacity over a load range) stay invertible. The induced
/// dispatch perturbation is recorded on the [`DroopSet`].
pub const EPS_INV: f64 = 1e-6;

/// Frequency-side configuration of a droop family.
#[derive(Debug, Clone, PartialEq)]
pub struct DroopConfig {
    /// Nominal frequency (Hz).
    pub f_star: f64,
    /// Maximum allowed deviation from nominal (Hz).
    pub delta_f_max: f64,
    /// Gain mapping inverse solution curves to frequency drop (Hz/kW load).
    pub gain: f64,
}

impl DroopConfig {
    pub fn validate(&self, p_l_max: f64) -> Result<()> {
        if self.delta_f_max <= 0.0 || self.f_star <= 0.0 {
            return Err(Error::InvalidConfig(
                "f_star and delta_f_max must be positive".into(),
            ));
        }
        if self.gain <= 0.0 || self.gain * p_l_max > self.delta_f_max + 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "gain {} exceeds the deviation budget over [0, {p_l_max}]",
                self.gain
            )));
        }
        Ok(())
    }
}

/// One DG's droop curve: own power (kW) to frequency drop (Hz).
#[derive(Debug, Clone, PartialEq)]
pub struct DroopCurve {
    pub dg_id: u32,
    pub curve: MonotoneCurve,
}

impl DroopCurve {
    /// Frequency drop at output `p`; errors outside the curve domain.
    pub fn freq_drop(&self, p: f64) -> Result<f64> {
        self.curve.eval(p)
    }

    /// Largest power the droop covers (kW).
    pub fn max_power(&self) -> f64 {
        self.curve.x_max()
    }
}

/// A complete droop family plus the effective solution curves it encodes.
#[derive(Debug, Clone)]
pub struct DroopSet {
    pub config: DroopConfig,
    pub curves: Vec<DroopCurve>,
    /// Slope-floored solution curves actually inverted (load to power);
    /// identical to the inputs wherever no flooring was needed.
    pub effective_solutions: Vec<MonotoneCurve>,
    /// Largest knot perturbation the slope floor introduced (kW).
    pub max_floor_perturbation: f64,
}

/// Constructs the droop family `F_i = gain · γ_i⁻¹` from per-DG solution
/// curves (power as a function of total load, all sharing the domain
/// `[0, p_l_max]` and starting at zero). The gain is
/// `delta_f_max / p_l_max`, so the synchronized droop value never leaves the
/// deviation budget.
pub fn build_droop(
    solution_curves: &[MonotoneCurve],
    dg_ids: &[u32],
    f_star: f64,
    delta_f_max: f64,
) -> Result<DroopSet> {
    if solution_curves.is_empty() || solution_curves.len() != dg_ids.len() {
        return Err(Error::InvalidConfig(
            "need one solution curve per dg id".into(),
        ));
    }
    if !(f_star.is_finite() && delta_f_max.is_finite()) || f_star <= 0.0 || delta_f_max <= 0.0 {
        return Err(Error::InvalidConfig(
            "f_star and delta_f_max must be positive".into(),
        ));
    }
    let p_l_max = solution_curves[0].x_max();
    for c in solution_curves {
        if (c.x_min() - solution_curves[0].x_min()).abs() > 1e-12
            || (c.x_max() - p_l_max).abs() > 1e-12
        {
            return Err(Error::InvalidConfig(
                "solution curves must share one load domain".into(),
            ));
        }
        if c.x_min() != 0.0 || c.y_min().abs() > 1e-9 {
            return Err(Error::InvalidConfig(
                "solution curves must start at (0, 0)".into(),
            ));
        }
    }
    let gain = delta_f_max / p_l_max;
    let config = DroopConfig {
        f_star,
        delta_f_max,
        gain,
    };
    config.validate(p_l_max)?;

    let mut curves = Vec::with_capacity(solution_curves.len());
    let mut effective = Vec::with_capacity(solution_curves.len());
    let mut worst_perturbation: f64 = 0.0;
    for (c, &id) in solution_curves.iter().zip(dg_ids) {
        let (floored, delta) = c.with_slope_floor(EPS_INV)?;
        worst_perturbation = worst_perturbation.max(delta);
        // anchor the origin exactly so F(0) = 0
        let mut ys = floored.ys().to_vec();
        ys[0] = 0.0;
        let floored = MonotoneCurve::new(floored.xs().to_vec(), ys)?;
        let droop = floored.invert()?.scale_y(gain)?;
        curves.push(DroopCurve {
            dg_id: id,
            curve: droop,
        });
        effective.push(floored);
    }
    Ok(DroopSet {
        config,
        curves,
        effective_solutions: effective,
        max_floor_perturbation: worst_perturbation,
    })
}

/// Actual frequency of a droop-controlled DG at output `p`: `f* - F(p)`.
pub fn eval_frequency(dc: &DroopCurve, cfg: &DroopConfig, p: f64) -> Result<f64> {
    Ok(cfg.f_star - dc.freq_drop(p)?)
}
