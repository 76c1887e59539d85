//! Grid simulation: decentralized steady state of droop-controlled DGs and
//! load-step transients whose equilibria coincide with that steady state.

use crate::cost::Fleet;
use crate::dispatch::DispatchSolver;
use crate::droop::DroopSet;
use crate::error::{Error, Result};

/// Equilibrium of the droop-coupled fleet at one load level.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub load: f64,
    /// Output power per DG (kW).
    pub powers: Vec<f64>,
    /// Common synchronized frequency (Hz).
    pub frequency: f64,
    /// The common droop value `F_i(P_i)` (Hz).
    pub droop_value: f64,
    pub achieved_cost: f64,
    pub optimal_cost: f64,
    /// `(achieved - optimal) / max(1, optimal)`.
    pub gap_rel: f64,
}

/// Solves the frequency-equal + power-balance system by bisection on the
/// common droop value: `Φ(λ) = Σ_i F_i⁻¹(λ)` is non-decreasing, so the
/// unique λ with `Φ(λ) = p_l` pins the equilibrium. Costs come from the
/// fleet model and the dispatch oracle.
pub fn solve_steady_state(
    fleet: &Fleet,
    droops: &DroopSet,
    oracle: &DispatchSolver,
    p_l: f64,
) -> Result<SteadyState> {
    if droops.curves.len() != fleet.len() {
        return Err(Error::InvalidConfig(
            "droop set does not match fleet size".into(),
        ));
    }
    // forward curves power->Hz inverted once: Hz->power
    let inverses: Vec<_> = droops
        .curves
        .iter()
        .map(|dc| dc.curve.invert())
        .collect::<Result<Vec<_>>>()?;
    let lam_hi = inverses
        .iter()
        .map(|inv| inv.x_max())
        .fold(f64::INFINITY, f64::min);
    let phi = |lam: f64| -> f64 { inverses.iter().map(|inv| inv.eval_clamped(lam)).sum() };
    let reach = phi(lam_hi);
    if !p_l.is_finite() || p_l < -1e-12 || p_l > reach + 1e-9 * reach.max(1.0) {
        return Err(Error::InfeasibleLoad {
            load: p_l,
            capacity: reach,
        });
    }
    let p_l = p_l.clamp(0.0, reach);
    // solve well below the contractual 1e-9 residual so the cost of the
    // tiny load mismatch stays inside the oracle-dominance bound
    let tol = 1e-13 * p_l.max(1.0);
    let mut lam = if p_l == 0.0 {
        0.0
    } else if p_l == reach {
        lam_hi
    } else {
        0.0
    };
    if p_l > 0.0 && p_l < reach {
        let (mut lo, mut hi) = (0.0f64, lam_hi);
        for _ in 0..200 {
            lam = 0.5 * (lo + hi);
            let s = phi(lam);
            if (s - p_l).abs() <= tol {
                break;
            }
            if s < p_l {
                lo = lam;
            } else {
                hi = lam;
            }
        }
    }
    let powers: Vec<f64> = inverses.iter().map(|inv| inv.eval_clamped(lam)).collect();
    let achieved_cost = fleet.total_cost(&powers)?;
    let optimal_cost = oracle.solve(p_l)?.cost;
    Ok(SteadyState {
        load: p_l,
        powers,
        frequency: droops.config.f_star - lam,
        droop_value: lam,
        achieved_cost,
        optimal_cost,
        gap_rel: (achieved_cost - optimal_cost) / optimal_cost.max(1.0),
    })
}

/// Piecewise-constant load profile.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadStep {
    pub duration_s: f64,
    pub level_kw: f64,
}

/// Synchronization-dynamic parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DynParams {
    /// Frequency-coupling gain (kW per Hz·s).
    pub kappa_f: f64,
    /// Power-balance gain (1/s).
    pub kappa_e: f64,
    /// Integration step (s).
    pub dt: f64,
    /// Record every n-th step (1 = every step). Plateau boundaries are
    /// always recorded.
    pub record_stride: usize,
}

impl Default for DynParams {
    fn default() -> Self {
        DynParams {
            kappa_f: 100.0,
            kappa_e: 5.0,
            dt: 1e-3,
            record_stride: 1,
        }
    }
}

/// Recorded transient.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// One series per DG (kW).
    pub powers: Vec<Vec<f64>>,
    /// One series per DG (Hz).
    pub frequencies: Vec<Vec<f64>>,
    /// Load level at each recorded time (kW).
    pub load: Vec<f64>,
    /// Final power vector at the end of each plateau.
    pub plateau_finals: Vec<Vec<f64>>,
}

/// Integrates `dP_i/dt = kappa_f (f_i - f̄) + (kappa_e/n)(P_L - Σ P_j)` with
/// `f_i = f* - F_i(P_i)` from a cold start, holding each load level for its
/// plateau duration. The own-curve term is handled implicitly (solve
/// `p + dt·kappa_f·F(p) = rhs` on the piecewise-linear curve), which keeps
/// the fixed-step scheme stable on steep saturation segments; equilibria are
/// exactly the steady-state solutions. Powers clip to the droop domains.
pub fn simulate_transient(
    droops: &DroopSet,
    profile: &[LoadStep],
    dyn_params: &DynParams,
) -> Result<Trajectory> {
    if profile.is_empty() {
        return Err(Error::InvalidConfig("empty load profile".into()));
    }
    if !dyn_params.dt.is_finite() || dyn_params.dt <= 0.0 || dyn_params.record_stride == 0 {
        return Err(Error::InvalidConfig(
            "dt must be > 0 and record_stride >= 1".into(),
        ));
    }
    let n = droops.curves.len();
    let f_star = droops.config.f_star;
    let dt = dyn_params.dt;
    let kf = dyn_params.kappa_f;
    let ke = dyn_params.kappa_e;

    // G_i(p) = p + dt·kf·F_i(p), increasing; its inverse drives the update.
    let g_inverse: Vec<_> = droops
        .curves
        .iter()
        .map(|dc| {
            let xs: Vec<f64> = dc.curve.xs().to_vec();
            let gys: Vec<f64> = xs
                .iter()
                .zip(dc.curve.ys())
                .map(|(&p, &f)| p + dt * kf * f)
                .collect();
            crate::curve::MonotoneCurve::new(gys, xs)
        })
        .collect::<Result<Vec<_>>>()?;
    let tops: Vec<f64> = droops.curves.iter().map(|dc| dc.max_power()).collect();
    let reach: f64 = tops.iter().sum();
    for step in profile {
        if !step.duration_s.is_finite()
            || step.duration_s <= 0.0
            || step.level_kw < 0.0
            || step.level_kw > reach
        {
            return Err(Error::InvalidConfig(format!(
                "load step {} kW for {} s outside the feasible range",
                step.level_kw, step.duration_s
            )));
        }
    }

    let mut p = vec![0.0f64; n];
    let mut f = vec![f_star; n];
    let mut traj = Trajectory {
        times: Vec::new(),
        powers: vec![Vec::new(); n],
        frequencies: vec![Vec::new(); n],
        load: Vec::new(),
        plateau_finals: Vec::new(),
    };
    let record = |t: f64, p: &[f64], f: &[f64], level: f64, traj: &mut Trajectory| {
        traj.times.push(t);
        for i in 0..n {
            traj.powers[i].push(p[i]);
            traj.frequencies[i].push(f[i]);
        }
        traj.load.push(level);
    };
    record(0.0, &p, &f, profile[0].level_kw, &mut traj);

    let mut global_step = 0usize;
    for step in profile {
        let n_steps = (step.duration_s / dt).round() as usize;
        for _ in 0..n_steps {
            for i in 0..n {
                f[i] = f_star - droops.curves[i].curve.eval_clamped(p[i]);
            }
            let f_bar = f.iter().sum::<f64>() / n as f64;
            let balance = (ke / n as f64) * (step.level_kw - p.iter().sum::<f64>());
            for i in 0..n {
                // divergence guard on the explicit candidate
                let dp = kf * (f[i] - f_bar) + balance;
                let candidate = p[i] + dt * dp;
                if candidate < -0.1 * tops[i] || candidate > 1.1 * tops[i] {
                    return Err(Error::Instability(format!(
                        "dg {} power candidate {candidate:.3} kW left [0, {:.3}] by more \
                         than 10% (kappa_f {kf}, kappa_e {ke}, dt {dt})",
                        droops.curves[i].dg_id, tops[i]
                    )));
                }
                let rhs = p[i] + dt * (kf * (f_star - f_bar) + balance);
                p[i] = g_inverse[i].eval_clamped(rhs).clamp(0.0, tops[i]);
            }
            global_step += 1;
            if global_step.is_multiple_of(dyn_params.record_stride) {
                for i in 0..n {
                    f[i] = f_star - droops.curves[i].curve.eval_clamped(p[i]);
                }
                record(global_step as f64 * dt, &p, &f, step.level_kw, &mut traj);
            }
        }
        // always capture the plateau end
        if !global_step.is_multiple_of(dyn_params.record_stride) {
            for i in 0..n {
                f[i] = f_star - droops.curves[i].curve.eval_clamped(p[i]);
            }
            record(global_step as f64 * dt, &p, &f, step.level_kw, &mut traj);
        }
        traj.plateau_finals.push(p.clone());
    }
    Ok(traj)
}

/// One row of the oracle-vs-droop comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub load: f64,
    pub oracle_powers: Vec<f64>,
    pub oracle_cost: f64,
    pub steady_powers: Vec<f64>,
    pub steady_cost: f64,
    pub gap_rel: f64,
    pub frequency: f64,
    /// True when the steady state matches the oracle cost within 1e-4.
    pub optimal: bool,
}

/// Comparison of droop operating points against the global oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioReport {
    pub rows: Vec<ReportRow>,
}

pub fn report_scenario(
    fleet: &Fleet,
    droops: &DroopSet,
    oracle: &DispatchSolver,
    loads: &[f64],
) -> Result<ScenarioReport> {
    let mut rows = Vec::with_capacity(loads.len());
    for &load in loads {
        let oracle_alloc = oracle.solve(load)?;
        let ss = solve_steady_state(fleet, droops, oracle, load)?;
        rows.push(ReportRow {
            load,
            oracle_powers: oracle_alloc.powers,
            oracle_cost: oracle_alloc.cost,
            steady_powers: ss.powers.clone(),
            steady_cost: ss.achieved_cost,
            gap_rel: ss.gap_rel,
            frequency: ss.frequency,
            optimal: ss.gap_rel <= 1e-4,
        });
    }
    Ok(ScenarioReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{DgSpec, Fleet};
    use crate::curve::MonotoneCurve;
    use crate::dispatch::OracleConfig;
    use crate::droop::build_droop;

    fn proportional_setup() -> (Fleet, DroopSet, DispatchSolver) {
        // two identical quadratic DGs sharing evenly: gamma_i(x) = x/2
        let fleet = Fleet::new(
            vec![
                DgSpec::new(1, 0.0, 2e-3, 1e-2, 0.0, 0.0, 10.0).unwrap(),
                DgSpec::new(2, 0.0, 2e-3, 1e-2, 0.0, 0.0, 10.0).unwrap(),
            ],
            20.0,
        )
        .unwrap();
        let half = MonotoneCurve::new(vec![0.0, 20.0], vec![0.0, 10.0]).unwrap();
        let droops = build_droop(&[half.clone(), half], &[1, 2], 50.0, 0.5).unwrap();
        let oracle = DispatchSolver::new(&fleet, &OracleConfig::default()).unwrap();
        (fleet, droops, oracle)
    }

    #[test]
    fn zero_load_anchors_at_nominal_frequency() {
        let (fleet, droops, oracle) = proportional_setup();
        let ss = solve_steady_state(&fleet, &droops, &oracle, 0.0).unwrap();
        assert!(ss.powers.iter().all(|&p| p.abs() < 1e-12));
        assert_eq!(ss.frequency, 50.0);
        assert!(ss.gap_rel.abs() < 1e-9);
    }

    #[test]
    fn steady_state_balances_and_equalizes() {
        let (fleet, droops, oracle) = proportional_setup();
        let ss = solve_steady_state(&fleet, &droops, &oracle, 12.0).unwrap();
        let sum: f64 = ss.powers.iter().sum();
        assert!((sum - 12.0).abs() <= 1e-6 * 12.0f64.max(1.0));
        for dc in &droops.curves {
            let drop = dc.freq_drop(ss.powers[0]).unwrap();
            assert!((drop - ss.droop_value).abs() <= 1e-6);
        }
        // identical dgs split evenly; this is also the oracle optimum
        assert!((ss.powers[0] - 6.0).abs() < 1e-6);
        assert!(ss.gap_rel.abs() < 1e-6);
        assert!(ss.gap_rel >= -1e-9);
    }

    #[test]
    fn infeasible_load_errors() {
        let (fleet, droops, oracle) = proportional_setup();
        assert!(matches!(
            solve_steady_state(&fleet, &droops, &oracle, 21.0),
            Err(Error::InfeasibleLoad { .. })
        ));
    }

    #[test]
    fn equilibrium_start_stays_put() {
        let (fleet, droops, oracle) = proportional_setup();
        let ss = solve_steady_state(&fleet, &droops, &oracle, 10.0).unwrap();
        // settle fully on the first plateau, then verify another plateau at
        // the same level does not move the fixed point
        let params = DynParams::default();
        let traj = simulate_transient(
            &droops,
            &[
                LoadStep {
                    duration_s: 10.0,
                    level_kw: 10.0,
                },
                LoadStep {
                    duration_s: 1.0,
                    level_kw: 10.0,
                },
            ],
            &params,
        )
        .unwrap();
        for (a, b) in traj.plateau_finals[0].iter().zip(&traj.plateau_finals[1]) {
            assert!((a - b).abs() < 1e-9);
        }
        for (p, s) in traj.plateau_finals[1].iter().zip(&ss.powers) {
            assert!((p - s).abs() < 1e-4);
        }
    }

    #[test]
    fn transient_rejects_bad_profiles() {
        let (_, droops, _) = proportional_setup();
        assert!(simulate_transient(&droops, &[], &DynParams::default()).is_err());
        let bad = [LoadStep {
            duration_s: 1.0,
            level_kw: 25.0,
        }];
        assert!(simulate_transient(&droops, &bad, &DynParams::default()).is_err());
    }
}
