//! Global dispatch oracle: dynamic programming over discretized cumulative
//! power, with continuous pairwise-transfer refinement.
//!
//! Cost functions here may be nonconvex, so equal-incremental-cost iteration
//! is not trusted; the DP enumerates the discretized feasible set exactly and
//! the refinement only polishes within the basin the DP found.

use crate::cost::Fleet;
use crate::error::{Error, Result};

/// Allocation values within this of the stage optimum count as ties.
const TIE_TOL: f64 = 1e-12;

/// Oracle discretization and refinement knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    /// DP grid step for cumulative power (kW).
    pub grid_step: f64,
    /// Run the continuous refinement pass after the DP.
    pub refine: bool,
    /// Smallest pairwise transfer the refinement attempts (kW).
    pub refine_tol: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            grid_step: 0.01,
            refine: true,
            refine_tol: 1e-6,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.grid_step.is_finite() || self.grid_step <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "grid_step must be > 0, got {}",
                self.grid_step
            )));
        }
        if !self.refine_tol.is_finite()
            || self.refine_tol <= 0.0
            || self.refine_tol >= self.grid_step
        {
            return Err(Error::InvalidConfig(format!(
                "refine_tol must lie in (0, grid_step), got {}",
                self.refine_tol
            )));
        }
        Ok(())
    }
}

/// One solution of the dispatch problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    /// Output power per DG (kW), fleet order.
    pub powers: Vec<f64>,
    /// Total cost at `powers`.
    pub cost: f64,
    /// The load this allocation serves (kW).
    pub load: f64,
}

/// Reusable dispatch solver: the backward value tables cover every feasible
/// load at once, so a sweep costs one table build plus cheap per-load
/// reconstructions.
#[derive(Debug, Clone)]
pub struct DispatchSolver {
    fleet: Fleet,
    cfg: OracleConfig,
    step: f64,
    /// Per-DG cost at grid multiples: `cost_tables[i][k] = C_i(k·step)`.
    cost_tables: Vec<Vec<f64>>,
    /// `value[i][s]`: minimal cost of serving `s·step` kW with DGs `i..n`.
    value: Vec<Vec<f64>>,
}

impl DispatchSolver {
    pub fn new(fleet: &Fleet, cfg: &OracleConfig) -> Result<Self> {
        cfg.validate()?;
        let step = cfg.grid_step;
        let n = fleet.len();
        let cost_tables: Vec<Vec<f64>> = fleet
            .dgs()
            .iter()
            .map(|dg| {
                let k_cap = (dg.p_max / step + 1e-9).floor() as usize;
                (0..=k_cap)
                    .map(|k| dg.cost_unchecked(k as f64 * step))
                    .collect()
            })
            .collect();
        let n_states: usize = cost_tables.iter().map(|t| t.len() - 1).sum();

        let mut value = vec![vec![f64::INFINITY; n_states + 1]; n + 1];
        value[n][0] = 0.0;
        for i in (0..n).rev() {
            // states reachable by DGs i..n
            let reach: usize = cost_tables[i..].iter().map(|t| t.len() - 1).sum();
            for s in 0..=reach {
                let k_max = s.min(cost_tables[i].len() - 1);
                let mut best = f64::INFINITY;
                for k in 0..=k_max {
                    let v = cost_tables[i][k] + value[i + 1][s - k];
                    if v < best {
                        best = v;
                    }
                }
                value[i][s] = best;
            }
        }
        Ok(DispatchSolver {
            fleet: fleet.clone(),
            cfg: cfg.clone(),
            step,
            cost_tables,
            value,
        })
    }

    pub fn fleet(&self) -> &Fleet {
        &self.fleet
    }

    pub fn config(&self) -> &OracleConfig {
        &self.cfg
    }

    /// Globally minimal allocation for load `p_l`.
    pub fn solve(&self, p_l: f64) -> Result<Allocation> {
        self.solve_warm(p_l, None)
    }

    /// As [`DispatchSolver::solve`], with DP ties broken toward `warm` when
    /// supplied (coordinate-wise nearest), otherwise toward the
    /// lexicographically smallest power vector.
    pub fn solve_warm(&self, p_l: f64, warm: Option<&[f64]>) -> Result<Allocation> {
        let capacity = self.fleet.capacity();
        let slack = 1e-9 * capacity.max(1.0);
        if !p_l.is_finite() || p_l < -slack || p_l > capacity + slack {
            return Err(Error::InfeasibleLoad {
                load: p_l,
                capacity,
            });
        }
        let p_l = p_l.clamp(0.0, capacity);
        if let Some(w) = warm {
            if w.len() != self.fleet.len() {
                return Err(Error::PowerCountMismatch {
                    expected: self.fleet.len(),
                    got: w.len(),
                });
            }
        }

        let n_states = self.value[0].len() - 1;
        let target = ((p_l / self.step).round() as usize).min(n_states);
        let mut powers = self.reconstruct(target, warm);
        self.distribute_residual(&mut powers, p_l);
        let mut cost = self.fleet.total_cost(&powers)?;
        if self.cfg.refine {
            cost = refine_allocation(
                &self.fleet,
                &mut powers,
                cost,
                self.step,
                self.cfg.refine_tol,
            );
        }
        Ok(Allocation {
            powers,
            cost,
            load: p_l,
        })
    }

    /// Walks the value tables forward, picking each DG's grid power.
    fn reconstruct(&self, mut s: usize, warm: Option<&[f64]>) -> Vec<f64> {
        let n = self.fleet.len();
        let mut powers = Vec::with_capacity(n);
        for i in 0..n {
            let k_max = s.min(self.cost_tables[i].len() - 1);
            let mut best = f64::INFINITY;
            for k in 0..=k_max {
                let v = self.cost_tables[i][k] + self.value[i + 1][s - k];
                if v < best {
                    best = v;
                }
            }
            let mut chosen = usize::MAX;
            let mut chosen_dist = f64::INFINITY;
            for k in 0..=k_max {
                let v = self.cost_tables[i][k] + self.value[i + 1][s - k];
                if v <= best + TIE_TOL {
                    match warm {
                        Some(w) => {
                            let dist = (k as f64 * self.step - w[i]).abs();
                            if dist < chosen_dist {
                                chosen = k;
                                chosen_dist = dist;
                            }
                        }
                        None => {
                            if chosen == usize::MAX {
                                chosen = k;
                            }
                        }
                    }
                }
            }
            powers.push(chosen as f64 * self.step);
            s -= chosen;
        }
        powers
    }

    /// Spreads `p_l - Σ powers` (at most half a grid step plus capacity
    /// truncation) over DGs with headroom, preserving bounds.
    fn distribute_residual(&self, powers: &mut [f64], p_l: f64) {
        let mut residual = p_l - powers.iter().sum::<f64>();
        for (dg, p) in self.fleet.dgs().iter().zip(powers.iter_mut()) {
            if residual.abs() <= 1e-15 * p_l.max(1.0) {
                break;
            }
            let room = if residual > 0.0 { dg.p_max - *p } else { -*p };
            let t = if residual > 0.0 {
                residual.min(room)
            } else {
                residual.max(room)
            };
            *p += t;
            residual -= t;
        }
    }
}

/// Pairwise-transfer polish: repeatedly move `delta` kW from a DG with high
/// marginal cost to one with lower marginal cost whenever that strictly
/// lowers total cost, halving `delta` from the grid step down to
/// `refine_tol`. Keeps the power sum bit-stable and never increases cost.
fn refine_allocation(
    fleet: &Fleet,
    powers: &mut [f64],
    mut cost: f64,
    start_delta: f64,
    refine_tol: f64,
) -> f64 {
    let n = fleet.len();
    let dgs = fleet.dgs();
    let improve_eps = 1e-15 * cost.abs().max(1.0);
    let mut delta = start_delta.max(refine_tol);
    while delta >= refine_tol {
        let mut guard = 0usize;
        loop {
            let mut improved = false;
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let d = delta.min(dgs[i].p_max - powers[i]).min(powers[j]);
                    if d < refine_tol {
                        continue;
                    }
                    // only consider transfers the marginal costs endorse
                    let mc_i = dgs[i].marginal_unchecked(powers[i]);
                    let mc_j = dgs[j].marginal_unchecked(powers[j]);
                    if mc_i >= mc_j {
                        continue;
                    }
                    let before =
                        dgs[i].cost_unchecked(powers[i]) + dgs[j].cost_unchecked(powers[j]);
                    let after =
                        dgs[i].cost_unchecked(powers[i] + d) + dgs[j].cost_unchecked(powers[j] - d);
                    if after < before - improve_eps {
                        powers[i] += d;
                        powers[j] -= d;
                        cost += after - before;
                        improved = true;
                    }
                }
            }
            guard += 1;
            if !improved || guard > 10_000 {
                break;
            }
        }
        delta *= 0.5;
    }
    // recompute to shed accumulated increments
    fleet.total_cost(powers).unwrap_or(cost)
}

/// Convenience one-shot wrapper around [`DispatchSolver`].
pub fn solve_dispatch(fleet: &Fleet, p_l: f64, cfg: &OracleConfig) -> Result<Allocation> {
    DispatchSolver::new(fleet, cfg)?.solve(p_l)
}

/// Test-grade brute force for fleets of up to 3 DGs: full grid enumeration of
/// the leading DGs, the last one takes the remainder exactly.
pub fn exhaustive_oracle(fleet: &Fleet, p_l: f64, step: f64) -> Result<Allocation> {
    let n = fleet.len();
    if n > 3 {
        return Err(Error::TooManyDgs(n));
    }
    if !step.is_finite() || step <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "step must be > 0, got {step}"
        )));
    }
    let capacity = fleet.capacity();
    if !p_l.is_finite() || p_l < -1e-12 || p_l > capacity + 1e-9 * capacity.max(1.0) {
        return Err(Error::InfeasibleLoad {
            load: p_l,
            capacity,
        });
    }
    let p_l = p_l.clamp(0.0, capacity);
    let dgs = fleet.dgs();
    let last = n - 1;
    let last_slack = 1e-9 * dgs[last].p_max.max(1.0);

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut consider = |powers: Vec<f64>| {
        let cost: f64 = dgs
            .iter()
            .zip(&powers)
            .map(|(dg, &p)| dg.cost_unchecked(p))
            .sum();
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, powers));
        }
    };

    let grid = |p_max: f64| -> usize { (p_max / step + 1e-9).floor() as usize };
    match n {
        1 => consider(vec![p_l]),
        2 => {
            for k1 in 0..=grid(dgs[0].p_max) {
                let p1 = k1 as f64 * step;
                if p1 > p_l + 1e-12 {
                    break;
                }
                let r = p_l - p1;
                if r >= -last_slack && r <= dgs[last].p_max + last_slack {
                    consider(vec![p1, r.clamp(0.0, dgs[last].p_max)]);
                }
            }
        }
        3 => {
            for k1 in 0..=grid(dgs[0].p_max) {
                let p1 = k1 as f64 * step;
                if p1 > p_l + 1e-12 {
                    break;
                }
                for k2 in 0..=grid(dgs[1].p_max) {
                    let p2 = k2 as f64 * step;
                    if p1 + p2 > p_l + 1e-12 {
                        break;
                    }
                    let r = p_l - p1 - p2;
                    if r >= -last_slack && r <= dgs[last].p_max + last_slack {
                        consider(vec![p1, p2, r.clamp(0.0, dgs[last].p_max)]);
                    }
                }
            }
        }
        _ => unreachable!(),
    }
    let (cost, powers) = best.ok_or(Error::InfeasibleLoad {
        load: p_l,
        capacity,
    })?;
    Ok(Allocation {
        powers,
        cost,
        load: p_l,
    })
}

/// Common marginal cost across interior DGs (strictly inside their bounds),
/// when they agree within 1e-4; diagnostic for convex instances where equal
/// incremental cost certifies optimality.
pub fn dual_multiplier(fleet: &Fleet, alloc: &Allocation) -> Result<Option<f64>> {
    if alloc.powers.len() != fleet.len() {
        return Err(Error::PowerCountMismatch {
            expected: fleet.len(),
            got: alloc.powers.len(),
        });
    }
    let mut marginals = Vec::new();
    for (dg, &p) in fleet.dgs().iter().zip(&alloc.powers) {
        let boundary = 1e-9 * dg.p_max.max(1.0);
        if p > boundary && p < dg.p_max - boundary {
            marginals.push(dg.marginal_cost(p)?);
        }
    }
    if marginals.is_empty() {
        return Ok(None);
    }
    let lo = marginals.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = marginals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 1e-4 {
        Ok(Some(marginals.iter().sum::<f64>() / marginals.len() as f64))
    } else {
        Ok(None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::DgSpec;

    fn convex_dg(id: u32, b: f64, c: f64, p_max: f64) -> DgSpec {
        DgSpec::new(id, 0.0, b, c, 0.0, 0.0, p_max).unwrap()
    }

    #[test]
    fn single_dg_takes_the_whole_load() {
        let fleet = Fleet::new(vec![convex_dg(1, 1e-3, 1e-2, 10.0)], 10.0).unwrap();
        let alloc = solve_dispatch(&fleet, 7.0, &OracleConfig::default()).unwrap();
        assert!((alloc.powers[0] - 7.0).abs() < 1e-12);
        assert_eq!(alloc.load, 7.0);
    }

    #[test]
    fn identical_convex_dgs_split_evenly() {
        let fleet = Fleet::new(
            vec![
                convex_dg(1, 2e-3, 1e-2, 10.0),
                convex_dg(2, 2e-3, 1e-2, 10.0),
            ],
            20.0,
        )
        .unwrap();
        let alloc = solve_dispatch(&fleet, 10.0, &OracleConfig::default()).unwrap();
        assert!((alloc.powers[0] - 5.0).abs() < 1e-6);
        assert!((alloc.powers[1] - 5.0).abs() < 1e-6);
    }

    #[test]
    fn linear_costs_order_the_merit_list() {
        // c1 < c2: everything on dg1 while it fits
        let fleet = Fleet::new(
            vec![convex_dg(1, 0.0, 1e-2, 10.0), convex_dg(2, 0.0, 5e-2, 10.0)],
            20.0,
        )
        .unwrap();
        let alloc = exhaustive_oracle(&fleet, 6.0, 0.01).unwrap();
        assert!((alloc.powers[0] - 6.0).abs() < 1e-9);
        assert!(alloc.powers[1].abs() < 1e-9);
    }

    #[test]
    fn exhaustive_three_dg_grid_matches_the_dp() {
        let fleet = Fleet::new(
            vec![
                DgSpec::new(1, 1e-4, -2e-3, 3e-2, 0.0, 0.0, 6.0).unwrap(),
                DgSpec::new(2, 0.0, 4e-3, 5e-3, 1e-3, 0.2, 5.0).unwrap(),
                convex_dg(3, 2e-3, 1.5e-2, 4.0),
            ],
            15.0,
        )
        .unwrap();
        let cfg = OracleConfig {
            grid_step: 0.05,
            refine: false,
            refine_tol: 1e-6,
        };
        let solver = DispatchSolver::new(&fleet, &cfg).unwrap();
        for load in [0.0, 2.5, 7.05, 11.3, 15.0] {
            let dp = solver.solve(load).unwrap();
            let brute = exhaustive_oracle(&fleet, load, cfg.grid_step).unwrap();
            assert!(
                (dp.cost - brute.cost).abs() <= 1e-12 * dp.cost.abs().max(1.0),
                "load {load}: dp {} vs brute {}",
                dp.cost,
                brute.cost
            );
        }
    }

    #[test]
    fn exhaustive_single_dg_takes_the_remainder() {
        let fleet = Fleet::new(vec![convex_dg(1, 1e-3, 1e-2, 10.0)], 10.0).unwrap();
        let alloc = exhaustive_oracle(&fleet, 4.0, 1.0).unwrap();
        assert_eq!(alloc.powers, vec![4.0]);
    }

    #[test]
    fn exhaustive_rejects_large_fleets() {
        let dgs: Vec<_> = (1..=4).map(|i| convex_dg(i, 1e-3, 1e-2, 5.0)).collect();
        let fleet = Fleet::new(dgs, 20.0).unwrap();
        assert!(matches!(
            exhaustive_oracle(&fleet, 3.0, 0.1),
            Err(Error::TooManyDgs(4))
        ));
    }

    #[test]
    fn infeasible_loads_error() {
        let fleet = Fleet::new(vec![convex_dg(1, 1e-3, 1e-2, 10.0)], 10.0).unwrap();
        assert!(matches!(
            solve_dispatch(&fleet, 11.0, &OracleConfig::default()),
            Err(Error::InfeasibleLoad { .. })
        ));
        assert!(solve_dispatch(&fleet, -1.0, &OracleConfig::default()).is_err());
        assert!(exhaustive_oracle(&fleet, 12.0, 0.1).is_err());
    }

    #[test]
    fn refinement_never_increases_cost() {
        let fleet = Fleet::new(
            vec![
                DgSpec::new(1, 4e-4, -5e-3, 6e-2, 0.0, 0.0, 10.0).unwrap(),
                convex_dg(2, 5.4e-3, 4e-3, 10.0),
            ],
            20.0,
        )
        .unwrap();
        let raw = OracleConfig {
            refine: false,
            ..OracleConfig::default()
        };
        let refined = OracleConfig::default();
        for load in [0.0, 3.7, 9.05, 14.203, 19.99] {
            let c0 = solve_dispatch(&fleet, load, &raw).unwrap();
            let c1 = solve_dispatch(&fleet, load, &refined).unwrap();
            assert!(c1.cost <= c0.cost + 1e-12, "load {load}");
            let sum: f64 = c1.powers.iter().sum();
            assert!((sum - load).abs() <= 1e-9 * load.max(1.0));
        }
    }

    #[test]
    fn dual_multiplier_on_balanced_convex_pair() {
        let fleet = Fleet::new(
            vec![
                convex_dg(1, 2e-3, 1e-2, 10.0),
                convex_dg(2, 2e-3, 1e-2, 10.0),
            ],
            20.0,
        )
        .unwrap();
        let alloc = solve_dispatch(&fleet, 10.0, &OracleConfig::default()).unwrap();
        let lambda = dual_multiplier(&fleet, &alloc).unwrap().unwrap();
        let expect = fleet.dgs()[0].marginal_cost(5.0).unwrap();
        assert!((lambda - expect).abs() < 1e-4);
    }

    #[test]
    fn dual_multiplier_none_when_unbalanced() {
        let fleet = Fleet::new(
            vec![
                convex_dg(1, 2e-3, 1e-2, 10.0),
                convex_dg(2, 2e-3, 5e-2, 10.0),
            ],
            20.0,
        )
        .unwrap();
        let alloc = Allocation {
            powers: vec![2.0, 8.0],
            cost: 0.0,
            load: 10.0,
        };
        assert!(dual_multiplier(&fleet, &alloc).unwrap().is_none());
    }

    #[test]
    fn warm_start_prefers_the_nearby_tie() {
        // two identical linear dgs: every split of the load is optimal
        let fleet = Fleet::new(
            vec![convex_dg(1, 0.0, 1e-2, 10.0), convex_dg(2, 0.0, 1e-2, 10.0)],
            20.0,
        )
        .unwrap();
        let cfg = OracleConfig {
            refine: false,
            ..OracleConfig::default()
        };
        let solver = DispatchSolver::new(&fleet, &cfg).unwrap();
        let cold = solver.solve(10.0).unwrap();
        // lexicographically smallest: dg1 gets nothing
        assert!(cold.powers[0].abs() < 1e-12);
        let warm = solver.solve_warm(10.0, Some(&[7.0, 3.0])).unwrap();
        assert!((warm.powers[0] - 7.0).abs() < 1e-9);
        assert!((warm.powers[1] - 3.0).abs() < 1e-9);
    }
}
