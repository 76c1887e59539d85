//! Optimal-solution-function analysis: sweep the load range, check the
//! decentralized-optimality criterion, and verify the sum identity.
//!
//! The criterion asks whether every DG's optimal output is strictly
//! increasing in total load. Sampled tables need two refinements of that
//! statement:
//!
//! * a plateau where a DG is parked at a capacity bound (0 or `p_max`) and
//!   which touches the corresponding end of the load range is *saturation*,
//!   implementable by droop clipping, provided the plateau is entered/left
//!   continuously — such runs are exempt and reported separately;
//! * a plateau exit cell on which any DG's output *falls* certifies a
//!   reallocation discontinuity (segment slopes sum to one, so a rise
//!   steeper than unit slope forces a drop elsewhere) — such runs are real
//!   violations.

use crate::cost::Fleet;
use crate::dispatch::{DispatchSolver, OracleConfig};
use crate::error::{Error, Result};

/// Default slope threshold (kW per kW) below which a grid cell counts as
/// non-increasing.
pub const DEFAULT_SLOPE_TOL: f64 = 1e-4;

/// Sampled optimal solution functions over a uniform load grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OsfTable {
    /// Strictly increasing load grid covering `[0, p_l_max]` (kW).
    pub loads: Vec<f64>,
    /// One column per DG: `powers[i][k]` is DG i's optimal output at
    /// `loads[k]`.
    pub powers: Vec<Vec<f64>>,
    /// Optimal total cost at each load.
    pub costs: Vec<f64>,
}

impl OsfTable {
    pub fn n_dgs(&self) -> usize {
        self.powers.len()
    }

    pub fn len(&self) -> usize {
        self.loads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loads.is_empty()
    }

    pub fn column(&self, dg: usize) -> &[f64] {
        &self.powers[dg]
    }

    /// Power vector at grid row `k`.
    pub fn row(&self, k: usize) -> Vec<f64> {
        self.powers.iter().map(|col| col[k]).collect()
    }

    /// Max over rows of `|Σ_i g_i(P_L) - P_L|`.
    pub fn max_sum_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, &load) in self.loads.iter().enumerate() {
            let sum: f64 = self.powers.iter().map(|col| col[k]).sum();
            worst = worst.max((sum - load).abs());
        }
        worst
    }
}

/// Sweeps the load range with the dispatch oracle, warm-starting each row
/// from the previous one so tie-breaking yields a continuous branch.
pub fn sweep_osf(fleet: &Fleet, grid_points: usize, cfg: &OracleConfig) -> Result<OsfTable> {
    if grid_points < 2 {
        return Err(Error::InvalidConfig(format!(
            "sweep needs at least 2 grid points, got {grid_points}"
        )));
    }
    let solver = DispatchSolver::new(fleet, cfg)?;
    sweep_osf_with(&solver, grid_points)
}

/// Sweep variant reusing an existing solver's value tables.
pub fn sweep_osf_with(solver: &DispatchSolver, grid_points: usize) -> Result<OsfTable> {
    if grid_points < 2 {
        return Err(Error::InvalidConfig(format!(
            "sweep needs at least 2 grid points, got {grid_points}"
        )));
    }
    let fleet = solver.fleet();
    let p_l_max = fleet.p_l_max();
    let n = fleet.len();
    let mut loads = Vec::with_capacity(grid_points);
    let mut powers = vec![Vec::with_capacity(grid_points); n];
    let mut costs = Vec::with_capacity(grid_points);
    let mut warm: Option<Vec<f64>> = None;
    for k in 0..grid_points {
        let load = p_l_max * k as f64 / (grid_points - 1) as f64;
        let alloc = solver.solve_warm(load, warm.as_deref())?;
        for (col, &p) in powers.iter_mut().zip(&alloc.powers) {
            col.push(p);
        }
        costs.push(alloc.cost);
        loads.push(load);
        warm = Some(alloc.powers);
    }
    Ok(OsfTable {
        loads,
        powers,
        costs,
    })
}

/// Max absolute residual of the sum identity `Σ g_i(P_L) = P_L` (kW).
pub fn verify_sum(table: &OsfTable) -> f64 {
    table.max_sum_residual()
}

/// Where a saturation plateau sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlateauBound {
    Zero,
    Capacity,
}

/// A saturation plateau that was exempted from the monotonicity check.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauInfo {
    pub bound: PlateauBound,
    /// Load interval covered by the plateau (kW).
    pub load_range: (f64, f64),
}

/// One non-exempt monotonicity violation, already extended by one grid cell
/// on each side.
#[derive(Debug, Clone, PartialEq)]
pub struct ViolationInterval {
    /// Node-index span `[lo, hi]` into the table grid (inclusive).
    pub node_span: (usize, usize),
    /// The same span in load coordinates (kW).
    pub load_range: (f64, f64),
    /// Range of the DG's output over the span (kW).
    pub power_range: (f64, f64),
}

/// Per-DG verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct DgVerdict {
    pub dg_id: u32,
    pub monotone: bool,
    pub violations: Vec<ViolationInterval>,
    pub exempt_plateaus: Vec<PlateauInfo>,
}

/// Monotonicity report over a sampled OSF table.
#[derive(Debug, Clone, PartialEq)]
pub struct CriterionReport {
    pub per_dg: Vec<DgVerdict>,
    pub criterion_met: bool,
    pub slope_tol: f64,
}

impl CriterionReport {
    pub fn verdict(&self, dg: usize) -> &DgVerdict {
        &self.per_dg[dg]
    }
}

/// Checks each OSF column for strict increase: cell `k` fails when
/// `Δg < slope_tol·ΔP_L`. Failing runs pinned at a bound and touching the
/// matching end of the range are exempt saturation, unless any DG's output
/// falls on the adjacent transition cell.
pub fn check_monotonicity(table: &OsfTable, fleet: &Fleet, slope_tol: f64) -> CriterionReport {
    let n = table.n_dgs();
    let rows = table.len();
    let last_cell = rows - 2;

    // cell is "clean" when no DG's output decreases across it
    let clean_cell = |cell: usize| -> bool {
        let dx = table.loads[cell + 1] - table.loads[cell];
        table
            .powers
            .iter()
            .all(|col| col[cell + 1] - col[cell] >= -slope_tol * dx)
    };

    let mut per_dg = Vec::with_capacity(n);
    for (i, dg) in fleet.dgs().iter().enumerate() {
        let col = table.column(i);
        let bad: Vec<bool> = (0..=last_cell)
            .map(|k| col[k + 1] - col[k] < slope_tol * (table.loads[k + 1] - table.loads[k]))
            .collect();

        let mut violations = Vec::new();
        let mut exempt = Vec::new();
        let mut k = 0;
        while k <= last_cell {
            if !bad[k] {
                k += 1;
                continue;
            }
            let start = k;
            while k < last_cell && bad[k + 1] {
                k += 1;
            }
            let end = k; // run covers cells start..=end, nodes start..=end+1
            k += 1;

            let zero_tol = 1e-9;
            let cap_tol = 1e-9 * dg.p_max.max(1.0);
            let nodes = &col[start..=end + 1];
            let at_zero = nodes.iter().all(|&v| v.abs() <= zero_tol);
            let at_cap = nodes.iter().all(|&v| (v - dg.p_max).abs() <= cap_tol);

            let head_exempt = at_zero && start == 0 && (end == last_cell || clean_cell(end + 1));
            let tail_exempt = at_cap && end == last_cell && (start == 0 || clean_cell(start - 1));

            if head_exempt || tail_exempt {
                exempt.push(PlateauInfo {
                    bound: if head_exempt {
                        PlateauBound::Zero
                    } else {
                        PlateauBound::Capacity
                    },
                    load_range: (table.loads[start], table.loads[end + 1]),
                });
            } else {
                let lo = start.saturating_sub(1);
                let hi = (end + 2).min(rows - 1);
                let span = &col[lo..=hi];
                let p_lo = span.iter().cloned().fold(f64::INFINITY, f64::min);
                let p_hi = span.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                violations.push(ViolationInterval {
                    node_span: (lo, hi),
                    load_range: (table.loads[lo], table.loads[hi]),
                    power_range: (p_lo, p_hi),
                });
            }
        }
        per_dg.push(DgVerdict {
            dg_id: dg.id,
            monotone: violations.is_empty(),
            violations,
            exempt_plateaus: exempt,
        });
    }
    let criterion_met = per_dg.iter().all(|v| v.monotone);
    CriterionReport {
        per_dg,
        criterion_met,
        slope_tol,
    }
}

/// Looks for two grid loads at which DG `dg`'s optimal output is (nearly)
/// equal while the allocation differs elsewhere — the premise of the
/// impossibility argument for non-monotone solution functions. Returns the
/// first such row pair.
pub fn find_reallocation_witness(
    table: &OsfTable,
    dg: usize,
    value_tol: f64,
    min_other_gap: f64,
) -> Option<(usize, usize)> {
    let col = table.column(dg);
    for i in 0..table.len() {
        for j in (i + 1)..table.len() {
            if (col[i] - col[j]).abs() > value_tol {
                continue;
            }
            let differs = (0..table.n_dgs()).any(|o| {
                o != dg && (table.powers[o][i] - table.powers[o][j]).abs() >= min_other_gap
            });
            if differs {
                return Some((i, j));
            }
        }
    }
    None
}
