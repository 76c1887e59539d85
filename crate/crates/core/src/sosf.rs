//! Suboptimal solution functions: when the monotonicity criterion fails,
//! replace the offending stretches of the optimal solution functions by the
//! closest slope-floored curves that still sum to the load at every grid
//! node and rejoin the optimum continuously at the window edges.

#![allow(clippy::needless_range_loop)]

use crate::curve::MonotoneCurve;
use crate::error::{Error, Result};
use crate::osf::{CriterionReport, OsfTable};
use crate::qp::{qp_solve, EqualityRow, QpOptions, SlopeChain};

/// Fit parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSpec {
    /// Minimum slope of fitted curves (kW output per kW load).
    pub epsilon: f64,
}

impl Default for FitSpec {
    fn default() -> Self {
        FitSpec { epsilon: 0.02 }
    }
}

/// Result of [`fit_sosf`].
#[derive(Debug, Clone)]
pub struct SosfFit {
    /// One curve per DG over the full load grid; equal to the OSF wherever
    /// no fitting window applies.
    pub curves: Vec<MonotoneCurve>,
    /// Final fitting windows per DG as inclusive node spans.
    pub windows: Vec<Vec<(usize, usize)>>,
    /// Indices of DGs that were actually refitted.
    pub fitted_dgs: Vec<usize>,
    /// Discretized objective `Σ_i Σ_nodes (g_i - γ_i)²·ΔP_L`.
    pub objective: f64,
}

impl SosfFit {
    /// True when node `k` of DG `i` lies inside a fitting window.
    pub fn in_window(&self, dg: usize, node: usize) -> bool {
        self.windows[dg]
            .iter()
            .any(|&(lo, hi)| node >= lo && node <= hi)
    }
}

fn merge_windows(mut ws: Vec<(usize, usize)>) -> Vec<(usize, usize)> {
    ws.sort_unstable();
    let mut out: Vec<(usize, usize)> = Vec::with_capacity(ws.len());
    for (lo, hi) in ws {
        match out.last_mut() {
            Some(last) if lo <= last.1 + 1 => last.1 = last.1.max(hi),
            _ => out.push((lo, hi)),
        }
    }
    out
}

/// Builds a full-grid monotone curve from a table column, snapping slope
/// noise within `1e-9` up to flat.
fn column_curve(loads: &[f64], col: &[f64]) -> Result<MonotoneCurve> {
    match MonotoneCurve::new(loads.to_vec(), col.to_vec()) {
        Ok(c) => Ok(c),
        Err(_) => {
            let mut ys = col.to_vec();
            for k in 1..ys.len() {
                if ys[k] < ys[k - 1] && ys[k - 1] - ys[k] <= 1e-9 {
                    ys[k] = ys[k - 1];
                }
            }
            MonotoneCurve::new(loads.to_vec(), ys)
        }
    }
}

/// Grows `w` until the pinned endpoint rise supports the slope floor,
/// extending toward the side with the larger rise gain (ties go right).
fn widen_for_rise(
    loads: &[f64],
    col: &[f64],
    mut w: (usize, usize),
    eps: f64,
) -> Result<(usize, usize)> {
    let last = loads.len() - 1;
    loop {
        let rise = col[w.1] - col[w.0];
        let need = eps * (loads[w.1] - loads[w.0]);
        if rise >= need - 1e-12 {
            return Ok(w);
        }
        let gain_left = if w.0 > 0 {
            (col[w.0] - col[w.0 - 1]) - eps * (loads[w.0] - loads[w.0 - 1])
        } else {
            f64::NEG_INFINITY
        };
        let gain_right = if w.1 < last {
            (col[w.1 + 1] - col[w.1]) - eps * (loads[w.1 + 1] - loads[w.1])
        } else {
            f64::NEG_INFINITY
        };
        if gain_right >= gain_left && w.1 < last {
            w.1 += 1;
        } else if w.0 > 0 {
            w.0 -= 1;
        } else {
            return Err(Error::FitInfeasible(format!(
                "window rise {rise:.4} below slope floor over the whole grid"
            )));
        }
    }
}

/// Fits suboptimal solution functions per the constrained least-squares
/// principle: minimize the squared distance to the OSFs over the fitting
/// windows subject to per-segment slope `>= epsilon`, per-node sum equal to
/// load, and continuity with the unfitted parts at window endpoints.
///
/// When the report says the criterion is met the OSF columns pass through
/// unchanged (objective zero).
pub fn fit_sosf(table: &OsfTable, report: &CriterionReport, spec: &FitSpec) -> Result<SosfFit> {
    if !spec.epsilon.is_finite() || spec.epsilon <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "epsilon must be > 0, got {}",
            spec.epsilon
        )));
    }
    let n = table.n_dgs();
    let rows = table.len();
    let loads = &table.loads;
    if report.per_dg.len() != n {
        return Err(Error::InvalidConfig(
            "criterion report does not match table".into(),
        ));
    }
    let dx = loads[1] - loads[0];
    for k in 0..rows - 1 {
        if ((loads[k + 1] - loads[k]) - dx).abs() > 1e-9 * dx {
            return Err(Error::InvalidConfig(
                "fit requires a uniform load grid".into(),
            ));
        }
    }

    if report.criterion_met {
        let curves = (0..n)
            .map(|i| column_curve(loads, table.column(i)))
            .collect::<Result<Vec<_>>>()?;
        return Ok(SosfFit {
            curves,
            windows: vec![Vec::new(); n],
            fitted_dgs: Vec::new(),
            objective: 0.0,
        });
    }

    let eps = spec.epsilon;
    let mut windows: Vec<Vec<(usize, usize)>> = report
        .per_dg
        .iter()
        .map(|v| merge_windows(v.violations.iter().map(|iv| iv.node_span).collect()))
        .collect();

    // Widen until the windows are mutually consistent:
    // (a) every window's pinned rise supports the slope floor;
    // (b) on every covered segment the OSF rise of the fitted DGs funds one
    //     slope floor each (their slopes sum to the free share of 1), else
    //     another DG joins the fit over the violating span.
    for round in 0.. {
        if round > 8 * n + 16 {
            return Err(Error::FitInfeasible(
                "window widening did not stabilize".into(),
            ));
        }
        for i in 0..n {
            let col = table.column(i);
            let grown = windows[i]
                .iter()
                .map(|&w| widen_for_rise(loads, col, w, eps))
                .collect::<Result<Vec<_>>>()?;
            windows[i] = merge_windows(grown);
        }
        let active = |i: usize, seg: usize| -> bool {
            windows[i].iter().any(|&(lo, hi)| lo <= seg && seg < hi)
        };
        let mut violating: Vec<usize> = Vec::new();
        for seg in 0..rows - 1 {
            let mut n_active = 0usize;
            let mut rise = 0.0;
            for i in 0..n {
                if active(i, seg) {
                    n_active += 1;
                    rise += table.powers[i][seg + 1] - table.powers[i][seg];
                }
            }
            if n_active > 0 && rise < n_active as f64 * eps * dx - 1e-12 {
                violating.push(seg);
            }
        }
        if violating.is_empty() {
            break;
        }
        // the joiner covers the hull of every active window plus the
        // violating span, so no window-edge pin re-forces a bad value
        let mut hull = (*violating.first().unwrap(), *violating.last().unwrap() + 1);
        for ws in &windows {
            for &(lo, hi) in ws {
                hull.0 = hull.0.min(lo);
                hull.1 = hull.1.max(hi);
            }
        }
        let joiner = (0..n).find(|&i| violating.iter().any(|&seg| !active(i, seg)));
        match joiner {
            Some(i) => {
                windows[i].push(hull);
                windows[i] = merge_windows(windows[i].clone());
            }
            None => {
                return Err(Error::FitInfeasible(format!(
                    "slope budget short on segments around load {:.3} with every dg fitted",
                    loads[hull.0]
                )))
            }
        }
    }

    // Solve; when the projections fail to meet, first pull one more DG into
    // the fit over the full hull, then as a last resort widen every fitted
    // window to the common hull.
    let mut hull_expanded = false;
    loop {
        match solve_windows(table, &windows, eps, dx) {
            Ok((solution, var_of)) => {
                return assemble(table, &windows, eps, dx, solution, var_of);
            }
            Err(err @ Error::QpNoConvergence { .. }) => {
                let hull_lo = windows.iter().flat_map(|ws| ws.iter().map(|w| w.0)).min();
                let hull_hi = windows.iter().flat_map(|ws| ws.iter().map(|w| w.1)).max();
                let (Some(lo), Some(hi)) = (hull_lo, hull_hi) else {
                    return Err(err);
                };
                if let Some(i) = (0..n).find(|&i| windows[i].is_empty()) {
                    let w = widen_for_rise(loads, table.column(i), (lo, hi), eps)?;
                    windows[i] = vec![w];
                } else if !hull_expanded {
                    hull_expanded = true;
                    for i in 0..n {
                        let w = widen_for_rise(loads, table.column(i), (lo, hi), eps)?;
                        windows[i] = vec![w];
                    }
                } else {
                    return Err(err);
                }
            }
            Err(other) => return Err(other),
        }
    }
}

type VarMap = Vec<Vec<Option<usize>>>;

/// Lays out variables (one per DG-window node), builds pins, per-node sum
/// rows, and slope chains, and runs the projection solver.
fn solve_windows(
    table: &OsfTable,
    windows: &[Vec<(usize, usize)>],
    eps: f64,
    _dx: f64,
) -> Result<(Vec<f64>, VarMap)> {
    let n = table.n_dgs();
    let rows = table.len();
    let mut var_of: VarMap = vec![vec![None; rows]; n];
    let mut anchor = Vec::new();
    let mut endpoint = Vec::new(); // parallel to anchor: pinned?
    for (i, ws) in windows.iter().enumerate() {
        for &(lo, hi) in ws {
            for k in lo..=hi {
                var_of[i][k] = Some(anchor.len());
                anchor.push(table.powers[i][k]);
                endpoint.push(k == lo || k == hi);
            }
        }
    }

    let mut eq_rows = Vec::new();
    for (i, ws) in windows.iter().enumerate() {
        for &(lo, hi) in ws {
            eq_rows.push(EqualityRow::pin(
                var_of[i][lo].unwrap(),
                table.powers[i][lo],
            ));
            eq_rows.push(EqualityRow::pin(
                var_of[i][hi].unwrap(),
                table.powers[i][hi],
            ));
        }
    }
    for k in 0..rows {
        let mut free_vars = Vec::new();
        let mut fixed_sum = 0.0;
        for i in 0..n {
            match var_of[i][k] {
                Some(v) if !endpoint[v] => free_vars.push(v),
                _ => fixed_sum += table.powers[i][k],
            }
        }
        if !free_vars.is_empty() {
            eq_rows.push(EqualityRow::sum(free_vars, table.loads[k] - fixed_sum));
        }
    }

    let mut chains = Vec::new();
    for (i, ws) in windows.iter().enumerate() {
        for &(lo, hi) in ws {
            chains.push(SlopeChain {
                vars: (lo..=hi).map(|k| var_of[i][k].unwrap()).collect(),
                xs: table.loads[lo..=hi].to_vec(),
                min_slope: eps,
            });
        }
    }

    let solution = qp_solve(&anchor, &eq_rows, &chains, &QpOptions::default())?;
    Ok((solution, var_of))
}

fn assemble(
    table: &OsfTable,
    windows: &[Vec<(usize, usize)>],
    _eps: f64,
    dx: f64,
    solution: Vec<f64>,
    var_of: VarMap,
) -> Result<SosfFit> {
    let n = table.n_dgs();
    let rows = table.len();
    let loads = &table.loads;
    let mut curves = Vec::with_capacity(n);
    let mut objective = 0.0;
    for i in 0..n {
        let mut ys = table.column(i).to_vec();
        for k in 0..rows {
            if let Some(v) = var_of[i][k] {
                let is_endpoint = windows[i].iter().any(|&(lo, hi)| k == lo || k == hi);
                if !is_endpoint {
                    ys[k] = solution[v];
                }
                objective += (table.powers[i][k] - ys[k]).powi(2) * dx;
            }
        }
        curves.push(column_curve(loads, &ys)?);
    }
    let fitted_dgs: Vec<usize> = (0..n).filter(|&i| !windows[i].is_empty()).collect();
    Ok(SosfFit {
        curves,
        windows: windows.to_vec(),
        fitted_dgs,
        objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{DgSpec, Fleet};
    use crate::osf::{
        check_monotonicity, CriterionReport, DgVerdict, ViolationInterval, DEFAULT_SLOPE_TOL,
    };

    fn two_dg_fleet() -> Fleet {
        Fleet::new(
            vec![
                DgSpec::new(1, 0.0, 1e-3, 1e-2, 0.0, 0.0, 10.0).unwrap(),
                DgSpec::new(2, 0.0, 1e-3, 2e-2, 0.0, 0.0, 10.0).unwrap(),
            ],
            10.0,
        )
        .unwrap()
    }

    /// Synthetic 2-DG table: g1 rises, dips at slope -0.3 over [4, 6], then
    /// recovers at slope 0.6; g2 = load - g1.
    fn dipped_table() -> OsfTable {
        let loads: Vec<f64> = (0..=40).map(|k| 0.25 * k as f64).collect();
        let g1: Vec<f64> = loads
            .iter()
            .map(|&x| {
                if x < 4.0 {
                    0.4 * x
                } else if x < 6.0 {
                    1.6 - 0.3 * (x - 4.0)
                } else {
                    1.0 + 0.6 * (x - 6.0)
                }
            })
            .collect();
        let g2: Vec<f64> = loads.iter().zip(&g1).map(|(&x, &y)| x - y).collect();
        OsfTable {
            loads,
            powers: vec![g1, g2],
            costs: vec![0.0; 41],
        }
    }

    fn span_interval(table: &OsfTable, lo: usize, hi: usize) -> ViolationInterval {
        ViolationInterval {
            node_span: (lo, hi),
            load_range: (table.loads[lo], table.loads[hi]),
            power_range: (0.0, 0.0),
        }
    }

    #[test]
    fn passthrough_when_criterion_met() {
        let loads: Vec<f64> = (0..=10).map(|k| k as f64).collect();
        let g1: Vec<f64> = loads.iter().map(|&x| 0.4 * x).collect();
        let g2: Vec<f64> = loads.iter().map(|&x| 0.6 * x).collect();
        let table = OsfTable {
            loads,
            powers: vec![g1.clone(), g2],
            costs: vec![0.0; 11],
        };
        let report = check_monotonicity(&table, &two_dg_fleet(), DEFAULT_SLOPE_TOL);
        assert!(report.criterion_met);
        let fit = fit_sosf(&table, &report, &FitSpec::default()).unwrap();
        assert_eq!(fit.objective, 0.0);
        assert!(fit.fitted_dgs.is_empty());
        assert_eq!(fit.curves[0].ys(), &g1[..]);
    }

    #[test]
    fn detected_dip_fit_satisfies_all_invariants() {
        let table = dipped_table();
        let report = check_monotonicity(&table, &two_dg_fleet(), DEFAULT_SLOPE_TOL);
        assert!(!report.criterion_met);
        assert!(!report.per_dg[0].monotone);
        let spec = FitSpec { epsilon: 0.02 };
        let fit = fit_sosf(&table, &report, &spec).unwrap();

        for (i, curve) in fit.curves.iter().enumerate() {
            for &(lo, hi) in &fit.windows[i] {
                for k in lo..hi {
                    let slope =
                        (curve.ys()[k + 1] - curve.ys()[k]) / (curve.xs()[k + 1] - curve.xs()[k]);
                    assert!(slope >= spec.epsilon - 1e-9, "dg {i} node {k}: {slope}");
                }
            }
        }
        for k in 0..table.len() {
            let sum: f64 = fit.curves.iter().map(|c| c.ys()[k]).sum();
            assert!((sum - table.loads[k]).abs() <= 1e-6 * table.loads[k].max(1.0));
        }
        // passthrough outside windows is bit-exact
        for i in 0..2 {
            for k in 0..table.len() {
                if !fit.in_window(i, k) {
                    assert_eq!(fit.curves[i].ys()[k], table.powers[i][k]);
                }
            }
        }
        assert!(fit.objective > 0.0);
    }

    #[test]
    fn fit_matches_coarse_brute_force_on_shared_window() {
        // Both DGs fitted over the same hand-picked window so every coarse
        // candidate (gamma_1 free, gamma_2 the sum mirror) is feasible for
        // the QP; the QP optimizes a superset of the candidate family.
        let table = dipped_table();
        let (lo, hi) = (12usize, 32usize); // loads 3.0 .. 8.0
        let report = CriterionReport {
            per_dg: vec![
                DgVerdict {
                    dg_id: 1,
                    monotone: false,
                    violations: vec![span_interval(&table, lo, hi)],
                    exempt_plateaus: vec![],
                },
                DgVerdict {
                    dg_id: 2,
                    monotone: false,
                    violations: vec![span_interval(&table, lo, hi)],
                    exempt_plateaus: vec![],
                },
            ],
            criterion_met: false,
            slope_tol: DEFAULT_SLOPE_TOL,
        };
        let eps = 0.02;
        let fit = fit_sosf(&table, &report, &FitSpec { epsilon: eps }).unwrap();
        assert_eq!(fit.windows[0], vec![(lo, hi)]);
        assert_eq!(fit.windows[1], vec![(lo, hi)]);

        // coarse search: gamma_1 values at 5 equally spaced knots, linearly
        // interpolated onto the grid; slope within [eps, 1 - eps]
        let xs = &table.loads[lo..=hi];
        let g1 = &table.powers[0][lo..=hi];
        let dx = table.loads[1] - table.loads[0];
        let knots = 5usize;
        let stride = (xs.len() - 1) / (knots - 1);
        let kidx: Vec<usize> = (0..knots).map(|j| j * stride).collect();
        let (lo_v, hi_v) = (g1[0], g1[g1.len() - 1]);
        let steps = 14usize;
        let mut best = f64::INFINITY;
        let mut stack = vec![vec![lo_v]];
        while let Some(vals) = stack.pop() {
            if vals.len() == knots - 1 {
                let mut cand = vals.clone();
                cand.push(hi_v);
                let mut grid_vals = Vec::with_capacity(xs.len());
                for (off, &x) in xs.iter().enumerate() {
                    let j = (off / stride).min(knots - 2);
                    let (xa, xb) = (xs[kidx[j]], xs[kidx[j + 1]]);
                    grid_vals.push(cand[j] + (x - xa) / (xb - xa) * (cand[j + 1] - cand[j]));
                }
                let feasible = grid_vals.windows(2).all(|w| {
                    let s = (w[1] - w[0]) / dx;
                    s >= eps - 1e-12 && s <= 1.0 - eps + 1e-12
                });
                if feasible {
                    let obj: f64 = grid_vals
                        .iter()
                        .zip(g1)
                        .map(|(v, g)| 2.0 * (v - g).powi(2) * dx)
                        .sum();
                    best = best.min(obj);
                }
                continue;
            }
            for s in 0..=steps {
                let v = lo_v + (hi_v - lo_v) * s as f64 / steps as f64;
                stack.push([vals.clone(), vec![v]].concat());
            }
        }
        assert!(best.is_finite(), "no feasible coarse candidate found");
        assert!(
            fit.objective <= best + 1e-9,
            "qp objective {} lost to coarse search {}",
            fit.objective,
            best
        );
    }

    #[test]
    fn epsilon_must_be_positive() {
        let table = dipped_table();
        let report = check_monotonicity(&table, &two_dg_fleet(), DEFAULT_SLOPE_TOL);
        assert!(fit_sosf(&table, &report, &FitSpec { epsilon: 0.0 }).is_err());
    }
}
