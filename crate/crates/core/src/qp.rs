//! Projection-based solver for the slope-constrained least-squares fit.
//!
//! The fit minimizes a diagonal quadratic distance to an anchor vector
//! subject to (i) variable-disjoint linear equalities and (ii) minimum-slope
//! chain inequalities. Both constraint sets admit exact Euclidean
//! projections — per-row centering for the equalities, pool-adjacent-
//! violators per chain for the slopes — so Dykstra's alternating projection
//! scheme converges to the constrained minimizer.

use crate::error::{Error, Result};

/// One linear equality `Σ coeffs·vars = rhs`. Rows passed to [`qp_solve`]
/// must not share variables.
#[derive(Debug, Clone)]
pub struct EqualityRow {
    pub vars: Vec<usize>,
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

impl EqualityRow {
    /// Pins a single variable to a value.
    pub fn pin(var: usize, value: f64) -> Self {
        EqualityRow {
            vars: vec![var],
            coeffs: vec![1.0],
            rhs: value,
        }
    }

    /// Unit-coefficient sum constraint.
    pub fn sum(vars: Vec<usize>, rhs: f64) -> Self {
        let coeffs = vec![1.0; vars.len()];
        EqualityRow { vars, coeffs, rhs }
    }
}

/// Minimum-slope chain: consecutive variables must satisfy
/// `(v[k+1] - v[k]) >= min_slope · (xs[k+1] - xs[k])`.
#[derive(Debug, Clone)]
pub struct SlopeChain {
    pub vars: Vec<usize>,
    pub xs: Vec<f64>,
    pub min_slope: f64,
}

/// Solver knobs.
#[derive(Debug, Clone)]
pub struct QpOptions {
    /// Stop when the distance between alternate projections drops below
    /// `gap_tol · scale`.
    pub gap_tol: f64,
    /// Accept a solution whose constraint residuals are below
    /// `feas_tol · scale`.
    pub feas_tol: f64,
    pub max_iterations: usize,
}

impl Default for QpOptions {
    fn default() -> Self {
        QpOptions {
            gap_tol: 1e-12,
            feas_tol: 1e-8,
            max_iterations: 100_000,
        }
    }
}

/// In-place projection onto non-decreasing vectors (unweighted PAVA).
fn pava_nondecreasing(v: &mut [f64]) {
    let n = v.len();
    // (mean, count) blocks
    let mut means = Vec::with_capacity(n);
    let mut counts: Vec<usize> = Vec::with_capacity(n);
    for &value in v.iter() {
        let mut mean = value;
        let mut count = 1usize;
        while let Some(&prev) = means.last() {
            if prev <= mean {
                break;
            }
            let pc = counts.pop().unwrap();
            means.pop();
            mean = (prev * pc as f64 + mean * count as f64) / (pc + count) as f64;
            count += pc;
        }
        means.push(mean);
        counts.push(count);
    }
    let mut k = 0;
    for (mean, count) in means.into_iter().zip(counts) {
        for _ in 0..count {
            v[k] = mean;
            k += 1;
        }
    }
}

/// Exact projection onto `{v : slope(v) >= min_slope}` along `xs`:
/// subtract the `min_slope·x` ramp, project onto non-decreasing, add back.
pub fn project_min_slope(xs: &[f64], values: &mut [f64], min_slope: f64) {
    debug_assert_eq!(xs.len(), values.len());
    for (v, &x) in values.iter_mut().zip(xs) {
        *v -= min_slope * x;
    }
    pava_nondecreasing(values);
    for (v, &x) in values.iter_mut().zip(xs) {
        *v += min_slope * x;
    }
}

fn project_equalities(v: &mut [f64], rows: &[EqualityRow]) {
    for row in rows {
        let mut dot = 0.0;
        let mut norm2 = 0.0;
        for (&idx, &c) in row.vars.iter().zip(&row.coeffs) {
            dot += c * v[idx];
            norm2 += c * c;
        }
        let shift = (dot - row.rhs) / norm2;
        for (&idx, &c) in row.vars.iter().zip(&row.coeffs) {
            v[idx] -= shift * c;
        }
    }
}

fn eq_residual(v: &[f64], rows: &[EqualityRow]) -> f64 {
    rows.iter()
        .map(|row| {
            let dot: f64 = row
                .vars
                .iter()
                .zip(&row.coeffs)
                .map(|(&idx, &c)| c * v[idx])
                .sum();
            (dot - row.rhs).abs()
        })
        .fold(0.0, f64::max)
}

fn slope_residual(v: &[f64], chains: &[SlopeChain]) -> f64 {
    let mut worst: f64 = 0.0;
    for chain in chains {
        for k in 0..chain.vars.len() - 1 {
            let dx = chain.xs[k + 1] - chain.xs[k];
            let deficit = chain.min_slope * dx - (v[chain.vars[k + 1]] - v[chain.vars[k]]);
            worst = worst.max(deficit);
        }
    }
    worst
}

/// Projects `anchor` onto the intersection of the equality rows and the
/// slope chains (equivalently: minimizes the uniform-weight quadratic
/// distance subject to those constraints). Deterministic.
pub fn qp_solve(
    anchor: &[f64],
    eq_rows: &[EqualityRow],
    chains: &[SlopeChain],
    opts: &QpOptions,
) -> Result<Vec<f64>> {
    let n = anchor.len();
    let mut seen = vec![false; n];
    for row in eq_rows {
        if row.vars.len() != row.coeffs.len() || row.vars.is_empty() {
            return Err(Error::InvalidConfig("malformed equality row".into()));
        }
        for &idx in &row.vars {
            if idx >= n {
                return Err(Error::InvalidConfig("equality var out of range".into()));
            }
            if seen[idx] {
                return Err(Error::InvalidConfig(
                    "equality rows must be variable-disjoint".into(),
                ));
            }
            seen[idx] = true;
        }
    }
    for chain in chains {
        if chain.vars.len() < 2 || chain.vars.len() != chain.xs.len() {
            return Err(Error::InvalidConfig("malformed slope chain".into()));
        }
        if chain.vars.iter().any(|&idx| idx >= n) {
            return Err(Error::InvalidConfig("chain var out of range".into()));
        }
    }

    let scale = anchor.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut x = anchor.to_vec();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut a = vec![0.0; n];
    let mut chain_buf = Vec::new();

    let mut gap = f64::INFINITY;
    let mut window_best = f64::INFINITY;
    for it in 1..=opts.max_iterations {
        // a = P_A(x + p)
        for k in 0..n {
            a[k] = x[k] + p[k];
        }
        project_equalities(&mut a, eq_rows);
        for k in 0..n {
            p[k] = x[k] + p[k] - a[k];
        }
        // b = P_B(a + q), stored into x
        for k in 0..n {
            x[k] = a[k] + q[k];
        }
        for chain in chains {
            chain_buf.clear();
            chain_buf.extend(chain.vars.iter().map(|&idx| x[idx]));
            project_min_slope(&chain.xs, &mut chain_buf, chain.min_slope);
            for (&idx, &v) in chain.vars.iter().zip(&chain_buf) {
                x[idx] = v;
            }
        }
        for k in 0..n {
            let b = x[k];
            q[k] = a[k] + q[k] - b;
        }
        gap = a
            .iter()
            .zip(x.iter())
            .map(|(u, v)| (u - v).abs())
            .fold(0.0, f64::max);
        if gap <= opts.gap_tol * scale {
            break;
        }
        // stalled well above tolerance => the sets likely do not intersect
        if it % 2000 == 0 {
            if gap > 1e4 * opts.gap_tol * scale && gap > 0.999 * window_best {
                return Err(Error::QpNoConvergence {
                    iterations: it,
                    gap,
                    eq_residual: eq_residual(&a, eq_rows),
                    slope_residual: slope_residual(&a, chains),
                });
            }
            window_best = gap;
        }
    }

    let eq_res = eq_residual(&a, eq_rows);
    let slope_res = slope_residual(&a, chains);
    if gap > opts.gap_tol * scale
        || eq_res > opts.feas_tol * scale
        || slope_res > opts.feas_tol * scale
    {
        return Err(Error::QpNoConvergence {
            iterations: opts.max_iterations,
            gap,
            eq_residual: eq_res,
            slope_residual: slope_res,
        });
    }
    Ok(a)
}
