//! Pipeline orchestration: runs the analysis stages in dependency order and
//! writes deterministic plain-text outputs.
//!
//! Numbers are printed with 17 significant digits so f64 values survive a
//! write/read round trip and repeated runs produce byte-identical files.

use crate::dispatch::DispatchSolver;
use crate::droop::{build_droop, DroopSet};
use crate::error::{Error, Result};
use crate::osf::{check_monotonicity, sweep_osf_with, CriterionReport, OsfTable};
use crate::scenario::Scenario;
use crate::sim::{report_scenario, simulate_transient, LoadStep, ScenarioReport, Trajectory};
use crate::sosf::{fit_sosf, SosfFit};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Pipeline stages in dependency order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Oracle,
    Osf,
    Criterion,
    Fit,
    Droop,
    Simulate,
    Report,
    All,
}

impl Stage {
    pub const ALL_NAMES: [&'static str; 8] = [
        "oracle",
        "osf",
        "criterion",
        "fit",
        "droop",
        "simulate",
        "report",
        "all",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Oracle => "oracle",
            Stage::Osf => "osf",
            Stage::Criterion => "criterion",
            Stage::Fit => "fit",
            Stage::Droop => "droop",
            Stage::Simulate => "simulate",
            Stage::Report => "report",
            Stage::All => "all",
        }
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Stage> {
        match s {
            "oracle" => Ok(Stage::Oracle),
            "osf" => Ok(Stage::Osf),
            "criterion" => Ok(Stage::Criterion),
            "fit" => Ok(Stage::Fit),
            "droop" => Ok(Stage::Droop),
            "simulate" => Ok(Stage::Simulate),
            "report" => Ok(Stage::Report),
            "all" => Ok(Stage::All),
            other => Err(Error::InvalidConfig(format!(
                "unknown stage '{other}' (expected one of {})",
                Stage::ALL_NAMES.join(", ")
            ))),
        }
    }
}

/// Everything the requested stages computed, plus the files they wrote.
#[derive(Debug)]
pub struct PipelineOutputs {
    pub files: Vec<PathBuf>,
    pub osf: Option<OsfTable>,
    pub criterion: Option<CriterionReport>,
    pub fit: Option<SosfFit>,
    pub droops: Option<DroopSet>,
    pub trajectory: Option<Trajectory>,
    pub report: Option<ScenarioReport>,
}

/// 17 significant digits: enough to reproduce the f64 bit pattern.
pub fn format_g17(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_file(dir: &Path, name: &str, contents: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    files.push(path);
    Ok(())
}

fn csv_row(values: impl IntoIterator<Item = f64>) -> String {
    values
        .into_iter()
        .map(format_g17)
        .collect::<Vec<_>>()
        .join(",")
}

/// Reads a knot-list file (as written next to `sosf.csv`) back into one
/// curve per DG id; the 17-digit formatting makes the reload exact.
pub fn read_knot_curves(path: &Path) -> Result<Vec<(u32, crate::curve::MonotoneCurve)>> {
    let text = std::fs::read_to_string(path)?;
    let mut per_dg: Vec<(u32, Vec<f64>, Vec<f64>)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let parse_err = |what: &str| {
            Error::Scenario(format!(
                "{}:{}: bad knot row ({what})",
                path.display(),
                lineno + 1
            ))
        };
        let id: u32 = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err("dg id"))?;
        let x: f64 = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err("x"))?;
        let y: f64 = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err("y"))?;
        match per_dg.last_mut() {
            Some((last_id, xs, ys)) if *last_id == id => {
                xs.push(x);
                ys.push(y);
            }
            _ => per_dg.push((id, vec![x], vec![y])),
        }
    }
    per_dg
        .into_iter()
        .map(|(id, xs, ys)| Ok((id, crate::curve::MonotoneCurve::new(xs, ys)?)))
        .collect()
}

/// Runs `stage` (and everything it depends on) for `scenario`, writing
/// outputs into `out_dir`. Identical inputs produce byte-identical files.
pub fn run_pipeline(scenario: &Scenario, stage: Stage, out_dir: &Path) -> Result<PipelineOutputs> {
    scenario.validate().map_err(|e| e.in_stage("setup"))?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::from(e).in_stage("setup"))?;

    let n = scenario.fleet.len();
    let dg_ids: Vec<u32> = scenario.fleet.dgs().iter().map(|d| d.id).collect();
    let mut out = PipelineOutputs {
        files: Vec::new(),
        osf: None,
        criterion: None,
        fit: None,
        droops: None,
        trajectory: None,
        report: None,
    };

    let solver =
        DispatchSolver::new(&scenario.fleet, &scenario.oracle).map_err(|e| e.in_stage("oracle"))?;

    // stage: oracle — allocations at the scenario's load steps
    {
        let mut text = String::new();
        let names: Vec<String> = dg_ids.iter().map(|id| format!("p{id}_kw")).collect();
        writeln!(text, "# p_l_kw,{},cost", names.join(",")).unwrap();
        for &load in &scenario.load_steps {
            let alloc = solver.solve(load).map_err(|e| e.in_stage("oracle"))?;
            let mut row = vec![load];
            row.extend(alloc.powers);
            row.push(alloc.cost);
            writeln!(text, "{}", csv_row(row)).unwrap();
        }
        write_file(out_dir, "oracle.csv", &text, &mut out.files)
            .map_err(|e| e.in_stage("oracle"))?;
    }
    if stage == Stage::Oracle {
        return Ok(out);
    }

    // stage: osf
    let table = sweep_osf_with(&solver, scenario.grid_points).map_err(|e| e.in_stage("osf"))?;
    {
        let mut text = String::new();
        let names: Vec<String> = dg_ids.iter().map(|id| format!("g{id}_kw")).collect();
        writeln!(text, "# p_l_kw,{},cost", names.join(",")).unwrap();
        for k in 0..table.len() {
            let mut row = vec![table.loads[k]];
            row.extend(table.row(k));
            row.push(table.costs[k]);
            writeln!(text, "{}", csv_row(row)).unwrap();
        }
        write_file(out_dir, "osf.csv", &text, &mut out.files).map_err(|e| e.in_stage("osf"))?;
    }
    out.osf = Some(table);
    if stage == Stage::Osf {
        return Ok(out);
    }
    let table = out.osf.as_ref().unwrap();

    // stage: criterion
    let report = check_monotonicity(table, &scenario.fleet, scenario.slope_tol);
    {
        let mut text = String::new();
        writeln!(text, "criterion_met: {}", report.criterion_met).unwrap();
        writeln!(text, "slope_tol: {}", format_g17(report.slope_tol)).unwrap();
        for v in &report.per_dg {
            writeln!(text, "dg {}: monotone = {}", v.dg_id, v.monotone).unwrap();
            for iv in &v.violations {
                writeln!(
                    text,
                    "  violation: p_l in [{}, {}], power in [{}, {}]",
                    format_g17(iv.load_range.0),
                    format_g17(iv.load_range.1),
                    format_g17(iv.power_range.0),
                    format_g17(iv.power_range.1),
                )
                .unwrap();
            }
            for pl in &v.exempt_plateaus {
                writeln!(
                    text,
                    "  saturation plateau ({:?}) exempt: p_l in [{}, {}]",
                    pl.bound,
                    format_g17(pl.load_range.0),
                    format_g17(pl.load_range.1),
                )
                .unwrap();
            }
        }
        write_file(out_dir, "criterion.txt", &text, &mut out.files)
            .map_err(|e| e.in_stage("criterion"))?;
    }
    out.criterion = Some(report);
    if stage == Stage::Criterion {
        return Ok(out);
    }
    let report = out.criterion.as_ref().unwrap();

    // stage: fit
    let fit = fit_sosf(table, report, &scenario.fit).map_err(|e| e.in_stage("fit"))?;
    {
        let mut text = String::new();
        let names: Vec<String> = dg_ids.iter().map(|id| format!("gamma{id}_kw")).collect();
        writeln!(text, "# p_l_kw,{}", names.join(",")).unwrap();
        for k in 0..table.len() {
            let mut row = vec![table.loads[k]];
            row.extend(fit.curves.iter().map(|c| c.ys()[k]));
            writeln!(text, "{}", csv_row(row)).unwrap();
        }
        write_file(out_dir, "sosf.csv", &text, &mut out.files).map_err(|e| e.in_stage("fit"))?;

        let mut knots = String::new();
        writeln!(knots, "# dg,p_l_kw,power_kw").unwrap();
        for (id, curve) in dg_ids.iter().zip(&fit.curves) {
            for (x, y) in curve.xs().iter().zip(curve.ys()) {
                writeln!(knots, "{id},{},{}", format_g17(*x), format_g17(*y)).unwrap();
            }
        }
        write_file(out_dir, "sosf_knots.csv", &knots, &mut out.files)
            .map_err(|e| e.in_stage("fit"))?;
    }
    out.fit = Some(fit);
    if stage == Stage::Fit {
        return Ok(out);
    }
    let fit = out.fit.as_ref().unwrap();

    // stage: droop
    let droops = build_droop(
        &fit.curves,
        &dg_ids,
        scenario.droop.f_star,
        scenario.droop.delta_f_max,
    )
    .map_err(|e| e.in_stage("droop"))?;
    {
        for dc in &droops.curves {
            let mut text = String::new();
            writeln!(text, "# power_kw,freq_drop_hz").unwrap();
            for (x, y) in dc.curve.xs().iter().zip(dc.curve.ys()) {
                writeln!(text, "{},{}", format_g17(*x), format_g17(*y)).unwrap();
            }
            write_file(
                out_dir,
                &format!("droop_{}.csv", dc.dg_id),
                &text,
                &mut out.files,
            )
            .map_err(|e| e.in_stage("droop"))?;
        }
    }
    out.droops = Some(droops);
    if stage == Stage::Droop {
        return Ok(out);
    }
    let droops = out.droops.as_ref().unwrap();

    // stage: simulate
    let profile: Vec<LoadStep> = scenario
        .load_steps
        .iter()
        .map(|&level_kw| LoadStep {
            duration_s: scenario.plateau_s,
            level_kw,
        })
        .collect();
    let traj = simulate_transient(droops, &profile, &scenario.dyn_params)
        .map_err(|e| e.in_stage("simulate"))?;
    {
        let mut text = String::new();
        let p_names: Vec<String> = dg_ids.iter().map(|id| format!("p{id}_kw")).collect();
        let f_names: Vec<String> = dg_ids.iter().map(|id| format!("f{id}_hz")).collect();
        writeln!(
            text,
            "# t_s,{},{},p_l_kw",
            p_names.join(","),
            f_names.join(",")
        )
        .unwrap();
        for k in 0..traj.times.len() {
            let mut row = vec![traj.times[k]];
            for i in 0..n {
                row.push(traj.powers[i][k]);
            }
            for i in 0..n {
                row.push(traj.frequencies[i][k]);
            }
            row.push(traj.load[k]);
            writeln!(text, "{}", csv_row(row)).unwrap();
        }
        write_file(out_dir, "trajectory.csv", &text, &mut out.files)
            .map_err(|e| e.in_stage("simulate"))?;
    }
    out.trajectory = Some(traj);
    if stage == Stage::Simulate {
        return Ok(out);
    }

    // stage: report
    let report = report_scenario(&scenario.fleet, droops, &solver, &scenario.load_steps)
        .map_err(|e| e.in_stage("report"))?;
    {
        let mut text = String::new();
        writeln!(text, "scenario: {}", scenario.name).unwrap();
        writeln!(
            text,
            "criterion_met: {}",
            out.criterion.as_ref().unwrap().criterion_met
        )
        .unwrap();
        for row in &report.rows {
            writeln!(text, "load {} kW:", format_g17(row.load)).unwrap();
            writeln!(
                text,
                "  oracle powers: [{}], cost {}",
                csv_row(row.oracle_powers.iter().copied()),
                format_g17(row.oracle_cost)
            )
            .unwrap();
            writeln!(
                text,
                "  droop  powers: [{}], cost {}",
                csv_row(row.steady_powers.iter().copied()),
                format_g17(row.steady_cost)
            )
            .unwrap();
            writeln!(
                text,
                "  gap_rel {}, frequency {} Hz, optimal: {}",
                format_g17(row.gap_rel),
                format_g17(row.frequency),
                row.optimal
            )
            .unwrap();
        }
        write_file(out_dir, "report.txt", &text, &mut out.files)
            .map_err(|e| e.in_stage("report"))?;
    }
    out.report = Some(report);
    Ok(out)
}
