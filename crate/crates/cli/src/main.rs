//! CLI for the droop-dispatch pipeline.
//!
//! ```text
//! ecodroop <stage> --scenario <name|path> [--out DIR]
//!          [--grid-points N] [--epsilon X] [--delta-f-max X]
//! ```
//!
//! Stages: oracle, osf, criterion, fit, droop, simulate, report, all.

use clap::Parser;
use ecodroop::pipeline::{run_pipeline, Stage};
use ecodroop::scenario::load_scenario;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "ecodroop",
    about = "Economic dispatch via decentralized droop control: analyze, fit, synthesize, simulate",
    version
)]
struct Args {
    /// Pipeline stage to run (dependencies run first)
    #[arg(value_parser = parse_stage)]
    stage: Stage,

    /// Built-in scenario name (case1, case2, case3) or a TOML config path
    #[arg(long)]
    scenario: String,

    /// Output directory for the stage artifacts
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Override the solution-function sweep resolution
    #[arg(long)]
    grid_points: Option<usize>,

    /// Override the fit's minimum slope
    #[arg(long)]
    epsilon: Option<f64>,

    /// Override the frequency deviation budget (Hz)
    #[arg(long)]
    delta_f_max: Option<f64>,
}

fn parse_stage(s: &str) -> Result<Stage, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut scenario = match load_scenario(&args.scenario) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    if let Some(n) = args.grid_points {
        scenario.grid_points = n;
    }
    if let Some(eps) = args.epsilon {
        scenario.fit.epsilon = eps;
    }
    if let Some(df) = args.delta_f_max {
        scenario.droop.delta_f_max = df;
    }

    let out_dir = args.out.join(&scenario.name);
    match run_pipeline(&scenario, args.stage, &out_dir) {
        Ok(outputs) => {
            if let Some(report) = &outputs.criterion {
                println!(
                    "criterion_met: {} ({} of {} dgs monotone)",
                    report.criterion_met,
                    report.per_dg.iter().filter(|v| v.monotone).count(),
                    report.per_dg.len()
                );
            }
            if let Some(report) = &outputs.report {
                for row in &report.rows {
                    println!(
                        "load {:>8.3} kW: gap_rel {:.3e}, f {:.4} Hz, optimal: {}",
                        row.load, row.gap_rel, row.frequency, row.optimal
                    );
                }
            }
            for file in &outputs.files {
                println!("wrote {}", file.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
