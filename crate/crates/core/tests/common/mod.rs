//! Shared fixtures: each built-in scenario's full pipeline run, computed
//! once per test binary.

use ecodroop::pipeline::{run_pipeline, PipelineOutputs, Stage};
use ecodroop::scenario::{builtin, Scenario};
use std::sync::OnceLock;

pub struct CaseFixture {
    pub scenario: Scenario,
    pub outputs: PipelineOutputs,
    _dir: tempfile::TempDir,
}

fn run_case(name: &str) -> CaseFixture {
    let scenario = builtin(name).unwrap_or_else(|| panic!("unknown builtin {name}"));
    let dir = tempfile::tempdir().expect("tempdir");
    let outputs = run_pipeline(&scenario, Stage::All, dir.path())
        .unwrap_or_else(|e| panic!("{name} pipeline failed: {e}"));
    CaseFixture {
        scenario,
        outputs,
        _dir: dir,
    }
}

macro_rules! fixture {
    ($fn_name:ident, $case:literal) => {
        pub fn $fn_name() -> &'static CaseFixture {
            static CELL: OnceLock<CaseFixture> = OnceLock::new();
            CELL.get_or_init(|| run_case($case))
        }
    };
}

fixture!(case1, "case1");
fixture!(case2, "case2");
fixture!(case3, "case3");
