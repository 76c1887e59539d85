//! Acceptance suite: one test per release criterion, each printing a
//! PASS line (run with `--nocapture` to see them on success).

#![allow(clippy::needless_range_loop)]

mod common;

use common::{case1, case2, case3};
use ecodroop::cost::{DgSpec, Fleet};
use ecodroop::dispatch::{exhaustive_oracle, DispatchSolver, OracleConfig};
use ecodroop::osf::{find_reallocation_witness, sweep_osf};
use ecodroop::pipeline::{run_pipeline, Stage};
use ecodroop::qp::{qp_solve, EqualityRow, QpOptions, SlopeChain};
use ecodroop::scenario::builtin;
use ecodroop::sim::solve_steady_state;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn pass(n: u32, what: &str) {
    println!("acceptance: criterion {n} ({what}): PASS");
}

#[test]
fn criterion_01_monotonicity_verdicts() {
    let t0 = Instant::now();
    let c1 = case1();
    let report = c1.outputs.criterion.as_ref().unwrap();
    assert!(
        report.criterion_met,
        "case1 must satisfy the criterion: {report:?}"
    );
    assert!(report.per_dg.iter().all(|v| v.monotone));
    assert_eq!(report.per_dg.len(), 4);

    let c2 = case2();
    let report2 = c2.outputs.criterion.as_ref().unwrap();
    assert!(!report2.criterion_met, "case2 must fail the criterion");
    let dg1 = &report2.per_dg[0];
    assert_eq!(dg1.dg_id, 1);
    assert!(!dg1.monotone, "case2 dg1 must be flagged");
    assert!(!dg1.violations.is_empty());

    // a fresh timed sweep at the stated resolution
    let t_sweep = Instant::now();
    let _ = sweep_osf(&c1.scenario.fleet, 361, &c1.scenario.oracle).unwrap();
    let sweep_s = t_sweep.elapsed().as_secs_f64();
    assert!(sweep_s < 5.0, "sweep took {sweep_s:.2} s, budget is 5 s");
    let _ = t0;
    pass(1, "criterion verdicts for case1/case2, sweep under 5 s");
}

#[test]
fn criterion_02_case1_optimality() {
    let c1 = case1();
    let droops = c1.outputs.droops.as_ref().unwrap();
    let solver = DispatchSolver::new(&c1.scenario.fleet, &c1.scenario.oracle).unwrap();
    for &load in &[10.0, 15.0, 20.0] {
        let oracle = solver.solve(load).unwrap();
        let ss = solve_steady_state(&c1.scenario.fleet, droops, &solver, load).unwrap();
        for (i, (p, o)) in ss.powers.iter().zip(&oracle.powers).enumerate() {
            assert!(
                (p - o).abs() <= 0.1,
                "load {load}: dg{} steady {p:.4} vs oracle {o:.4}",
                i + 1
            );
        }
        assert!(
            ss.gap_rel <= 1e-4,
            "load {load}: gap_rel {} above 1e-4",
            ss.gap_rel
        );
        assert!(ss.gap_rel >= -1e-9);
    }
    pass(2, "case1 steady states match the oracle at 10/15/20 kW");
}

#[test]
fn criterion_03_case2_split_behavior() {
    let c2 = case2();
    let droops = c2.outputs.droops.as_ref().unwrap();
    let solver = DispatchSolver::new(&c2.scenario.fleet, &c2.scenario.oracle).unwrap();
    let mut failures = Vec::new();

    let ss20 = solve_steady_state(&c2.scenario.fleet, droops, &solver, 20.0).unwrap();
    println!("case2 load 20: gap_rel {:.3e}", ss20.gap_rel);
    if ss20.gap_rel > 1e-4 {
        failures.push(format!("load 20: gap_rel {} above 1e-4", ss20.gap_rel));
    }

    for &load in &[10.0, 15.0] {
        let oracle = solver.solve(load).unwrap();
        let ss = solve_steady_state(&c2.scenario.fleet, droops, &solver, load).unwrap();
        let worst = ss
            .powers
            .iter()
            .zip(&oracle.powers)
            .map(|(p, o)| (p - o).abs())
            .fold(0.0f64, f64::max);
        println!(
            "case2 load {load}: gap_rel {:.3e}, max per-dg deviation {worst:.3} kW",
            ss.gap_rel
        );
        if !(0.0..=0.05).contains(&ss.gap_rel) {
            failures.push(format!(
                "load {load}: gap_rel {} outside [0, 0.05]",
                ss.gap_rel
            ));
        }
        for (i, (p, o)) in ss.powers.iter().zip(&oracle.powers).enumerate() {
            if (p - o).abs() > 1.5 {
                // note: the oracle's dg1 output jumps by ~4.7 kW near 17.35 kW
                // of load; a monotone surrogate family summing to the load can
                // climb at most 1 - 3*epsilon per kW of load, so its dg1 value
                // at 15 kW is forced above ~2.3 kW no matter how the fit
                // windows are chosen. This clause cannot hold together with
                // exact coincidence at 20 kW.
                failures.push(format!(
                    "load {load}: dg{} steady {p:.4} vs oracle {o:.4} differs by more than 1.5 kW",
                    i + 1
                ));
            }
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("; "));
    pass(3, "case2 coincides at 20 kW and stays close at 10/15 kW");
}

#[test]
fn criterion_04_case3_transient_matches_steady_state() {
    let c3 = case3();
    let droops = c3.outputs.droops.as_ref().unwrap();
    let traj = c3.outputs.trajectory.as_ref().unwrap();
    let solver = DispatchSolver::new(&c3.scenario.fleet, &c3.scenario.oracle).unwrap();
    assert_eq!(traj.plateau_finals.len(), 3);
    for (final_p, &level) in traj.plateau_finals.iter().zip(&c3.scenario.load_steps) {
        let ss = solve_steady_state(&c3.scenario.fleet, droops, &solver, level).unwrap();
        for (i, (p, s)) in final_p.iter().zip(&ss.powers).enumerate() {
            assert!(
                (p - s).abs() <= 1e-4,
                "plateau {level} kW: dg{} transient {p:.6} vs steady {s:.6}",
                i + 1
            );
        }
    }
    pass(
        4,
        "case3 plateau finals match the steady states within 1e-4 kW",
    );
}

#[test]
fn criterion_05_sum_identity_on_every_sweep() {
    for (name, fx) in [("case1", case1()), ("case2", case2()), ("case3", case3())] {
        let table = fx.outputs.osf.as_ref().unwrap();
        let residual = table.max_sum_residual();
        let budget = 1e-6 * fx.scenario.fleet.p_l_max().max(1.0);
        assert!(
            residual <= budget,
            "{name}: sum residual {residual:.3e} above {budget:.3e}"
        );
    }
    pass(5, "sum identity holds on all three sweeps");
}

#[test]
fn criterion_06_synchronization_identity() {
    for (name, fx) in [("case1", case1()), ("case2", case2())] {
        let droops = fx.outputs.droops.as_ref().unwrap();
        let table = fx.outputs.osf.as_ref().unwrap();
        let gain = droops.config.gain;
        for (dc, gamma) in droops.curves.iter().zip(&droops.effective_solutions) {
            for &x in &table.loads {
                let p = gamma.eval(x).unwrap();
                let lam = dc.freq_drop(p).unwrap();
                assert!(
                    (lam - gain * x).abs() <= 1e-6,
                    "{name} dg{}: droop value {lam:.9} vs gain*load {:.9} at {x}",
                    dc.dg_id,
                    gain * x
                );
            }
        }
        // the effective curves track the fitted curves up to the slope floor
        for (gamma, fitted) in droops
            .effective_solutions
            .iter()
            .zip(&fx.outputs.fit.as_ref().unwrap().curves)
        {
            for (&a, &b) in gamma.ys().iter().zip(fitted.ys()) {
                assert!((a - b).abs() <= 1e-4);
            }
        }
    }
    pass(
        6,
        "droop-of-solution equals gain times load on the whole grid",
    );
}

#[test]
fn criterion_07_reallocation_witness_exists() {
    let c2 = case2();
    let table = c2.outputs.osf.as_ref().unwrap();
    let witness = find_reallocation_witness(table, 0, 1e-9, 0.5);
    assert!(
        witness.is_some(),
        "case2 must have two loads with equal dg1 output and different allocations"
    );
    let (i, j) = witness.unwrap();
    assert!((table.powers[0][i] - table.powers[0][j]).abs() <= 1e-9);
    assert!(table.loads[i] < table.loads[j]);
    pass(
        7,
        "equal dg1 output at two loads with different allocations",
    );
}

#[test]
fn criterion_08_oracle_soundness() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0eca_d00b);
    let step: f64 = 0.01;
    for trial in 0..200 {
        let p_max_1 = (rng.random_range(2.0f64..10.0) / step).round() * step;
        let p_max_2 = (rng.random_range(2.0f64..10.0) / step).round() * step;
        let mk = |id: u32, p_max: f64, rng: &mut ChaCha8Rng| {
            DgSpec::new(
                id,
                rng.random_range(0.0..4e-4),
                rng.random_range(-5e-3..6e-3),
                rng.random_range(4e-3..6e-2),
                rng.random_range(0.0..4e-3),
                rng.random_range(0.0..0.3),
                p_max,
            )
            .unwrap()
        };
        let d1 = mk(1, p_max_1, &mut rng);
        let d2 = mk(2, p_max_2, &mut rng);
        let capacity = p_max_1 + p_max_2;
        let fleet = Fleet::new(vec![d1, d2], capacity).unwrap();
        let k_max = (capacity / step).round() as u64;
        let load = rng.random_range(0..=k_max) as f64 * step;
        let cfg = OracleConfig {
            grid_step: step,
            refine: false,
            refine_tol: 1e-7,
        };
        let dp = DispatchSolver::new(&fleet, &cfg)
            .unwrap()
            .solve(load)
            .unwrap();
        let brute = exhaustive_oracle(&fleet, load, step).unwrap();
        assert!(
            (dp.cost - brute.cost).abs() <= 1e-6 * dp.cost.abs().max(1.0),
            "trial {trial}: dp {} vs exhaustive {} at load {load}",
            dp.cost,
            brute.cost
        );
    }

    // analytic marginal cost against central finite differences
    let h = 1e-5;
    for _ in 0..1000 {
        let p_max = rng.random_range(1.0..10.0);
        let dg = DgSpec::new(
            1,
            rng.random_range(0.0..4e-4),
            rng.random_range(-5e-3..6e-3),
            rng.random_range(4e-3..6e-2),
            rng.random_range(0.0..4e-3),
            rng.random_range(0.0..0.3),
            p_max,
        )
        .unwrap();
        let p = rng.random_range(h..p_max - h);
        let analytic = dg.marginal_cost(p).unwrap();
        let fd = (dg.cost(p + h).unwrap() - dg.cost(p - h).unwrap()) / (2.0 * h);
        assert!(
            (analytic - fd).abs() <= 1e-6 * analytic.abs().max(1.0),
            "marginal {analytic} vs fd {fd} at p={p}"
        );
    }
    pass(
        8,
        "dp oracle matches brute force; marginals match finite differences",
    );
}

#[test]
fn criterion_09_sosf_feasibility_and_optimality() {
    // case2: fitted curves obey the slope floor and the sum identity, and
    // the objective beats three independently built feasible candidates.
    let c2 = case2();
    let fit = c2.outputs.fit.as_ref().unwrap();
    let table = c2.outputs.osf.as_ref().unwrap();
    let eps = c2.scenario.fit.epsilon;
    for (i, curve) in fit.curves.iter().enumerate() {
        for &(lo, hi) in &fit.windows[i] {
            for k in lo..hi {
                let slope =
                    (curve.ys()[k + 1] - curve.ys()[k]) / (curve.xs()[k + 1] - curve.xs()[k]);
                assert!(slope >= eps - 1e-9, "dg{} node {k}: slope {slope}", i + 1);
            }
        }
    }
    for k in 0..table.len() {
        let sum: f64 = fit.curves.iter().map(|c| c.ys()[k]).sum();
        assert!(
            (sum - table.loads[k]).abs() <= 1e-6 * table.loads[k].max(1.0),
            "node {k}"
        );
    }

    // rebuild the fit's QP over its final windows at stiffer slope floors;
    // those solutions are feasible for the real floor but suboptimal
    let objective_of = |curves: &[Vec<f64>]| -> f64 {
        let dx = table.loads[1] - table.loads[0];
        let mut obj = 0.0;
        for i in 0..table.n_dgs() {
            for &(lo, hi) in &fit.windows[i] {
                for k in lo..=hi {
                    obj += (curves[i][k] - table.powers[i][k]).powi(2) * dx;
                }
            }
        }
        obj
    };
    let solve_with_eps = |eps_c: f64| -> Vec<Vec<f64>> {
        let n = table.n_dgs();
        let rows = table.len();
        let mut var_of = vec![vec![usize::MAX; rows]; n];
        let mut anchor = Vec::new();
        for i in 0..n {
            for &(lo, hi) in &fit.windows[i] {
                for k in lo..=hi {
                    var_of[i][k] = anchor.len();
                    anchor.push(table.powers[i][k]);
                }
            }
        }
        let mut eqs = Vec::new();
        let mut endpoint = vec![false; anchor.len()];
        for i in 0..n {
            for &(lo, hi) in &fit.windows[i] {
                endpoint[var_of[i][lo]] = true;
                endpoint[var_of[i][hi]] = true;
                eqs.push(EqualityRow::pin(var_of[i][lo], table.powers[i][lo]));
                eqs.push(EqualityRow::pin(var_of[i][hi], table.powers[i][hi]));
            }
        }
        for k in 0..rows {
            let mut vars = Vec::new();
            let mut fixed = 0.0;
            for i in 0..n {
                let v = var_of[i][k];
                if v != usize::MAX && !endpoint[v] {
                    vars.push(v);
                } else {
                    fixed += table.powers[i][k];
                }
            }
            if !vars.is_empty() {
                eqs.push(EqualityRow::sum(vars, table.loads[k] - fixed));
            }
        }
        let chains: Vec<SlopeChain> = (0..n)
            .flat_map(|i| fit.windows[i].iter().map(move |&(lo, hi)| (i, lo, hi)))
            .map(|(i, lo, hi)| SlopeChain {
                vars: (lo..=hi).map(|k| var_of[i][k]).collect(),
                xs: table.loads[lo..=hi].to_vec(),
                min_slope: eps_c,
            })
            .collect();
        let sol = qp_solve(&anchor, &eqs, &chains, &QpOptions::default()).unwrap();
        let mut curves: Vec<Vec<f64>> = (0..n).map(|i| table.powers[i].clone()).collect();
        for i in 0..n {
            for &(lo, hi) in &fit.windows[i] {
                for k in lo + 1..hi {
                    curves[i][k] = sol[var_of[i][k]];
                }
            }
        }
        curves
    };
    let cand_a = solve_with_eps(1.5 * eps);
    let cand_b = solve_with_eps(2.0 * eps);
    let cand_c: Vec<Vec<f64>> = cand_a
        .iter()
        .zip(&cand_b)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect())
        .collect();
    for (label, cand) in [("1.5eps", &cand_a), ("2eps", &cand_b), ("blend", &cand_c)] {
        // verify candidate feasibility for the real floor
        for i in 0..table.n_dgs() {
            for &(lo, hi) in &fit.windows[i] {
                for k in lo..hi {
                    let dxk = table.loads[k + 1] - table.loads[k];
                    assert!(
                        cand[i][k + 1] - cand[i][k] >= (eps - 1e-9) * dxk,
                        "candidate {label} infeasible at dg{} node {k}",
                        i + 1
                    );
                }
            }
        }
        let cand_obj = objective_of(cand);
        assert!(
            fit.objective <= cand_obj + 1e-9,
            "fit {} lost to candidate {label} at {}",
            fit.objective,
            cand_obj
        );
    }

    // met scenarios pass through with objective zero, which no feasible
    // candidate can beat
    for fx in [case1(), case3()] {
        let f = fx.outputs.fit.as_ref().unwrap();
        assert_eq!(f.objective, 0.0);
        assert!(f.fitted_dgs.is_empty());
    }
    pass(
        9,
        "sosf fit is feasible and beats the hand-built candidates",
    );
}

#[test]
fn criterion_10_frequency_budget() {
    for (name, fx) in [("case1", case1()), ("case2", case2()), ("case3", case3())] {
        let droops = fx.outputs.droops.as_ref().unwrap();
        let solver = DispatchSolver::new(&fx.scenario.fleet, &fx.scenario.oracle).unwrap();
        let p_l_max = fx.scenario.fleet.p_l_max();
        let mut loads: Vec<f64> = (0..=50).map(|k| p_l_max * k as f64 / 50.0).collect();
        loads.extend_from_slice(&fx.scenario.load_steps);
        for load in loads {
            let ss = solve_steady_state(&fx.scenario.fleet, droops, &solver, load).unwrap();
            let dev = (droops.config.f_star - ss.frequency).abs();
            assert!(
                dev <= droops.config.delta_f_max + 1e-12,
                "{name}: |f* - f| = {dev} at load {load}"
            );
            assert!(
                ss.gap_rel >= -1e-9,
                "{name}: droop beat the oracle at {load}"
            );
        }
    }
    pass(
        10,
        "frequency deviation stays inside the budget in all scenarios",
    );
}

#[test]
fn criterion_11_byte_identical_reruns() {
    for name in ["case1", "case2", "case3"] {
        let scenario = builtin(name).unwrap();
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let out_a = run_pipeline(&scenario, Stage::All, dir_a.path()).unwrap();
        let out_b = run_pipeline(&scenario, Stage::All, dir_b.path()).unwrap();
        assert_eq!(out_a.files.len(), out_b.files.len());
        for (fa, fb) in out_a.files.iter().zip(&out_b.files) {
            assert_eq!(fa.file_name(), fb.file_name());
            let bytes_a = std::fs::read(fa).unwrap();
            let bytes_b = std::fs::read(fb).unwrap();
            assert!(
                bytes_a == bytes_b,
                "{name}: {:?} differs between reruns",
                fa.file_name()
            );
        }
    }
    pass(
        11,
        "repeated pipeline runs are byte-identical for every scenario",
    );
}
