//! End-to-end properties of the split-and-conquer engine on randomly
//! generated network queries: verdicts match the brute-force oracle across
//! a grid of configurations, are independent of the worker count, and
//! timed-out calls stay below the 1/N fraction promised by the fan-out
//! bookkeeping.

mod common;

use relu_snc::simplex::lp_feasible;
use relu_snc::snc::{default_config, split_and_conquer, SncConfig, SplitStrategy};
use relu_snc::vnn::enumerate_phases_oracle;
use relu_snc::{QueryResult, VnnFormula};

fn engine_config(formula: &VnnFormula) -> SncConfig {
    let mut cfg = default_config(formula, 1);
    cfg.global_deadline_secs = Some(30.0);
    cfg
}

#[test]
fn verdict_matches_oracle_across_the_config_grid() {
    let mut rng = common::rng(0x5C5C_0001);
    for case in 0..15 {
        let formula = common::random_relu_formula(&mut rng);
        let expect_sat = enumerate_phases_oracle(&formula, lp_feasible).unwrap().is_sat();
        for initial_divides in [2, 4] {
            for online_divides in [2, 4] {
                for tiny_budget in [false, true] {
                    for strategy in [SplitStrategy::InputSplit, SplitStrategy::ReluSplit] {
                        let mut cfg = engine_config(&formula);
                        cfg.initial_divides = initial_divides;
                        cfg.online_divides = online_divides;
                        cfg.initial_timeout_secs = if tiny_budget { 3e-3 } else { 60.0 };
                        cfg.strategy = strategy;
                        let (result, stats) = split_and_conquer(&formula, &cfg).unwrap();
                        assert_eq!(
                            result.is_sat(),
                            expect_sat,
                            "case {case}: wrong verdict under N0={initial_divides} \
                             N={online_divides} tiny={tiny_budget} {strategy:?}"
                        );
                        if let QueryResult::Sat(w) = &result {
                            assert!(formula.check_assignment(w, 1e-6), "case {case}: bad witness");
                        }
                        assert_eq!(
                            stats.solve_calls,
                            stats.timeouts + stats.sat_calls + stats.unsat_calls
                        );
                    }
                }
            }
        }
    }
}

#[test]
fn verdict_is_independent_of_worker_count() {
    let mut rng = common::rng(0x5C5C_0002);
    for _ in 0..10 {
        let formula = common::random_relu_formula(&mut rng);
        let verdicts: Vec<bool> = [1usize, 2, 8]
            .into_iter()
            .map(|workers| {
                let mut cfg = engine_config(&formula);
                cfg.workers = workers;
                cfg.initial_divides = 4;
                let (result, _) = split_and_conquer(&formula, &cfg).unwrap();
                result.is_sat()
            })
            .collect();
        assert_eq!(verdicts[0], verdicts[1]);
        assert_eq!(verdicts[0], verdicts[2]);
    }
}

#[test]
fn timeout_fraction_stays_under_one_over_n() {
    let mut rng = common::rng(0x5C5C_0003);
    let mut unsat_runs = 0usize;
    let mut runs_with_timeouts = 0usize;
    let mut runs_with_depth = 0usize;
    while unsat_runs < 12 {
        let formula = common::random_relu_formula(&mut rng);
        if enumerate_phases_oracle(&formula, lp_feasible).unwrap().is_sat() {
            continue;
        }
        unsat_runs += 1;
        for n in [2usize, 4] {
            let mut cfg = engine_config(&formula);
            cfg.initial_divides = n;
            cfg.online_divides = n;
            cfg.strategy = SplitStrategy::InputSplit;
            // A sub-query survives a microsecond budget only when a single
            // propagation pass refutes it; everything else times out and
            // fans out, with budgets growing fast enough to stay shallow.
            cfg.initial_timeout_secs = 1e-6;
            cfg.timeout_factor = 40.0;
            let (result, stats) = split_and_conquer(&formula, &cfg).unwrap();
            assert_eq!(result, QueryResult::Unsat);
            assert_eq!(
                stats.solve_calls,
                n + n * stats.timeouts,
                "timeout fan-out bookkeeping broken"
            );
            assert!(
                (stats.timeouts as f64) / (stats.solve_calls as f64) < 1.0 / (n as f64),
                "timeout fraction {} / {} breaches 1/{n}",
                stats.timeouts,
                stats.solve_calls
            );
            runs_with_timeouts += usize::from(stats.timeouts > 0);
            runs_with_depth += usize::from(stats.max_depth >= 3);
        }
    }
    assert!(
        runs_with_timeouts >= unsat_runs,
        "only {runs_with_timeouts} of {} runs had forced timeouts",
        2 * unsat_runs
    );
    assert!(runs_with_depth >= 1, "suite never produced a deep run");
}
