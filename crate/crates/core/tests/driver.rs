use std::time::Instant;

use fragsolve::driver::{solve, Config, RunStatus, Variant};
use fragsolve::instance::{generate_instance, oracle_optimum, simulate_route};

#[test]
fn every_variant_matches_the_oracle() {
    let started = Instant::now();
    let mut checked = 0;
    for seed in 0..120u64 {
        let pairs = 2 + (seed % 3) as usize;
        let inst = generate_instance(pairs, seed);
        let oracle = oracle_optimum(&inst, 4).unwrap();
        for variant in Variant::ALL {
            let config = Config {
                variant,
                ..Config::default()
            };
            let r = solve(&inst, &config).unwrap_or_else(|e| panic!("seed {seed} {variant}: {e}"));
            match &oracle {
                None => assert_eq!(r.status, RunStatus::Infeasible, "seed {seed} {variant}"),
                Some(o) => {
                    assert_eq!(r.status, RunStatus::Optimal, "seed {seed} {variant}");
                    assert_eq!(r.vehicles, o.vehicles, "seed {seed} {variant}");
                    assert!((r.cost - o.cost).abs() < 1e-6, "seed {seed} {variant}: {} vs {}", r.cost, o.cost);
                    let sum: f64 = r.routes.iter().map(|p| simulate_route(&inst, p).unwrap().cost).sum();
                    assert!((sum - r.cost).abs() < 1e-9);
                }
            }
            checked += 1;
        }
    }
    assert_eq!(checked, 720);
    eprintln!("sweep took {:?}", started.elapsed());
}

#[test]
fn reports_are_reproducible() {
    let inst = generate_instance(3, 7);
    let config = Config::default();
    let a = solve(&inst, &config).unwrap().without_times();
    let b = solve(&inst, &config).unwrap().without_times();
    assert_eq!(a.to_json(), b.to_json());
}

/// Same instances with windows widened by an hour on each side, so the
/// network needs refinement, and no slack in the cost guess, so the second
/// phase runs.
#[test]
fn stressed_configurations_match_the_oracle() {
    let mut second_phases = 0;
    let mut refined = 0;
    for seed in 0..120u64 {
        let mut inst = generate_instance(2 + (seed % 3) as usize, seed);
        for v in 1..=2 * inst.n {
            inst.alpha[v] = (inst.alpha[v] - 60.0).max(0.0);
            inst.beta[v] += 60.0;
        }
        let end = inst.end_depot();
        inst.beta[0] += 120.0;
        inst.beta[end] += 120.0;
        let o = oracle_optimum(&inst, 4).unwrap().expect("widening keeps instances feasible");
        for variant in Variant::ALL {
            for cut_rounds in [0, 3] {
                let config = Config {
                    variant,
                    psi_same: 0.0,
                    psi_diff: 0.0,
                    cut_rounds,
                    ..Config::default()
                };
                let r = solve(&inst, &config).unwrap_or_else(|e| panic!("seed {seed} {variant}: {e}"));
                assert_eq!(r.vehicles, o.vehicles, "seed {seed} {variant}");
                assert!((r.cost - o.cost).abs() < 1e-6, "seed {seed} {variant}: {} vs {}", r.cost, o.cost);
                second_phases += usize::from(r.phases.len() > 1);
                refined += usize::from(r.phases.iter().any(|p| p.ddd_iterations > 1));
            }
        }
    }
    assert!(second_phases > 0 && refined > 0);
}
