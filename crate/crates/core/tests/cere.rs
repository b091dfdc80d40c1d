mod common;

use std::collections::BTreeMap;

use fragsolve::cere::absorb_nodes;
use fragsolve::fl::{rho_prime, FlContext};
use fragsolve::fragments::{enumerate_fragments, FragmentSet, DEFAULT_ENUMERATION_CAP};
use fragsolve::instance::Instance;
use fragsolve::ren::{build_network, Discretization, Network};
use fragsolve::rfn::build_rfn;
use fragsolve_mip::{solve_mip, CallbackAction, MipOptions, MipStatus};

const BUDGETS: [i64; 5] = [i64::MIN, -1, 0, 6, i64::MAX];

fn minimal(inst: &Instance, set: &FragmentSet) -> Network {
    build_network(inst, set, Discretization::Minimal, &BTreeMap::new()).unwrap()
}

fn rfn_value(inst: &Instance, set: &FragmentSet, vehicles: usize) -> f64 {
    let net = minimal(inst, set);
    let model = build_rfn(inst, &net, vehicles, None, &[]).unwrap();
    let sol = solve_mip(&model.mip, &MipOptions::default(), &mut |_, _| CallbackAction::Continue).unwrap();
    assert_eq!(sol.status, MipStatus::Optimal);
    sol.objective
}

#[test]
fn absorption_preserves_routes_and_tightens() {
    let mut absorbed_total = 0;
    for (name, inst) in common::mixed_sweep(60) {
        let opt = common::optimum(&inst);
        let set = enumerate_fragments(&inst, DEFAULT_ENUMERATION_CAP).unwrap();
        let routes = common::routes(&inst);
        let (state, _) = common::cost_master(&inst, Some(opt.vehicles), 3);
        let ctx = FlContext::new(&inst, state.duals(), state.z_lb, opt.cost);
        let base = rfn_value(&inst, &set, opt.vehicles);
        for budget in BUDGETS {
            for fl in [None, Some(&ctx)] {
                let (out, plans) = absorb_nodes(&inst, &set, fl, budget, None).unwrap();
                absorbed_total += plans.iter().filter(|p| p.absorbed).count();
                for p in plans.iter().filter(|p| p.absorbed) {
                    assert!(out.nodes.iter().all(|n| n.to_string() != p.node), "{name}: {} remains", p.node);
                    assert!(out
                        .fragments
                        .iter()
                        .all(|f| f.start_node().to_string() != p.node && f.end_node().to_string() != p.node));
                }
                let net = minimal(&inst, &out);
                for r in &routes {
                    // With filtering, only routes whose reduced cost fits
                    // the gap are guaranteed to survive.
                    let must = match fl {
                        None => true,
                        Some(c) => c.keeps(c.duals.route_reduced_cost(&inst, &r.path)),
                    };
                    if must {
                        assert!(
                            common::checked_representation(&inst, &net, &r.path).is_some(),
                            "{name} budget {budget}: {:?} lost",
                            r.path
                        );
                    }
                }
                for r in &opt.routes {
                    assert!(common::checked_representation(&inst, &net, &r.path).is_some());
                }
                let value = rfn_value(&inst, &out, opt.vehicles);
                assert!(value >= base - 1e-6, "{name} budget {budget}: {value} < {base}");
                assert!(value <= opt.cost + 1e-6);
                if budget == i64::MAX && fl.is_none() {
                    assert!((value - opt.cost).abs() < 1e-6, "{name}: full enumeration is exact");
                }
            }
        }
    }
    assert!(absorbed_total > 0);
}

#[test]
fn filtered_joins_fit_the_gap() {
    for (name, inst) in common::mixed_sweep(30) {
        let opt = common::optimum(&inst);
        let set = enumerate_fragments(&inst, DEFAULT_ENUMERATION_CAP).unwrap();
        let (state, _) = common::cost_master(&inst, Some(opt.vehicles), 0);
        let ctx = FlContext::new(&inst, state.duals(), state.z_lb, opt.cost);
        let (out, _) = absorb_nodes(&inst, &set, Some(&ctx), 6, None).unwrap();
        for f in out.fragments.iter().filter(|f| !set.fragments.contains(f)) {
            assert!(ctx.keeps(rho_prime(&inst, &ctx, f)), "{name}: {:?}", f.path);
        }
    }
}
