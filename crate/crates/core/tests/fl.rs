mod common;

use fragsolve::fl::{keep, rho_double_prime, rho_prime};
use fragsolve::fragments::{enumerate_fragments, DEFAULT_ENUMERATION_CAP};
use fragsolve::instance::Instance;

fn small_instances() -> impl Iterator<Item = (String, Instance)> {
    common::mixed_sweep(90).filter(|(_, inst)| inst.n <= 3)
}

#[test]
fn fragment_bounds_never_exceed_containing_routes() {
    for (name, inst) in small_instances() {
        let set = enumerate_fragments(&inst, DEFAULT_ENUMERATION_CAP).unwrap();
        let routes = common::routes(&inst);
        for (label, ctx) in common::contexts(&inst) {
            for f in &set.fragments {
                let best = routes
                    .iter()
                    .filter(|r| common::contains_fragment(&inst, &r.path, f))
                    .map(|r| ctx.duals.route_reduced_cost(&inst, &r.path))
                    .fold(f64::INFINITY, f64::min);
                let rho = rho_prime(&inst, &ctx, f);
                assert!(rho <= best + 1e-6, "{name} {label} {:?}: {rho} > {best}", f.path);
            }
        }
    }
}

#[test]
fn resourced_bounds_sit_between() {
    for (name, inst) in small_instances() {
        let routes = common::routes(&inst);
        let nets = common::networks(&inst);
        for (label, ctx) in common::contexts(&inst) {
            for net in &nets {
                let mut best = vec![f64::INFINITY; net.arcs.len()];
                for r in &routes {
                    let rc = ctx.duals.route_reduced_cost(&inst, &r.path);
                    for a in common::checked_representation(&inst, net, &r.path).unwrap() {
                        best[a] = best[a].min(rc);
                    }
                }
                for (a, arc) in net.arcs.iter().enumerate() {
                    let lower = rho_prime(&inst, &ctx, &net.fragments[arc.fragment]);
                    let rho = rho_double_prime(&inst, &ctx, net, a);
                    assert!(lower <= rho + 1e-6, "{name} {label}: arc {a} {lower} > {rho}");
                    assert!(rho <= best[a] + 1e-6, "{name} {label}: arc {a} {rho} > {}", best[a]);
                }
            }
        }
    }
}

#[test]
fn fixing_keeps_optimal_routes() {
    let mut fixed = 0;
    for (name, inst) in common::mixed_sweep(60) {
        let opt = common::optimum(&inst);
        let nets = common::networks(&inst);
        for (label, ctx) in common::contexts(&inst) {
            assert!(ctx.gap >= 0.0);
            for net in &nets {
                fixed += (0..net.arcs.len())
                    .filter(|&a| !keep(rho_double_prime(&inst, &ctx, net, a), ctx.gap))
                    .count();
                for r in &opt.routes {
                    for a in common::checked_representation(&inst, net, &r.path).unwrap() {
                        let f = &net.fragments[net.arcs[a].fragment];
                        assert!(keep(rho_prime(&inst, &ctx, f), ctx.gap), "{name} {label}: {:?}", f.path);
                        assert!(keep(rho_double_prime(&inst, &ctx, net, a), ctx.gap), "{name} {label}: arc {a}");
                    }
                }
            }
        }
    }
    assert!(fixed > 0);
}
