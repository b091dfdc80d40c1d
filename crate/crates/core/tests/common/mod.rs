#![allow(dead_code)]

use fragsolve::colgen::{
    separate_src_cuts, set_vehicle_constraint, solve_master, CgConfig, MasterState, ObjectiveMode,
};
use fragsolve::fl::FlContext;
use fragsolve::fragments::{enumerate_fragments, Fragment, DEFAULT_ENUMERATION_CAP};
use fragsolve::instance::{
    enumerate_routes_oracle, generate_instance, oracle_optimum, route_request_mask, DeliverySet, Instance,
    OracleSolution, Route,
};
use fragsolve::ren::{build_network, Discretization, Network};
use fragsolve::rfn::{refine_solve, representation, RefineOptions};

/// Seeded instances with 2, 3 or 4 requests.
pub fn sweep(count: u64) -> impl Iterator<Item = (u64, Instance)> {
    (0..count).map(|seed| (seed, generate_instance(2 + (seed % 3) as usize, seed)))
}

pub fn routes(inst: &Instance) -> Vec<Route> {
    enumerate_routes_oracle(inst, 6, false).unwrap()
}

pub fn optimum(inst: &Instance) -> OracleSolution {
    oracle_optimum(inst, 6).unwrap().expect("generated instances are feasible")
}

/// Deliveries on board after servicing `route[pos]`.
pub fn onboard_after(inst: &Instance, route: &[usize], pos: usize) -> DeliverySet {
    route[1..=pos].iter().fold(DeliverySet::EMPTY, |s, &v| {
        if inst.is_pickup(v) {
            s.with(inst.delivery_of(v))
        } else {
            s.without(v)
        }
    })
}

/// True when the route traverses `f` from a state matching its start.
pub fn contains_fragment(inst: &Instance, route: &[usize], f: &Fragment) -> bool {
    let k = f.path.len();
    (0..route.len().saturating_sub(k - 1))
        .any(|p| route[p..p + k] == f.path[..] && onboard_after(inst, route, p) == f.start_onboard)
}

/// Travel-cost master solved to optimality with `rounds` cut rounds,
/// optionally with the vehicle count fixed. Returns the bound after each
/// solve.
pub fn cost_master(inst: &Instance, vehicles: Option<usize>, rounds: usize) -> (MasterState, Vec<f64>) {
    let config = CgConfig::default();
    let mut state = MasterState::new(inst, ObjectiveMode::TravelCost);
    if let Some(v) = vehicles {
        set_vehicle_constraint(&mut state, v);
    }
    solve_master(inst, &mut state, &config).unwrap();
    let mut bounds = vec![state.z_lb];
    for _ in 0..rounds {
        let cuts = separate_src_cuts(inst, &state, config.max_cuts);
        if cuts.is_empty() {
            break;
        }
        state.cuts.extend(cuts);
        solve_master(inst, &mut state, &config).unwrap();
        bounds.push(state.z_lb);
    }
    (state, bounds)
}

/// Every way of splitting the requests among feasible routes, as lists of
/// request masks.
pub fn partitions(inst: &Instance) -> Vec<Vec<u64>> {
    let mut feasible: Vec<u64> = routes(inst).iter().map(|r| route_request_mask(inst, &r.path)).collect();
    feasible.sort();
    feasible.dedup();
    let full = (1u64 << inst.n) - 1;
    let mut out = Vec::new();
    fn rec(left: u64, feasible: &[u64], acc: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if left == 0 {
            out.push(acc.clone());
            return;
        }
        let low = left & left.wrapping_neg();
        for &m in feasible {
            if m & low != 0 && m & !left == 0 {
                acc.push(m);
                rec(left & !m, feasible, acc, out);
                acc.pop();
            }
        }
    }
    rec(full, &feasible, &mut Vec::new(), &mut out);
    out
}

/// Request vertices of the requests in `mask`.
pub fn mask_vertices(inst: &Instance, mask: u64) -> Vec<usize> {
    (1..=inst.n)
        .filter(|p| mask >> (p - 1) & 1 == 1)
        .flat_map(|p| [p, inst.delivery_of(p)])
        .collect()
}

/// The sweep instance with windows widened by an hour on each side, which
/// makes routes longer and the networks need refinement.
pub fn widened(seed: u64) -> Instance {
    let mut inst = generate_instance(2 + (seed % 3) as usize, seed);
    for v in 1..=2 * inst.n {
        inst.alpha[v] = (inst.alpha[v] - 60.0).max(0.0);
        inst.beta[v] += 60.0;
    }
    let end = inst.end_depot();
    inst.beta[0] += 120.0;
    inst.beta[end] += 120.0;
    inst
}

/// Default and widened instances together.
pub fn mixed_sweep(count: u64) -> impl Iterator<Item = (String, Instance)> {
    sweep(count).flat_map(|(seed, inst)| [(format!("{seed}"), inst), (format!("{seed} widened"), widened(seed))])
}

pub fn network(inst: &Instance, disc: Discretization) -> Network {
    let set = enumerate_fragments(inst, DEFAULT_ENUMERATION_CAP).unwrap();
    build_network(inst, &set, disc, &Default::default()).unwrap()
}

/// Arcs chain from the start depot to the end depot, each leaving a copy
/// not earlier than where the previous one arrived.
pub fn walkable(net: &Network, arcs: &[usize]) -> bool {
    let Some(first) = arcs.first() else { return false };
    if net.rnodes[net.arcs[*first].departure].node != net.start_depot {
        return false;
    }
    let ok = arcs.windows(2).all(|w| {
        let (a, b) = (&net.arcs[w[0]], &net.arcs[w[1]]);
        let (arr, dep) = (&net.rnodes[a.arrival], &net.rnodes[b.departure]);
        arr.node == dep.node && arr.time <= dep.time + 1e-9
    });
    ok && net.rnodes[net.arcs[*arcs.last().unwrap()].arrival].node == net.end_depot
}

/// Canonical representation of `route`, checked to be a walkable chain
/// tracing the route.
pub fn checked_representation(
    inst: &Instance,
    net: &Network,
    route: &[usize],
) -> Option<Vec<usize>> {
    let arcs = representation(inst, net, route)?;
    assert!(walkable(net, &arcs), "{route:?} gives an unwalkable chain");
    let mut traced = vec![0];
    for &a in &arcs {
        traced.extend_from_slice(&net.fragments[net.arcs[a].fragment].path[1..]);
    }
    assert_eq!(traced, route);
    Some(arcs)
}

/// Contexts from converged masters: vehicle count, travel cost without
/// cuts, and travel cost with cuts and the vehicle row.
pub fn contexts(inst: &Instance) -> Vec<(&'static str, FlContext)> {
    let opt = optimum(inst);
    let mut v = MasterState::new(inst, ObjectiveMode::Vehicles);
    solve_master(inst, &mut v, &CgConfig::default()).unwrap();
    let (plain, _) = cost_master(inst, None, 0);
    let (cut, _) = cost_master(inst, Some(opt.vehicles), 3);
    vec![
        ("vehicles", FlContext::new(inst, v.duals(), v.z_lb, opt.vehicles as f64)),
        ("cost", FlContext::new(inst, plain.duals(), plain.z_lb, opt.cost)),
        ("cost with cuts", FlContext::new(inst, cut.duals(), cut.z_lb, opt.cost)),
    ]
}

pub fn networks(inst: &Instance) -> Vec<Network> {
    let opt = optimum(inst);
    let mut refined = network(inst, Discretization::Minimal);
    let opts = RefineOptions {
        vehicles: opt.vehicles,
        ..RefineOptions::default()
    };
    refine_solve(inst, &mut refined, &opts).unwrap();
    vec![
        network(inst, Discretization::Minimal),
        network(inst, Discretization::Grid(5.0)),
        refined,
    ]
}
