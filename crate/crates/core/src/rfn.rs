//! Integer program over the resource expanded network, decomposition of its
//! solutions into chains, and the refinement loops that remove chains whose
//! represented paths are not time feasible.

use std::collections::BTreeSet;
use std::time::Instant;

use fragsolve_mip::{solve_mip, CallbackAction, ColId, LinearProgram, MipModel, MipOptions, MipStatus, RowId, Sense};
use serde::Serialize;

use crate::fragments::NodeH;
use crate::instance::{simulate_route, Instance, Route};
use crate::ren::{Network, TIME_TOL};
use crate::SolveError;

#[derive(Debug, Clone)]
pub struct RfnModel {
    pub mip: MipModel,
    /// Arc id of each x column; x columns come first.
    pub x_arcs: Vec<usize>,
    /// (earlier copy, later copy) of each holdover column.
    pub y_holdovers: Vec<(usize, usize)>,
    pub cover_rows: usize,
    pub flow_rows: usize,
    pub vehicle_row: RowId,
    pub branching_row: Option<RowId>,
    pub nogood_rows: usize,
}

/// Builds the model with `vehicles` units of flow leaving the start depot.
/// `branching` lists arcs of which at least one must be used; `nogoods`
/// lists arc sets that may not all be used together.
pub fn build_rfn(
    inst: &Instance,
    net: &Network,
    vehicles: usize,
    branching: Option<&[usize]>,
    nogoods: &[Vec<usize>],
) -> Result<RfnModel, SolveError> {
    let v0 = net.copies[net.start_depot][0];
    let departures = net.departures[v0].iter().filter(|&&a| net.arcs[a].active).count();
    if vehicles > departures {
        return Err(SolveError::InvalidInput(format!(
            "{vehicles} vehicles requested but only {departures} fragments leave the depot"
        )));
    }
    let mut lp = LinearProgram::new();
    let mut col_of_arc = vec![None; net.arcs.len()];
    let mut x_arcs = Vec::new();
    for (a, arc) in net.active_arcs() {
        col_of_arc[a] = Some(lp.add_column(arc.cost, 0.0, 1.0));
        x_arcs.push(a);
    }
    let mut y_holdovers = Vec::new();
    let mut holdover_cols = Vec::new();
    for (h, list) in net.copies.iter().enumerate() {
        if h == net.start_depot || h == net.end_depot {
            continue;
        }
        for w in list.windows(2) {
            holdover_cols.push(lp.add_column(0.0, 0.0, vehicles as f64));
            y_holdovers.push((w[0], w[1]));
        }
    }
    let mut integral = vec![true; x_arcs.len()];
    integral.resize(lp.num_cols(), false);

    let mut cover: Vec<Vec<(ColId, f64)>> = vec![Vec::new(); inst.num_vertices()];
    for &a in &x_arcs {
        for &v in &net.fragments[net.arcs[a].fragment].covered {
            cover[v].push((col_of_arc[a].unwrap(), 1.0));
        }
    }
    for (v, coefs) in cover.iter().enumerate() {
        if inst.is_request(v) {
            lp.add_row(Sense::Eq, 1.0, coefs);
        }
    }
    let cover_rows = 2 * inst.n;

    let mut flow: Vec<Vec<(ColId, f64)>> = vec![Vec::new(); net.rnodes.len()];
    for &a in &x_arcs {
        let arc = &net.arcs[a];
        let c = col_of_arc[a].unwrap();
        flow[arc.arrival].push((c, 1.0));
        flow[arc.departure].push((c, -1.0));
    }
    for (&(from, to), &c) in y_holdovers.iter().zip(&holdover_cols) {
        flow[to].push((c, 1.0));
        flow[from].push((c, -1.0));
    }
    let mut flow_rows = 0;
    for (id, coefs) in flow.iter().enumerate() {
        let h = net.rnodes[id].node;
        if h == net.start_depot || h == net.end_depot {
            continue;
        }
        lp.add_row(Sense::Eq, 0.0, coefs);
        flow_rows += 1;
    }
    let vehicle_coefs: Vec<(ColId, f64)> = net.departures[v0]
        .iter()
        .filter_map(|&a| col_of_arc[a].map(|c| (c, 1.0)))
        .collect();
    let vehicle_row = lp.add_row(Sense::Eq, vehicles as f64, &vehicle_coefs);
    let branching_row = branching.map(|arcs| {
        let coefs: Vec<(ColId, f64)> = arcs.iter().filter_map(|&a| col_of_arc[a].map(|c| (c, 1.0))).collect();
        lp.add_row(Sense::Ge, 1.0, &coefs)
    });
    let mut nogood_rows = 0;
    for set in nogoods {
        let coefs: Vec<(ColId, f64)> = set.iter().filter_map(|&a| col_of_arc[a].map(|c| (c, 1.0))).collect();
        if coefs.len() == set.len() {
            lp.add_row(Sense::Le, set.len() as f64 - 1.0, &coefs);
            nogood_rows += 1;
        }
    }
    Ok(RfnModel {
        mip: MipModel::new(lp, integral),
        x_arcs,
        y_holdovers,
        cover_rows,
        flow_rows,
        vehicle_row,
        branching_row,
        nogood_rows,
    })
}

/// Resourced fragments joined end to start, possibly through holdovers.
/// A closed chain is a cycle that does not touch the depots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chain {
    pub arcs: Vec<usize>,
    pub closed: bool,
}

impl Chain {
    pub fn fragments(&self, net: &Network) -> Vec<usize> {
        self.arcs.iter().map(|&a| net.arcs[a].fragment).collect()
    }

    /// Concatenated fragment paths, junction vertices listed once.
    pub fn represented_path(&self, net: &Network) -> Vec<usize> {
        concat_paths(net, &self.fragments(net))
    }
}

fn concat_paths(net: &Network, fragments: &[usize]) -> Vec<usize> {
    let mut path: Vec<usize> = Vec::new();
    for &f in fragments {
        let p = &net.fragments[f].path;
        let skip = usize::from(!path.is_empty());
        path.extend_from_slice(&p[skip..]);
    }
    path
}

/// Splits an integral solution into depot-to-depot chains followed by any
/// cycles. Ties are broken by smallest fragment index.
pub fn decompose_solution(net: &Network, model: &RfnModel, values: &[f64]) -> Result<Vec<Chain>, SolveError> {
    let mut x = vec![0i64; net.arcs.len()];
    for (k, &a) in model.x_arcs.iter().enumerate() {
        let v = values[k];
        if (v - v.round()).abs() > 1e-6 {
            return Err(SolveError::InvalidInput(format!("fractional flow {v} on arc {a}")));
        }
        x[a] = v.round() as i64;
    }
    let mut y = vec![0i64; net.rnodes.len()];
    for (k, &(from, _)) in model.y_holdovers.iter().enumerate() {
        y[from] = values[model.x_arcs.len() + k].round() as i64;
    }
    let imbalance = |at: usize| SolveError::Internal(format!("flow imbalance at resourced node {at}"));
    let pick = |x: &[i64], at: usize| {
        net.departures[at]
            .iter()
            .copied()
            .filter(|&a| x[a] > 0)
            .min_by_key(|&a| (net.arcs[a].fragment, a))
    };

    let mut chains = Vec::new();
    let v0 = net.copies[net.start_depot][0];
    while let Some(first) = pick(&x, v0) {
        let mut arcs = vec![first];
        x[first] -= 1;
        let mut at = net.arcs[first].arrival;
        while net.rnodes[at].node != net.end_depot {
            if let Some(a) = pick(&x, at) {
                x[a] -= 1;
                arcs.push(a);
                at = net.arcs[a].arrival;
            } else if y[at] > 0 {
                y[at] -= 1;
                at = net.next_copy(at).ok_or_else(|| imbalance(at))?;
            } else {
                return Err(imbalance(at));
            }
        }
        chains.push(Chain { arcs, closed: false });
    }

    while let Some(start) = (0..x.len()).filter(|&a| x[a] > 0).min_by_key(|&a| (net.arcs[a].fragment, a)) {
        // Walk without consuming until a resourced node repeats.
        let mut steps: Vec<(usize, Option<usize>)> = Vec::new(); // (node, arc taken or holdover)
        let mut at = net.arcs[start].departure;
        let mut first = Some(start);
        loop {
            if let Some(p) = steps.iter().position(|&(n, _)| n == at) {
                let cycle = &steps[p..];
                let mut arcs = Vec::new();
                for &(n, step) in cycle {
                    match step {
                        Some(a) => {
                            x[a] -= 1;
                            arcs.push(a);
                        }
                        None => y[n] -= 1,
                    }
                }
                chains.push(Chain { arcs, closed: true });
                break;
            }
            if net.rnodes[at].node == net.end_depot || steps.len() > net.rnodes.len() + net.arcs.len() {
                return Err(imbalance(at));
            }
            let arc = first.take().or_else(|| pick(&x, at));
            if let Some(a) = arc {
                steps.push((at, Some(a)));
                at = net.arcs[a].arrival;
            } else if y[at] > 0 {
                steps.push((at, None));
                at = net.next_copy(at).ok_or_else(|| imbalance(at))?;
            } else {
                return Err(imbalance(at));
            }
        }
    }
    Ok(chains)
}

/// Shortest infeasible stretch of a chain: dropping either end makes it
/// feasible.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimalChain {
    pub arcs: Vec<usize>,
    pub fragments: Vec<usize>,
    /// Copies whose insertion rules out the stretch and all its equivalents.
    pub insertions: Vec<(NodeH, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChainClass {
    Representation,
    Underestimating(MinimalChain),
}

/// Longest unrolling of a cycle before giving up on finding a time conflict.
const MAX_UNROLL: usize = 100_000;

/// Index of the first fragment that cannot start on time when the sequence
/// starts as early as its first vertex allows.
fn first_infeasible(inst: &Instance, net: &Network, seq: &[usize]) -> Option<usize> {
    let mut t = inst.alpha[net.fragments[seq[0]].first()];
    for (k, &f) in seq.iter().enumerate() {
        if t > net.fragments[f].latest_start + TIME_TOL {
            return Some(k);
        }
        t = net.fragments[f].end_time(t);
    }
    None
}

pub fn classify_chain(inst: &Instance, net: &Network, chain: &Chain) -> Result<ChainClass, SolveError> {
    if chain.arcs.is_empty() {
        return Ok(ChainClass::Representation);
    }
    let mut arcs = chain.arcs.clone();
    if chain.closed {
        while arcs.len() < MAX_UNROLL {
            let seq: Vec<usize> = arcs.iter().map(|&a| net.arcs[a].fragment).collect();
            if first_infeasible(inst, net, &seq).is_some() {
                break;
            }
            arcs.extend_from_slice(&chain.arcs);
        }
    }
    let seq: Vec<usize> = arcs.iter().map(|&a| net.arcs[a].fragment).collect();
    let Some(k) = first_infeasible(inst, net, &seq) else {
        if chain.closed {
            return Err(SolveError::Internal("cycle in the network never runs out of time".into()));
        }
        return Ok(ChainClass::Representation);
    };
    let s = (0..k)
        .rev()
        .find(|&s| first_infeasible(inst, net, &seq[s..=k]).is_some())
        .ok_or_else(|| SolveError::Internal("single fragment outside its own window".into()))?;
    let mut t = inst.alpha[net.fragments[seq[s]].first()];
    let mut insertions = Vec::new();
    for &f in &seq[s..k] {
        t = net.fragments[f].end_time(t);
        insertions.push((net.fragments[f].end_node(), t));
    }
    Ok(ChainClass::Underestimating(MinimalChain {
        arcs: arcs[s..=k].to_vec(),
        fragments: seq[s..=k].to_vec(),
        insertions,
    }))
}

/// Some chain in the network whose fragments are exactly `fragments`.
pub fn find_chain(net: &Network, fragments: &[usize]) -> Option<Vec<usize>> {
    fn extend(net: &Network, fragments: &[usize], at: usize, acc: &mut Vec<usize>) -> bool {
        let Some(&f) = fragments.get(acc.len()) else {
            return true;
        };
        let mut copy = Some(at);
        while let Some(c) = copy {
            for &a in &net.departures[c] {
                let arc = &net.arcs[a];
                if arc.active && arc.fragment == f {
                    acc.push(a);
                    if extend(net, fragments, arc.arrival, acc) {
                        return true;
                    }
                    acc.pop();
                }
            }
            copy = net.next_copy(c);
        }
        false
    }
    let first = *fragments.first()?;
    for (a, arc) in net.active_arcs() {
        if arc.fragment == first {
            let mut acc = vec![a];
            if extend(net, fragments, arc.arrival, &mut acc) {
                return Some(acc);
            }
        }
    }
    None
}

/// Canonical representation of a feasible route: the route split into the
/// network's fragments, each departing from the latest copy not later than
/// the route's true service time. `None` when the route cannot be split or
/// a needed resourced fragment is missing (or inactive).
pub fn representation(inst: &Instance, net: &Network, route: &[usize]) -> Option<Vec<usize>> {
    fn walk(inst: &Instance, net: &Network, route: &[usize], pos: usize, t: f64, acc: &mut Vec<usize>) -> bool {
        if pos + 1 == route.len() {
            return true;
        }
        let onboard = route[1..=pos].iter().fold(crate::instance::DeliverySet::EMPTY, |s, &v| {
            if inst.is_pickup(v) {
                s.with(inst.delivery_of(v))
            } else {
                s.without(v)
            }
        });
        let Some(h) = net.node_id(&NodeH { vertex: route[pos], onboard }) else {
            return false;
        };
        let Some(&copy) = net.copies[h].iter().rev().find(|&&c| net.rnodes[c].time <= t + TIME_TOL) else {
            return false;
        };
        for &a in &net.departures[copy] {
            let arc = &net.arcs[a];
            let p = &net.fragments[arc.fragment].path;
            if !arc.active || route.len() < pos + p.len() || route[pos..pos + p.len()] != p[..] {
                continue;
            }
            acc.push(a);
            let next = net.fragments[arc.fragment].end_time(t);
            if walk(inst, net, route, pos + p.len() - 1, next, acc) {
                return true;
            }
            acc.pop();
        }
        false
    }
    let mut acc = Vec::new();
    walk(inst, net, route, 0, inst.alpha[0], &mut acc).then_some(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RefineStatus {
    Optimal,
    Infeasible,
    NoSolutionUnderCutoff,
    TimeLimit,
    NodeLimit,
    IterationLimit,
}

/// How underestimating chains are removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Refinement {
    /// Insert resourced nodes at the chain's true times.
    Discovery,
    /// Forbid the chain's arcs from being used together.
    NoGood,
}

/// Per-arc predicate over the current network.
pub type ArcPredicate<'a> = &'a dyn Fn(&Network, usize) -> bool;

pub struct RefineOptions<'a> {
    pub vehicles: usize,
    pub cutoff: Option<f64>,
    pub refinement: Refinement,
    /// Abort a MIP solve at the first incumbent with an underestimating
    /// chain and objective below `best_known`.
    pub early_termination: bool,
    pub best_known: f64,
    pub max_iterations: usize,
    pub node_limit: usize,
    pub deadline: Option<Instant>,
    pub threads: usize,
    /// Returns true for arcs that may be fixed to zero.
    pub fixing: Option<ArcPredicate<'a>>,
    /// Returns true for arcs belonging to the branching row.
    pub branching: Option<ArcPredicate<'a>>,
}

impl Default for RefineOptions<'_> {
    fn default() -> Self {
        Self {
            vehicles: 1,
            cutoff: None,
            refinement: Refinement::Discovery,
            early_termination: true,
            best_known: f64::INFINITY,
            max_iterations: 10_000,
            node_limit: usize::MAX,
            deadline: None,
            threads: 1,
            fixing: None,
            branching: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationStats {
    pub resourced_nodes: usize,
    pub resourced_fragments: usize,
    pub mip_nodes: usize,
    pub objective: Option<f64>,
    pub chains_separated: usize,
}

#[derive(Debug, Clone)]
pub struct RefineOutcome {
    pub status: RefineStatus,
    pub cost: Option<f64>,
    pub routes: Vec<Route>,
    pub iterations: Vec<IterationStats>,
    pub nogoods: Vec<Vec<usize>>,
}

impl RefineOutcome {
    pub fn mip_nodes(&self) -> usize {
        self.iterations.iter().map(|s| s.mip_nodes).sum()
    }
}

fn underestimating(inst: &Instance, net: &Network, chains: &[Chain]) -> Result<Vec<MinimalChain>, SolveError> {
    let mut out = Vec::new();
    for c in chains {
        if let ChainClass::Underestimating(m) = classify_chain(inst, net, c)? {
            out.push(m);
        }
    }
    Ok(out)
}

/// Solves the network program, refining until every chain of the optimum
/// represents a feasible route.
pub fn refine_solve(inst: &Instance, net: &mut Network, opts: &RefineOptions) -> Result<RefineOutcome, SolveError> {
    let mut outcome = RefineOutcome {
        status: RefineStatus::IterationLimit,
        cost: None,
        routes: Vec::new(),
        iterations: Vec::new(),
        nogoods: Vec::new(),
    };
    let mut known_nogoods: BTreeSet<Vec<usize>> = BTreeSet::new();
    for _ in 0..opts.max_iterations {
        if let Some(fix) = opts.fixing {
            let fixed: Vec<bool> = (0..net.arcs.len()).map(|a| fix(net, a)).collect();
            for (arc, f) in net.arcs.iter_mut().zip(fixed) {
                arc.active = !f;
            }
        }
        let branching: Option<Vec<usize>> = opts
            .branching
            .map(|pred| net.active_arcs().map(|(a, _)| a).filter(|&a| pred(net, a)).collect());
        let model = match build_rfn(inst, net, opts.vehicles, branching.as_deref(), &outcome.nogoods) {
            Ok(m) => m,
            Err(SolveError::InvalidInput(_)) => {
                outcome.status = if opts.cutoff.is_some() {
                    RefineStatus::NoSolutionUnderCutoff
                } else {
                    RefineStatus::Infeasible
                };
                return Ok(outcome);
            }
            Err(e) => return Err(e),
        };
        let mip_opts = MipOptions {
            cutoff: opts.cutoff,
            node_limit: opts.node_limit,
            deadline: opts.deadline,
            threads: opts.threads,
            dump_lp: None,
        };
        let mut harvested: Vec<MinimalChain> = Vec::new();
        let mut callback_error = None;
        let net_ref: &Network = net;
        let sol = solve_mip(&model.mip, &mip_opts, &mut |values, objective| {
            let found = decompose_solution(net_ref, &model, values)
                .and_then(|chains| underestimating(inst, net_ref, &chains));
            match found {
                Ok(found) => {
                    let abort = !found.is_empty() && opts.early_termination && objective < opts.best_known - 1e-9;
                    harvested.extend(found);
                    if abort {
                        CallbackAction::Abort
                    } else {
                        CallbackAction::Continue
                    }
                }
                Err(e) => {
                    callback_error = Some(e);
                    CallbackAction::Abort
                }
            }
        })?;
        if let Some(e) = callback_error {
            return Err(e);
        }
        let mut stats = IterationStats {
            resourced_nodes: net.num_resourced_nodes(),
            resourced_fragments: net.num_active_arcs(),
            mip_nodes: sol.nodes,
            objective: sol.has_incumbent().then_some(sol.objective),
            chains_separated: 0,
        };
        if !sol.has_incumbent() {
            outcome.status = match sol.status {
                MipStatus::TimeLimit => RefineStatus::TimeLimit,
                MipStatus::NodeLimit => RefineStatus::NodeLimit,
                MipStatus::NoSolutionUnderCutoff => RefineStatus::NoSolutionUnderCutoff,
                _ => RefineStatus::Infeasible,
            };
            outcome.iterations.push(stats);
            return Ok(outcome);
        }
        let chains = decompose_solution(net, &model, &sol.values)?;
        let bad = underestimating(inst, net, &chains)?;
        if bad.is_empty() && sol.status != MipStatus::Aborted {
            outcome.routes = chains
                .iter()
                .map(|c| {
                    simulate_route(inst, &c.represented_path(net))
                        .map_err(|e| SolveError::Internal(format!("represented path is infeasible: {e:?}")))
                })
                .collect::<Result<_, _>>()?;
            outcome.cost = Some(sol.objective);
            outcome.status = match sol.status {
                MipStatus::Optimal => RefineStatus::Optimal,
                MipStatus::TimeLimit => RefineStatus::TimeLimit,
                _ => RefineStatus::NodeLimit,
            };
            outcome.iterations.push(stats);
            return Ok(outcome);
        }
        harvested.extend(bad);
        let mut progress = false;
        match opts.refinement {
            Refinement::Discovery => {
                for m in &harvested {
                    let mut separated = false;
                    for (node, t) in &m.insertions {
                        if !net.insert_resourced_node(node, *t)?.is_empty() {
                            separated = true;
                        }
                    }
                    if separated {
                        stats.chains_separated += 1;
                        progress = true;
                    }
                }
            }
            Refinement::NoGood => {
                for m in &harvested {
                    let set: Vec<usize> = m.arcs.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
                    if known_nogoods.insert(set.clone()) {
                        outcome.nogoods.push(set);
                        stats.chains_separated += 1;
                        progress = true;
                    }
                }
            }
        }
        outcome.iterations.push(stats);
        if !progress {
            return Err(SolveError::Internal("refinement made no progress".into()));
        }
        if opts.deadline.is_some_and(|d| Instant::now() >= d) {
            outcome.status = RefineStatus::TimeLimit;
            return Ok(outcome);
        }
    }
    Err(SolveError::IterationLimit(opts.max_iterations))
}
