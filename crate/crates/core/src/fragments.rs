//! Fragments: route sub-paths plus the deliveries already on board when
//! they start.
//!
//! A fragment is either a depot departure `(0, p)`, or a path that starts at
//! a pickup, picks up further requests, crosses exactly one pickup-to-delivery
//! edge, and then only delivers until it reaches the next pickup (where it
//! ends) or the end depot (reachable only with nothing on board).

use std::collections::{BTreeSet, VecDeque};

use serde::Serialize;

use crate::instance::{simulate_route, DeliverySet, Instance, Route, EPS};
use crate::SolveError;

/// A pickup or depot together with the deliveries pending there.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeH {
    pub vertex: usize,
    pub onboard: DeliverySet,
}

impl NodeH {
    pub fn new(vertex: usize, onboard: &[usize]) -> Self {
        Self {
            vertex,
            onboard: DeliverySet::from_vertices(onboard),
        }
    }
}

impl std::fmt::Display for NodeH {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.vertex, self.onboard)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fragment {
    pub path: Vec<usize>,
    pub start_onboard: DeliverySet,
    /// End time is `max(start + shift, release)`.
    pub shift: f64,
    pub release: f64,
    /// Latest feasible start, already clamped by the start window.
    pub latest_start: f64,
    pub cost: f64,
    pub end_onboard: DeliverySet,
    /// Request vertices served by this fragment (all but the last vertex).
    pub covered: Vec<usize>,
}

impl Fragment {
    /// Builds the fragment for `path` starting with `start_onboard`, or
    /// `None` if no start time makes it feasible.
    pub fn from_path(inst: &Instance, path: &[usize], start_onboard: DeliverySet) -> Option<Self> {
        if path.len() < 2 {
            return None;
        }
        let first = path[0];
        let mut open = start_onboard;
        let mut load = inst.onboard_load(open);
        if load > inst.capacity + EPS {
            return None;
        }
        let mut shift = 0.0;
        let mut release = f64::NEG_INFINITY;
        let mut earliest = inst.alpha[first];
        for w in path.windows(2) {
            let (i, j) = (w[0], w[1]);
            if inst.is_delivery(j) {
                if !open.contains(j) {
                    return None;
                }
                open.remove(j);
            } else if inst.is_pickup(j) {
                let d = inst.delivery_of(j);
                if open.contains(d) {
                    return None;
                }
                open.insert(d);
            } else if j == inst.end_depot() {
                if !open.is_empty() {
                    return None;
                }
            } else {
                return None;
            }
            load += inst.q[j];
            if load > inst.capacity + EPS {
                return None;
            }
            let arrival = earliest + inst.t[i][j];
            if arrival > inst.beta[j] + EPS {
                return None;
            }
            earliest = arrival.max(inst.alpha[j]);
            shift += inst.t[i][j];
            release = (release + inst.t[i][j]).max(inst.alpha[j]);
        }
        let mut latest = inst.beta[*path.last().unwrap()];
        for w in path.windows(2).rev() {
            latest = (latest - inst.t[w[0]][w[1]]).min(inst.beta[w[0]]);
        }
        if latest < inst.alpha[first] - EPS {
            return None;
        }
        let covered = path[..path.len() - 1].iter().copied().filter(|&v| inst.is_request(v)).collect();
        Some(Self {
            path: path.to_vec(),
            start_onboard,
            shift,
            release,
            latest_start: latest,
            cost: inst.path_cost(path),
            end_onboard: open,
            covered,
        })
    }

    pub fn first(&self) -> usize {
        self.path[0]
    }

    pub fn last(&self) -> usize {
        *self.path.last().unwrap()
    }

    pub fn start_node(&self) -> NodeH {
        NodeH {
            vertex: self.first(),
            onboard: self.start_onboard,
        }
    }

    pub fn end_node(&self) -> NodeH {
        NodeH {
            vertex: self.last(),
            onboard: self.end_onboard,
        }
    }

    /// `max(t + shift, release)`.
    pub fn end_time(&self, t: f64) -> f64 {
        (t + self.shift).max(self.release)
    }

    /// Interior vertices (excluding both endpoints).
    pub fn interior(&self) -> &[usize] {
        &self.path[1..self.path.len() - 1]
    }
}

/// Start window of a fragment.
pub fn feasible_start_window(inst: &Instance, f: &Fragment) -> (f64, f64) {
    let v = f.first();
    (inst.alpha[v], f.latest_start.min(inst.beta[v]))
}

/// Service start at the fragment's last vertex when starting at `t`.
pub fn fragment_end_time(inst: &Instance, f: &Fragment, t: f64) -> Result<f64, SolveError> {
    let (lo, hi) = feasible_start_window(inst, f);
    if t < lo - EPS || t > hi + EPS {
        return Err(SolveError::OutsideWindow { t, lo, hi });
    }
    Ok(f.end_time(t))
}

#[derive(Debug, Clone)]
pub struct FragmentSet {
    /// Sorted by path, then start onboard set.
    pub fragments: Vec<Fragment>,
    pub nodes: BTreeSet<NodeH>,
}

impl FragmentSet {
    pub fn new(mut fragments: Vec<Fragment>) -> Self {
        fragments.sort_by(|a, b| a.path.cmp(&b.path).then(a.start_onboard.cmp(&b.start_onboard)));
        fragments.dedup_by(|a, b| a.path == b.path && a.start_onboard == b.start_onboard);
        let mut nodes = BTreeSet::new();
        for f in &fragments {
            nodes.insert(f.start_node());
            nodes.insert(f.end_node());
        }
        Self { fragments, nodes }
    }

    pub fn len(&self) -> usize {
        self.fragments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fragments.is_empty()
    }

    pub fn index_of(&self, path: &[usize], onboard: DeliverySet) -> Option<usize> {
        self.fragments
            .binary_search_by(|f| f.path.as_slice().cmp(path).then(f.start_onboard.cmp(&onboard)))
            .ok()
    }
}

pub const DEFAULT_ENUMERATION_CAP: usize = 10_000_000;

/// All fragments reachable by chaining fragments from the start depot.
pub fn enumerate_fragments(inst: &Instance, cap: usize) -> Result<FragmentSet, SolveError> {
    let mut out: Vec<Fragment> = Vec::new();
    let start = NodeH {
        vertex: 0,
        onboard: DeliverySet::EMPTY,
    };
    let mut seen: BTreeSet<NodeH> = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(node) = queue.pop_front() {
        let before = out.len();
        if node.vertex == 0 {
            for p in 1..=inst.n {
                if let Some(f) = Fragment::from_path(inst, &[0, p], DeliverySet::EMPTY) {
                    out.push(f);
                }
            }
        } else {
            let mut path = vec![node.vertex];
            let mut on_path = vec![false; inst.num_vertices()];
            on_path[node.vertex] = true;
            extend_rule_two(inst, node.onboard, &mut path, &mut on_path, false, &mut out, cap)?;
        }
        if out.len() > cap {
            return Err(SolveError::EnumerationCap(cap));
        }
        for f in &out[before..] {
            let end = f.end_node();
            if end.vertex != inst.end_depot() && seen.insert(end) {
                queue.push_back(end);
            }
        }
    }
    Ok(FragmentSet::new(out))
}

fn extend_rule_two(
    inst: &Instance,
    start_onboard: DeliverySet,
    path: &mut Vec<usize>,
    on_path: &mut [bool],
    delivering: bool,
    out: &mut Vec<Fragment>,
    cap: usize,
) -> Result<(), SolveError> {
    if out.len() > cap {
        return Err(SolveError::EnumerationCap(cap));
    }
    // Feasibility of the prefix itself; also yields the current open set.
    let Some(prefix) = Fragment::from_path_prefix(inst, path, start_onboard) else {
        return Ok(());
    };
    let open = prefix;
    let end = inst.end_depot();
    for j in 1..=end {
        if on_path[j] {
            continue;
        }
        let closes = if j == end {
            if !delivering || !open.is_empty() {
                continue;
            }
            true
        } else if inst.is_pickup(j) {
            if open.contains(inst.delivery_of(j)) {
                continue;
            }
            delivering
        } else {
            if !open.contains(j) {
                continue;
            }
            false
        };
        path.push(j);
        if closes {
            if let Some(f) = Fragment::from_path(inst, path, start_onboard) {
                out.push(f);
            }
        } else {
            on_path[j] = true;
            let next_delivering = delivering || inst.is_delivery(j);
            extend_rule_two(inst, start_onboard, path, on_path, next_delivering, out, cap)?;
            on_path[j] = false;
        }
        path.pop();
    }
    Ok(())
}

impl Fragment {
    /// Open set after a feasible partial path, `None` if it is infeasible
    /// from the earliest start.
    fn from_path_prefix(inst: &Instance, path: &[usize], start_onboard: DeliverySet) -> Option<DeliverySet> {
        if path.len() == 1 {
            return (inst.onboard_load(start_onboard) <= inst.capacity + EPS).then_some(start_onboard);
        }
        let mut open = start_onboard;
        let mut load = inst.onboard_load(open);
        let mut time = inst.alpha[path[0]];
        for w in path.windows(2) {
            let (i, j) = (w[0], w[1]);
            if inst.is_delivery(j) {
                open.remove(j);
            } else if inst.is_pickup(j) {
                open.insert(inst.delivery_of(j));
            }
            load += inst.q[j];
            let arrival = time + inst.t[i][j];
            if load > inst.capacity + EPS || arrival > inst.beta[j] + EPS {
                return None;
            }
            time = arrival.max(inst.alpha[j]);
        }
        Some(open)
    }
}

/// Whether `path` obeys one of the two fragment shapes.
pub fn is_rule_conforming(inst: &Instance, path: &[usize]) -> bool {
    if path.len() == 2 && path[0] == 0 && inst.is_pickup(path[1]) {
        return true;
    }
    if path.len() < 2 || !inst.is_pickup(path[0]) {
        return false;
    }
    let last = *path.last().unwrap();
    if !(inst.is_pickup(last) || last == inst.end_depot()) {
        return false;
    }
    let body = &path[..path.len() - 1];
    let crossings = body.windows(2).filter(|w| inst.is_pickup(w[0]) && inst.is_delivery(w[1])).count();
    let back = body.windows(2).any(|w| inst.is_delivery(w[0]) && !inst.is_delivery(w[1]));
    let last_edge_ok = inst.is_delivery(body[body.len() - 1]);
    crossings == 1 && !back && last_edge_ok
}

/// The unique split of a feasible route into fragments.
pub fn appropriate_sequence(inst: &Instance, route: &[usize]) -> Result<Vec<Fragment>, SolveError> {
    let Route { path, .. } = simulate_route(inst, route)
        .map_err(|e| SolveError::InvalidInput(format!("route {route:?} is infeasible: {e}")))?;
    if path.len() < 3 {
        return Err(SolveError::InvalidInput("route serves no request".into()));
    }
    let mut cuts = vec![0, 1];
    let mut k = 1;
    while k + 1 < path.len() {
        // Pickups, then deliveries, then stop at a pickup or the end depot.
        let mut j = k + 1;
        while inst.is_pickup(path[j]) {
            j += 1;
        }
        while inst.is_delivery(path[j]) {
            j += 1;
        }
        cuts.push(j);
        k = j;
    }
    let mut open = DeliverySet::EMPTY;
    let mut out = Vec::new();
    let mut pos = 0;
    for w in cuts.windows(2) {
        while pos < w[0] {
            pos += 1;
            let v = path[pos];
            if inst.is_delivery(v) {
                open.remove(v);
            } else if inst.is_pickup(v) {
                open.insert(inst.delivery_of(v));
            }
        }
        let onboard = if w[0] == 0 { DeliverySet::EMPTY } else { open };
        let piece = &path[w[0]..=w[1]];
        if !is_rule_conforming(inst, piece) {
            return Err(SolveError::InvalidInput(format!("piece {piece:?} breaks the fragment rules")));
        }
        let f = Fragment::from_path(inst, piece, onboard)
            .ok_or_else(|| SolveError::Internal(format!("piece {piece:?} of a feasible route is infeasible")))?;
        out.push(f);
    }
    Ok(out)
}

#[derive(Serialize)]
struct FragmentDump {
    path: Vec<usize>,
    onboard: Vec<usize>,
    window: [f64; 2],
    #[serde(rename = "A")]
    shift: f64,
    #[serde(rename = "B")]
    release: f64,
    cost: f64,
}

pub fn fragments_to_json(inst: &Instance, set: &FragmentSet) -> String {
    let dump: Vec<FragmentDump> = set
        .fragments
        .iter()
        .map(|f| {
            let (lo, hi) = feasible_start_window(inst, f);
            FragmentDump {
                path: f.path.clone(),
                onboard: f.start_onboard.to_vec(),
                window: [lo, hi],
                shift: f.shift,
                release: if f.release.is_finite() { f.release } else { 0.0 },
                cost: f.cost,
            }
        })
        .collect();
    serde_json::to_string_pretty(&dump).expect("fragments serialize")
}
