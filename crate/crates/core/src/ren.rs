//! Resource expanded network: timed copies of nodes and timed copies of
//! fragments between them.
//!
//! Invariants kept by construction and by `insert_resourced_node`:
//! every node has a copy at its vertex's earliest time; every copy has a
//! departing timed fragment for each fragment whose start window contains
//! the copy's time; every timed fragment arrives at the latest copy of its
//! end node not later than its true end time; consecutive copies of a node
//! are joined by (implicit) holdover arcs.

use std::collections::hash_map::Entry;
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::fragments::{feasible_start_window, Fragment, FragmentSet, NodeH};
use crate::instance::Instance;
use crate::SolveError;

/// Tolerance for comparing times inside the network.
pub const TIME_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ResourcedNode {
    /// Index into `Network::nodes`.
    pub node: usize,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResourcedFragment {
    /// Index into `Network::fragments`.
    pub fragment: usize,
    pub start: f64,
    pub true_end: f64,
    /// Resourced node ids.
    pub departure: usize,
    pub arrival: usize,
    pub cost: f64,
    /// Cleared when the arc has been fixed to zero.
    pub active: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChangeReport {
    pub added_node: Option<usize>,
    pub new_arcs: Vec<usize>,
    pub rewired: Vec<usize>,
}

impl ChangeReport {
    pub fn is_empty(&self) -> bool {
        self.added_node.is_none()
    }
}

#[derive(Debug, Clone)]
pub struct Network {
    pub fragments: Vec<Fragment>,
    pub nodes: Vec<NodeH>,
    node_index: HashMap<NodeH, usize>,
    /// Resourced node ids per node, sorted by time.
    pub copies: Vec<Vec<usize>>,
    pub rnodes: Vec<ResourcedNode>,
    pub arcs: Vec<ResourcedFragment>,
    /// Departing arc ids per resourced node.
    pub departures: Vec<Vec<usize>>,
    /// Fragment ids per start node.
    frags_from: Vec<Vec<usize>>,
    windows: Vec<(f64, f64)>,
    pub start_depot: usize,
    pub end_depot: usize,
    end_vertex: usize,
    alpha_of_node: Vec<f64>,
    beta_of_node: Vec<f64>,
}

impl Network {
    pub fn node_id(&self, node: &NodeH) -> Option<usize> {
        self.node_index.get(node).copied()
    }

    /// Resourced node id of the copy of `node` at `time`.
    pub fn copy_at(&self, node: &NodeH, time: f64) -> Option<usize> {
        let h = self.node_id(node)?;
        self.copies[h]
            .iter()
            .copied()
            .find(|&id| (self.rnodes[id].time - time).abs() <= 1e-6)
    }

    pub fn rnode_label(&self, id: usize) -> (NodeH, f64) {
        let r = &self.rnodes[id];
        (self.nodes[r.node], r.time)
    }

    pub fn num_resourced_nodes(&self) -> usize {
        self.rnodes.len()
    }

    pub fn active_arcs(&self) -> impl Iterator<Item = (usize, &ResourcedFragment)> {
        self.arcs.iter().enumerate().filter(|(_, a)| a.active)
    }

    pub fn num_active_arcs(&self) -> usize {
        self.arcs.iter().filter(|a| a.active).count()
    }

    /// Copy immediately after `id` at the same node.
    pub fn next_copy(&self, id: usize) -> Option<usize> {
        let h = self.rnodes[id].node;
        let list = &self.copies[h];
        let k = list.iter().position(|&x| x == id)?;
        list.get(k + 1).copied()
    }

    /// Latest copy of node `h` with time at most `t`.
    fn arrival_copy(&self, h: usize, t: f64) -> Option<usize> {
        let list = &self.copies[h];
        let k = list.partition_point(|&id| self.rnodes[id].time <= t + TIME_TOL);
        (k > 0).then(|| list[k - 1])
    }

    fn add_arc(&mut self, fragment: usize, departure: usize) -> Option<usize> {
        let f = &self.fragments[fragment];
        let start = self.rnodes[departure].time;
        let true_end = f.end_time(start);
        let end_h = self.node_index[&f.end_node()];
        let arrival = self.arrival_copy(end_h, true_end)?;
        let id = self.arcs.len();
        self.arcs.push(ResourcedFragment {
            fragment,
            start,
            true_end,
            departure,
            arrival,
            cost: f.cost,
            active: true,
        });
        self.departures[departure].push(id);
        Some(id)
    }

    fn window_contains(&self, fragment: usize, t: f64) -> bool {
        let (lo, hi) = self.windows[fragment];
        t >= lo - TIME_TOL && t <= hi + TIME_TOL
    }

    /// Adds a copy of `node` at `time`, creating departures and re-aiming
    /// arrivals so that all network properties keep holding.
    pub fn insert_resourced_node(&mut self, node: &NodeH, time: f64) -> Result<ChangeReport, SolveError> {
        let h = self
            .node_id(node)
            .ok_or_else(|| SolveError::InvalidInput(format!("node {node} is not in the network")))?;
        if h == self.start_depot || h == self.end_depot {
            return Ok(ChangeReport::default());
        }
        if time < self.alpha_of_node[h] - TIME_TOL || time > self.beta_of_node[h] + TIME_TOL {
            return Err(SolveError::InvalidInput(format!(
                "time {time} outside the window of node {node}"
            )));
        }
        let list = &self.copies[h];
        let k = list.partition_point(|&id| self.rnodes[id].time < time - TIME_TOL);
        if k < list.len() && (self.rnodes[list[k]].time - time).abs() <= TIME_TOL {
            return Ok(ChangeReport::default());
        }
        let id = self.rnodes.len();
        self.rnodes.push(ResourcedNode { node: h, time });
        self.departures.push(Vec::new());
        self.copies[h].insert(k, id);
        let mut report = ChangeReport {
            added_node: Some(id),
            ..Default::default()
        };
        let frags = self.frags_from[h].clone();
        for f in frags {
            if self.window_contains(f, time) {
                if let Some(a) = self.add_arc(f, id) {
                    report.new_arcs.push(a);
                }
            }
        }
        if k > 0 {
            let prev = self.copies[h][k - 1];
            for (a, arc) in self.arcs.iter_mut().enumerate() {
                if arc.arrival == prev && arc.true_end >= time - TIME_TOL {
                    arc.arrival = id;
                    report.rewired.push(a);
                }
            }
        }
        Ok(report)
    }

    /// Violations of the network properties; empty when valid.
    pub fn check_properties(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (h, node) in self.nodes.iter().enumerate() {
            let alpha = self.alpha_of_node[h];
            if !self.copies[h].iter().any(|&id| (self.rnodes[id].time - alpha).abs() <= TIME_TOL) {
                out.push(format!("property 1: node {node} has no copy at {alpha}"));
            }
            for w in self.copies[h].windows(2) {
                if self.rnodes[w[1]].time <= self.rnodes[w[0]].time + TIME_TOL {
                    out.push(format!("property 5: copies of {node} are not strictly increasing"));
                }
            }
            for &id in &self.copies[h] {
                let t = self.rnodes[id].time;
                for &f in &self.frags_from[h] {
                    if self.window_contains(f, t)
                        && !self.departures[id].iter().any(|&a| self.arcs[a].fragment == f)
                    {
                        out.push(format!("property 2: fragment {:?} does not depart {node}@{t}", self.fragments[f].path));
                    }
                }
            }
        }
        for (a, arc) in self.arcs.iter().enumerate() {
            let f = &self.fragments[arc.fragment];
            let dep = &self.rnodes[arc.departure];
            if (dep.time - arc.start).abs() > TIME_TOL || self.nodes[dep.node] != f.start_node() {
                out.push(format!("arc {a} does not start at its departure copy"));
            }
            let arr = &self.rnodes[arc.arrival];
            if self.nodes[arr.node] != f.end_node() {
                out.push(format!("property 3: arc {a} arrives at the wrong node"));
            }
            if arr.time > arc.true_end + TIME_TOL {
                out.push(format!("property 3: arc {a} arrives after its true end"));
            }
            if let Some(next) = self.next_copy(arc.arrival) {
                if self.rnodes[next].time <= arc.true_end + TIME_TOL {
                    out.push(format!("property 4: arc {a} could arrive at a later copy"));
                }
            }
        }
        out
    }

    /// Graphviz rendering, for debugging.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph network {\n  rankdir=LR;\n");
        for (id, r) in self.rnodes.iter().enumerate() {
            let _ = writeln!(s, "  v{id} [label=\"{}@{:.2}\"];", self.nodes[r.node], r.time);
        }
        for list in &self.copies {
            for w in list.windows(2) {
                let _ = writeln!(s, "  v{} -> v{} [style=dashed];", w[0], w[1]);
            }
        }
        for arc in self.arcs.iter().filter(|a| a.active) {
            let _ = writeln!(
                s,
                "  v{} -> v{} [label=\"{:?}\"];",
                arc.departure, arc.arrival, self.fragments[arc.fragment].path
            );
        }
        s.push_str("}\n");
        s
    }

    /// Time of every copy that is not an earliest-time copy, per node.
    pub fn extra_times(&self) -> BTreeMap<NodeH, Vec<f64>> {
        let mut out = BTreeMap::new();
        for (h, node) in self.nodes.iter().enumerate() {
            let times: Vec<f64> = self.copies[h]
                .iter()
                .map(|&id| self.rnodes[id].time)
                .filter(|&t| (t - self.alpha_of_node[h]).abs() > TIME_TOL)
                .collect();
            if !times.is_empty() {
                out.insert(*node, times);
            }
        }
        out
    }

    pub fn end_vertex(&self) -> usize {
        self.end_vertex
    }
}

/// How the initial copies are placed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Discretization {
    /// One copy per node at its earliest time.
    Minimal,
    /// Copies every `delta` time units across each window.
    Grid(f64),
}

/// Builds the network for `set`, adding copies at `extra_times` (entries for
/// nodes not in the set are ignored).
pub fn build_network(
    inst: &Instance,
    set: &FragmentSet,
    discretization: Discretization,
    extra_times: &BTreeMap<NodeH, Vec<f64>>,
) -> Result<Network, SolveError> {
    let nodes: Vec<NodeH> = set.nodes.iter().copied().collect();
    let node_index: HashMap<NodeH, usize> = nodes.iter().enumerate().map(|(k, n)| (*n, k)).collect();
    let start_node = NodeH::new(0, &[]);
    let end_node = NodeH::new(inst.end_depot(), &[]);
    let mut nodes = nodes;
    let mut node_index = node_index;
    for special in [start_node, end_node] {
        if let Entry::Vacant(e) = node_index.entry(special) {
            e.insert(nodes.len());
            nodes.push(special);
        }
    }
    let start_depot = node_index[&start_node];
    let end_depot = node_index[&end_node];
    let fragments = set.fragments.clone();
    let mut frags_from = vec![Vec::new(); nodes.len()];
    for (k, f) in fragments.iter().enumerate() {
        frags_from[node_index[&f.start_node()]].push(k);
    }
    let windows: Vec<(f64, f64)> = fragments.iter().map(|f| feasible_start_window(inst, f)).collect();
    let alpha_of_node: Vec<f64> = nodes.iter().map(|n| inst.alpha[n.vertex]).collect();
    let beta_of_node: Vec<f64> = nodes.iter().map(|n| inst.beta[n.vertex]).collect();

    let mut times: Vec<Vec<f64>> = Vec::with_capacity(nodes.len());
    for (h, node) in nodes.iter().enumerate() {
        let alpha = alpha_of_node[h];
        let mut ts = vec![alpha];
        if h != start_depot && h != end_depot {
            if let Discretization::Grid(delta) = discretization {
                let mut t = alpha + delta;
                while t <= beta_of_node[h] + TIME_TOL {
                    ts.push(t);
                    t += delta;
                }
            }
            if let Some(extra) = extra_times.get(node) {
                for &t in extra {
                    if t < alpha - TIME_TOL || t > beta_of_node[h] + TIME_TOL {
                        return Err(SolveError::InvalidInput(format!("extra time {t} outside the window of {node}")));
                    }
                    ts.push(t);
                }
            }
        }
        ts.sort_by(f64::total_cmp);
        ts.dedup_by(|a, b| (*a - *b).abs() <= TIME_TOL);
        times.push(ts);
    }
    let mut rnodes = Vec::new();
    let mut copies = vec![Vec::new(); nodes.len()];
    for (h, ts) in times.iter().enumerate() {
        for &t in ts {
            copies[h].push(rnodes.len());
            rnodes.push(ResourcedNode { node: h, time: t });
        }
    }
    let mut net = Network {
        fragments,
        departures: vec![Vec::new(); rnodes.len()],
        nodes,
        node_index,
        copies,
        rnodes,
        arcs: Vec::new(),
        frags_from,
        windows,
        start_depot,
        end_depot,
        end_vertex: inst.end_depot(),
        alpha_of_node,
        beta_of_node,
    };
    for h in 0..net.nodes.len() {
        for k in 0..net.copies[h].len() {
            let id = net.copies[h][k];
            let t = net.rnodes[id].time;
            for fi in 0..net.frags_from[h].len() {
                let f = net.frags_from[h][fi];
                if net.window_contains(f, t) {
                    net.add_arc(f, id);
                }
            }
        }
    }
    Ok(net)
}
