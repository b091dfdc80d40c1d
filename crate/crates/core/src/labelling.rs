//! Forward and backward labelling for the (non-elementary) pricing problem.
//!
//! Forward labels carry the deliveries still pending after servicing their
//! head. Backward labels carry the same quantity for the suffix they
//! represent, so a forward and a backward label at one vertex can be joined
//! exactly when their open sets are equal and the forward time does not
//! exceed the backward latest start.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use crate::instance::{DeliverySet, Instance, EPS};

/// A subset-row cut over three request vertices with its (nonpositive) dual.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveCut {
    pub members: [usize; 3],
    pub dual: f64,
}

#[derive(Debug, Clone)]
pub struct Duals {
    /// Dual per vertex; depots are zero.
    pub pi: Vec<f64>,
    /// Dual of the vehicle-count row.
    pub sigma: f64,
    /// Counts routes instead of travel cost.
    pub vehicle_mode: bool,
    pub cuts: Vec<ActiveCut>,
}

impl Duals {
    pub fn zero(inst: &Instance) -> Self {
        Self {
            pi: vec![0.0; inst.num_vertices()],
            sigma: 0.0,
            vehicle_mode: false,
            cuts: Vec::new(),
        }
    }

    pub fn edge(&self, inst: &Instance, i: usize, j: usize) -> f64 {
        let c = if self.vehicle_mode { 0.0 } else { inst.t[i][j] };
        c - 0.5 * self.pi[i] - 0.5 * self.pi[j]
    }

    /// Charged once per route, when it leaves the depot.
    pub fn route_fixed(&self) -> f64 {
        (if self.vehicle_mode { 1.0 } else { 0.0 }) - self.sigma
    }

    /// Reduced cost of a complete route, cut duals included.
    pub fn route_reduced_cost(&self, inst: &Instance, path: &[usize]) -> f64 {
        let mut rc = self.route_fixed() + path.windows(2).map(|w| self.edge(inst, w[0], w[1])).sum::<f64>();
        for cut in &self.cuts {
            let visits = path.iter().filter(|v| cut.members.contains(v)).count();
            rc -= (visits / 2) as f64 * cut.dual;
        }
        rc
    }
}

/// One parity bit per active cut.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct CutState(Vec<u64>);

impl CutState {
    pub fn new(cuts: usize) -> Self {
        Self(vec![0; cuts.div_ceil(64)])
    }

    pub fn get(&self, k: usize) -> bool {
        self.0[k / 64] >> (k % 64) & 1 == 1
    }

    fn flip(&mut self, k: usize) {
        self.0[k / 64] ^= 1 << (k % 64);
    }

    /// Penalty owed by `self` when compared against `other`: cuts where
    /// `self` is one visit away from paying and `other` is not.
    pub fn penalty_over(&self, other: &Self, cuts: &[ActiveCut]) -> f64 {
        let mut pen = 0.0;
        for (w, (a, b)) in self.0.iter().zip(&other.0).enumerate() {
            let mut bits = a & !b;
            while bits != 0 {
                let k = w * 64 + bits.trailing_zeros() as usize;
                pen += -cuts[k].dual;
                bits &= bits - 1;
            }
        }
        pen
    }

    /// Applies a visit to `v`, returning the cut dual mass that became due.
    fn visit(&mut self, v: usize, cuts: &[ActiveCut]) -> f64 {
        let mut due = 0.0;
        for (k, cut) in cuts.iter().enumerate() {
            if cut.members.contains(&v) {
                if self.get(k) {
                    due += -cut.dual;
                }
                self.flip(k);
            }
        }
        due
    }
}

#[derive(Debug, Clone)]
pub struct Label {
    pub head: usize,
    pub rcost: f64,
    pub time: f64,
    pub load: f64,
    pub open: DeliverySet,
    pub pred: Option<usize>,
    pub cuts: CutState,
    /// Vertices on the partial path.
    pub hops: usize,
}

impl Label {
    pub fn initial(inst: &Instance, duals: &Duals) -> Self {
        Self {
            head: 0,
            rcost: duals.route_fixed(),
            time: inst.alpha[0],
            load: 0.0,
            open: DeliverySet::EMPTY,
            pred: None,
            cuts: CutState::new(duals.cuts.len()),
            hops: 1,
        }
    }
}

fn hop_cap(inst: &Instance) -> usize {
    2 * inst.n + 2
}

/// Extends `l` along edge `(head, j)`; `None` when a resource bound fails.
pub fn extend_forward(inst: &Instance, duals: &Duals, l: &Label, j: usize) -> Option<Label> {
    let i = l.head;
    let end = inst.end_depot();
    if j == i || j == 0 || i == end || l.hops + 1 > hop_cap(inst) {
        return None;
    }
    let open = if j == end {
        if !l.open.is_empty() {
            return None;
        }
        l.open
    } else if inst.is_delivery(j) {
        if !l.open.contains(j) {
            return None;
        }
        l.open.without(j)
    } else {
        let d = inst.delivery_of(j);
        if l.open.contains(d) {
            return None;
        }
        l.open.with(d)
    };
    let load = l.load + inst.q[j];
    if load > inst.capacity + EPS {
        return None;
    }
    let arrival = l.time + inst.t[i][j];
    if arrival > inst.beta[j] + EPS {
        return None;
    }
    let mut cuts = l.cuts.clone();
    let due = cuts.visit(j, &duals.cuts);
    Some(Label {
        head: j,
        rcost: l.rcost + duals.edge(inst, i, j) + due,
        time: arrival.max(inst.alpha[j]),
        load,
        open,
        pred: None,
        cuts,
        hops: l.hops + 1,
    })
}

/// Conservative dominance: `l1` is at least as good as `l2` for every
/// completion.
pub fn dominates(l1: &Label, l2: &Label, cuts: &[ActiveCut]) -> bool {
    assert_eq!(l1.head, l2.head, "dominance needs a common head");
    l1.open == l2.open
        && l1.time <= l2.time + 1e-9
        && l1.load <= l2.load + 1e-9
        && l1.hops <= l2.hops
        && l1.rcost + l1.cuts.penalty_over(&l2.cuts, cuts) <= l2.rcost + 1e-9
}

#[derive(Debug, Clone)]
pub struct PricedRoute {
    pub path: Vec<usize>,
    pub rcost: f64,
    pub cost: f64,
}

/// Undominated forward labels, indexed by `(head, open)` in time order.
#[derive(Debug, Clone)]
pub struct ForwardPool {
    pub labels: Vec<Label>,
    buckets: HashMap<(usize, DeliverySet), Vec<usize>>,
}

impl ForwardPool {
    pub fn path(&self, id: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = Some(id);
        while let Some(k) = cur {
            out.push(self.labels[k].head);
            cur = self.labels[k].pred;
        }
        out.reverse();
        out
    }

    /// Label ids at `head` with the given open set, sorted by time.
    pub fn bucket(&self, head: usize, open: DeliverySet) -> &[usize] {
        self.buckets.get(&(head, open)).map_or(&[], Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Label> {
        self.buckets.values().flatten().map(|&k| &self.labels[k])
    }

    pub fn len(&self) -> usize {
        self.buckets.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Complete routes with reduced cost below `-tol`, most negative first.
    pub fn negative_routes(&self, inst: &Instance, tol: f64) -> Vec<PricedRoute> {
        let end = inst.end_depot();
        let mut out: Vec<PricedRoute> = self
            .buckets
            .get(&(end, DeliverySet::EMPTY))
            .into_iter()
            .flatten()
            .filter(|&&k| self.labels[k].rcost < -tol)
            .map(|&k| {
                let path = self.path(k);
                let cost = inst.path_cost(&path);
                PricedRoute {
                    path,
                    rcost: self.labels[k].rcost,
                    cost,
                }
            })
            .collect();
        out.sort_by(|a, b| a.rcost.total_cmp(&b.rcost).then_with(|| a.path.cmp(&b.path)));
        out
    }
}

struct QueueKey {
    key: f64,
    vertex: usize,
    seq: usize,
    id: usize,
}

impl PartialEq for QueueKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for QueueKey {}
impl PartialOrd for QueueKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QueueKey {
    // Reversed so the max-heap pops the smallest key.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .key
            .total_cmp(&self.key)
            .then_with(|| other.vertex.cmp(&self.vertex))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Full forward labelling from the start depot.
pub fn solve_pricing_forward(inst: &Instance, duals: &Duals) -> ForwardPool {
    let mut labels = vec![Label::initial(inst, duals)];
    let mut alive = vec![true];
    let mut buckets: HashMap<(usize, DeliverySet), Vec<usize>> = HashMap::new();
    buckets.insert((0, DeliverySet::EMPTY), vec![0]);
    let mut heap = BinaryHeap::new();
    heap.push(QueueKey {
        key: labels[0].time,
        vertex: 0,
        seq: 0,
        id: 0,
    });
    let mut seq = 1;
    while let Some(QueueKey { id, .. }) = heap.pop() {
        if !alive[id] {
            continue;
        }
        for j in 1..inst.num_vertices() {
            let Some(mut next) = extend_forward(inst, duals, &labels[id], j) else {
                continue;
            };
            next.pred = Some(id);
            let bucket = buckets.entry((j, next.open)).or_default();
            if bucket.iter().any(|&k| dominates(&labels[k], &next, &duals.cuts)) {
                continue;
            }
            bucket.retain(|&k| {
                let keep = !dominates(&next, &labels[k], &duals.cuts);
                if !keep {
                    alive[k] = false;
                }
                keep
            });
            let nid = labels.len();
            bucket.push(nid);
            heap.push(QueueKey {
                key: next.time,
                vertex: j,
                seq,
                id: nid,
            });
            seq += 1;
            labels.push(next);
            alive.push(true);
        }
    }
    for ids in buckets.values_mut() {
        ids.sort_by(|&a, &b| labels[a].time.total_cmp(&labels[b].time).then(a.cmp(&b)));
    }
    ForwardPool { labels, buckets }
}

#[derive(Debug, Clone)]
pub struct BackwardLabel {
    pub head: usize,
    pub rcost: f64,
    /// Latest time service may start at `head`.
    pub latest: f64,
    pub load: f64,
    /// Deliveries pending on departure from `head`.
    pub open: DeliverySet,
    /// Next label along the suffix.
    pub succ: Option<usize>,
    pub cuts: CutState,
    pub hops: usize,
}

impl BackwardLabel {
    pub fn terminal(inst: &Instance, duals: &Duals) -> Self {
        let end = inst.end_depot();
        Self {
            head: end,
            rcost: 0.0,
            latest: inst.beta[end],
            load: 0.0,
            open: DeliverySet::EMPTY,
            succ: None,
            cuts: CutState::new(duals.cuts.len()),
            hops: 1,
        }
    }
}

/// Prepends vertex `i` to the suffix represented by `l`.
pub fn extend_backward(inst: &Instance, duals: &Duals, l: &BackwardLabel, i: usize) -> Option<BackwardLabel> {
    let j = l.head;
    let end = inst.end_depot();
    if i == j || i == end || j == 0 || l.hops + 1 > hop_cap(inst) {
        return None;
    }
    let mut open = l.open;
    if inst.is_delivery(j) {
        if open.contains(j) {
            return None;
        }
        open.insert(j);
    } else if inst.is_pickup(j) {
        let d = inst.delivery_of(j);
        if !open.contains(d) {
            return None;
        }
        open.remove(d);
    }
    if i == 0 {
        if !open.is_empty() {
            return None;
        }
    } else if inst.is_delivery(i) {
        if open.contains(i) {
            return None;
        }
    } else if !open.contains(inst.delivery_of(i)) {
        return None;
    }
    let load = inst.onboard_load(open);
    if load > inst.capacity + EPS {
        return None;
    }
    let latest = (l.latest - inst.t[i][j]).min(inst.beta[i]);
    if latest < inst.alpha[i] - EPS {
        return None;
    }
    let mut cuts = l.cuts.clone();
    let due = cuts.visit(i, &duals.cuts);
    let fixed = if i == 0 { duals.route_fixed() } else { 0.0 };
    Some(BackwardLabel {
        head: i,
        rcost: l.rcost + duals.edge(inst, i, j) + due + fixed,
        latest,
        load,
        open,
        succ: None,
        cuts,
        hops: l.hops + 1,
    })
}

pub fn dominates_backward(l1: &BackwardLabel, l2: &BackwardLabel, cuts: &[ActiveCut]) -> bool {
    assert_eq!(l1.head, l2.head, "dominance needs a common head");
    l1.open == l2.open
        && l1.latest >= l2.latest - 1e-9
        && l1.load <= l2.load + 1e-9
        && l1.hops <= l2.hops
        && l1.rcost + l1.cuts.penalty_over(&l2.cuts, cuts) <= l2.rcost + 1e-9
}

/// Undominated backward labels, indexed by `(head, open)` in decreasing
/// latest-start order.
#[derive(Debug, Clone)]
pub struct BackwardPool {
    pub labels: Vec<BackwardLabel>,
    buckets: HashMap<(usize, DeliverySet), Vec<usize>>,
}

impl BackwardPool {
    pub fn path(&self, id: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = Some(id);
        while let Some(k) = cur {
            out.push(self.labels[k].head);
            cur = self.labels[k].succ;
        }
        out
    }

    pub fn bucket(&self, head: usize, open: DeliverySet) -> &[usize] {
        self.buckets.get(&(head, open)).map_or(&[], Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = &BackwardLabel> {
        self.buckets.values().flatten().map(|&k| &self.labels[k])
    }

    pub fn len(&self) -> usize {
        self.buckets.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Full backward labelling from the end depot.
pub fn solve_pricing_backward(inst: &Instance, duals: &Duals) -> BackwardPool {
    let end = inst.end_depot();
    let mut labels = vec![BackwardLabel::terminal(inst, duals)];
    let mut alive = vec![true];
    let mut buckets: HashMap<(usize, DeliverySet), Vec<usize>> = HashMap::new();
    buckets.insert((end, DeliverySet::EMPTY), vec![0]);
    let mut heap = BinaryHeap::new();
    heap.push(QueueKey {
        key: -labels[0].latest,
        vertex: end,
        seq: 0,
        id: 0,
    });
    let mut seq = 1;
    while let Some(QueueKey { id, .. }) = heap.pop() {
        if !alive[id] {
            continue;
        }
        for i in 0..end {
            let Some(mut next) = extend_backward(inst, duals, &labels[id], i) else {
                continue;
            };
            next.succ = Some(id);
            let bucket = buckets.entry((i, next.open)).or_default();
            if bucket.iter().any(|&k| dominates_backward(&labels[k], &next, &duals.cuts)) {
                continue;
            }
            bucket.retain(|&k| {
                let keep = !dominates_backward(&next, &labels[k], &duals.cuts);
                if !keep {
                    alive[k] = false;
                }
                keep
            });
            let nid = labels.len();
            bucket.push(nid);
            if i != 0 {
                heap.push(QueueKey {
                    key: -next.latest,
                    vertex: i,
                    seq,
                    id: nid,
                });
                seq += 1;
            }
            labels.push(next);
            alive.push(true);
        }
    }
    for ids in buckets.values_mut() {
        ids.sort_by(|&a, &b| labels[b].latest.total_cmp(&labels[a].latest).then(a.cmp(&b)));
    }
    BackwardPool { labels, buckets }
}
