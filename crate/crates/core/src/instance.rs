//! PDPTW instances: data model, parsing, simulation, brute-force oracles and
//! a seeded generator.
//!
//! Vertex layout: `0` start depot, `1..=n` pickups, `n+1..=2n` deliveries,
//! `2n+1` end depot. Pickup `p` is paired with delivery `p + n`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Tolerance for window and capacity feasibility.
pub const EPS: f64 = 1e-6;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum InstanceError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("pickup {pickup} has weight {pickup_weight} but delivery {delivery} has {delivery_weight}")]
    Pairing {
        pickup: usize,
        delivery: usize,
        pickup_weight: f64,
        delivery_weight: f64,
    },
    #[error("capacity {0} is negative")]
    NegativeCapacity(f64),
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error("instance has {n} pairs, oracle limit is {limit}")]
    TooLarge { n: usize, limit: usize },
}

/// Set of delivery vertices, stored as a bitmask over vertex ids.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DeliverySet(pub u128);

impl DeliverySet {
    pub const EMPTY: DeliverySet = DeliverySet(0);

    pub fn from_vertices(vs: &[usize]) -> Self {
        let mut s = Self::EMPTY;
        for &v in vs {
            s.insert(v);
        }
        s
    }

    pub fn contains(self, v: usize) -> bool {
        self.0 >> v & 1 == 1
    }

    pub fn insert(&mut self, v: usize) {
        self.0 |= 1 << v;
    }

    pub fn remove(&mut self, v: usize) {
        self.0 &= !(1 << v);
    }

    pub fn with(mut self, v: usize) -> Self {
        self.insert(v);
        self
    }

    pub fn without(mut self, v: usize) -> Self {
        self.remove(v);
        self
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                return None;
            }
            let v = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            Some(v)
        })
    }

    pub fn to_vec(self) -> Vec<usize> {
        self.iter().collect()
    }
}

impl fmt::Display for DeliverySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, v) in self.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, "}}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub name: String,
    pub n: usize,
    pub capacity: f64,
    /// Signed load change per vertex.
    pub q: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// Travel time, equal to travel cost.
    pub t: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    BenchmarkText,
    CanonicalJson,
}

#[derive(Serialize, Deserialize)]
struct CanonicalJson {
    #[serde(default)]
    name: String,
    n: usize,
    capacity: f64,
    weights: Vec<f64>,
    windows: Vec<[f64; 2]>,
    travel: Vec<Vec<f64>>,
}

impl Instance {
    pub fn num_vertices(&self) -> usize {
        2 * self.n + 2
    }

    pub fn end_depot(&self) -> usize {
        2 * self.n + 1
    }

    pub fn is_pickup(&self, v: usize) -> bool {
        v >= 1 && v <= self.n
    }

    pub fn is_delivery(&self, v: usize) -> bool {
        v > self.n && v <= 2 * self.n
    }

    pub fn is_request(&self, v: usize) -> bool {
        v >= 1 && v <= 2 * self.n
    }

    pub fn delivery_of(&self, p: usize) -> usize {
        p + self.n
    }

    pub fn pickup_of(&self, d: usize) -> usize {
        d - self.n
    }

    /// Load carried when exactly the deliveries in `open` are pending.
    pub fn onboard_load(&self, open: DeliverySet) -> f64 {
        open.iter().map(|d| -self.q[d]).sum()
    }

    pub fn path_cost(&self, path: &[usize]) -> f64 {
        path.windows(2).map(|w| self.t[w[0]][w[1]]).sum()
    }

    /// Checks the structural invariants.
    pub fn validate(&self) -> Result<(), InstanceError> {
        let nv = self.num_vertices();
        if self.n > 63 {
            return Err(InstanceError::Invalid(format!("{} pairs exceed the supported 63", self.n)));
        }
        if self.capacity < 0.0 {
            return Err(InstanceError::NegativeCapacity(self.capacity));
        }
        if self.q.len() != nv || self.alpha.len() != nv || self.beta.len() != nv {
            return Err(InstanceError::Invalid(format!("expected {nv} vertices")));
        }
        if self.t.len() != nv || self.t.iter().any(|r| r.len() != nv) {
            return Err(InstanceError::Invalid(format!("travel matrix must be {nv}x{nv}")));
        }
        if self.q[0] != 0.0 || self.q[nv - 1] != 0.0 {
            return Err(InstanceError::Invalid("depots must have zero weight".into()));
        }
        for p in 1..=self.n {
            let d = p + self.n;
            if self.q[d] != -self.q[p] {
                return Err(InstanceError::Pairing {
                    pickup: p,
                    delivery: d,
                    pickup_weight: self.q[p],
                    delivery_weight: self.q[d],
                });
            }
            if self.q[p] <= 0.0 {
                return Err(InstanceError::Invalid(format!("pickup {p} must have positive weight")));
            }
        }
        // Negated comparisons so that NaN data is rejected too.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        for i in 0..nv {
            if !(self.alpha[i] <= self.beta[i]) {
                return Err(InstanceError::Invalid(format!(
                    "vertex {i} has window [{}, {}]",
                    self.alpha[i], self.beta[i]
                )));
            }
            for j in 0..nv {
                if !(self.t[i][j] >= 0.0) || !self.t[i][j].is_finite() {
                    return Err(InstanceError::Invalid(format!("travel time {i}->{j} is {}", self.t[i][j])));
                }
            }
        }
        Ok(())
    }

    pub fn to_canonical_json(&self) -> String {
        let doc = CanonicalJson {
            name: self.name.clone(),
            n: self.n,
            capacity: self.capacity,
            weights: self.q.clone(),
            windows: self.alpha.iter().zip(&self.beta).map(|(&a, &b)| [a, b]).collect(),
            travel: self.t.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("instance serializes")
    }
}

pub fn parse_instance(text: &str, format: Format) -> Result<Instance, InstanceError> {
    let inst = match format {
        Format::CanonicalJson => parse_json(text)?,
        Format::BenchmarkText => parse_benchmark(text)?,
    };
    inst.validate()?;
    Ok(inst)
}

fn parse_json(text: &str) -> Result<Instance, InstanceError> {
    let doc: CanonicalJson = serde_json::from_str(text).map_err(|e| InstanceError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let nv = 2 * doc.n + 2;
    if doc.weights.len() != nv || doc.windows.len() != nv {
        return Err(InstanceError::Invalid(format!(
            "n = {} needs {nv} weights and windows, got {} and {}",
            doc.n,
            doc.weights.len(),
            doc.windows.len()
        )));
    }
    Ok(Instance {
        name: doc.name,
        n: doc.n,
        capacity: doc.capacity,
        q: doc.weights,
        alpha: doc.windows.iter().map(|w| w[0]).collect(),
        beta: doc.windows.iter().map(|w| w[1]).collect(),
        t: doc.travel,
    })
}

fn parse_benchmark(text: &str) -> Result<Instance, InstanceError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));

    fn fields(line_no: usize, line: &str, want: usize) -> Result<Vec<f64>, InstanceError> {
        let mut out = Vec::with_capacity(want);
        let mut col = 1;
        let mut rest = line;
        while !rest.is_empty() {
            let skip = rest.len() - rest.trim_start().len();
            col += skip;
            rest = &rest[skip..];
            if rest.is_empty() {
                break;
            }
            let len = rest.find(char::is_whitespace).unwrap_or(rest.len());
            let token = &rest[..len];
            let v: f64 = token.parse().map_err(|_| InstanceError::Syntax {
                line: line_no,
                column: col,
                message: format!("expected a number, found `{token}`"),
            })?;
            out.push(v);
            col += len;
            rest = &rest[len..];
        }
        if out.len() != want {
            return Err(InstanceError::Syntax {
                line: line_no,
                column: 1,
                message: format!("expected {want} fields, found {}", out.len()),
            });
        }
        Ok(out)
    }

    let (hl, header) = lines.next().ok_or(InstanceError::Syntax {
        line: 1,
        column: 1,
        message: "missing header `n Q`".into(),
    })?;
    let h = fields(hl, header, 2)?;
    if h[0] < 0.0 || h[0].fract() != 0.0 {
        return Err(InstanceError::Syntax {
            line: hl,
            column: 1,
            message: "pair count must be a nonnegative integer".into(),
        });
    }
    let n = h[0] as usize;
    let nv = 2 * n + 2;
    let mut xy = vec![(0.0, 0.0); nv];
    let mut q = vec![0.0; nv];
    let mut alpha = vec![0.0; nv];
    let mut beta = vec![0.0; nv];
    let mut seen = vec![false; nv];
    for _ in 0..nv {
        let (ln, line) = lines.next().ok_or(InstanceError::Syntax {
            line: text.lines().count() + 1,
            column: 1,
            message: format!("expected {nv} vertex lines"),
        })?;
        let f = fields(ln, line, 6)?;
        let id = f[0];
        if id < 0.0 || id.fract() != 0.0 || id as usize >= nv || seen[id as usize] {
            return Err(InstanceError::Syntax {
                line: ln,
                column: 1,
                message: format!("bad or repeated vertex id {id}"),
            });
        }
        let i = id as usize;
        seen[i] = true;
        xy[i] = (f[1], f[2]);
        q[i] = f[3];
        alpha[i] = f[4];
        beta[i] = f[5];
    }
    if let Some((ln, _)) = lines.next() {
        return Err(InstanceError::Syntax {
            line: ln,
            column: 1,
            message: "trailing content after vertex lines".into(),
        });
    }
    Ok(Instance {
        name: "benchmark".into(),
        n,
        capacity: h[1],
        q,
        alpha,
        beta,
        t: euclidean_matrix(&xy),
    })
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn floor2(x: f64) -> f64 {
    (x * 100.0 + 1e-9).floor() / 100.0
}

fn ceil2(x: f64) -> f64 {
    (x * 100.0 - 1e-9).ceil() / 100.0
}

fn euclidean_matrix(xy: &[(f64, f64)]) -> Vec<Vec<f64>> {
    xy.iter()
        .map(|a| xy.iter().map(|b| round2(((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt())).collect())
        .collect()
}

/// The three-pair example instance with capacity 15.
pub fn small_paper_instance() -> Instance {
    let upper: [&[f64]; 8] = [
        &[0.0, 25.73, 17.37, 25.69, 16.1, 26.72, 10.55, 0.0],
        &[0.0, 38.68, 43.65, 41.29, 26.35, 26.35, 25.73],
        &[0.0, 9.15, 9.97, 44.02, 27.62, 17.37],
        &[0.0, 18.22, 52.39, 35.36, 25.69],
        &[0.0, 40.26, 26.38, 16.1],
        &[0.0, 17.66, 26.72],
        &[0.0, 10.55],
        &[0.0],
    ];
    let mut t = vec![vec![0.0; 8]; 8];
    for (i, row) in upper.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            let j = i + k;
            t[i][j] = v;
            t[j][i] = v;
        }
    }
    Instance {
        name: "small".into(),
        n: 3,
        capacity: 15.0,
        q: vec![0.0, 8.0, 7.0, 8.0, -8.0, -7.0, -8.0, 0.0],
        alpha: vec![0.0, 50.0, 80.0, 100.0, 80.0, 160.0, 170.0, 0.0],
        beta: vec![200.0, 70.0, 110.0, 130.0, 110.0, 190.0, 200.0, 200.0],
        t,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub path: Vec<usize>,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Infeasibility {
    BadEndpoints,
    UnknownVertex(usize),
    Repeated(usize),
    DeliveryBeforePickup { delivery: usize },
    Capacity { at: usize, load: f64 },
    TimeWindow { at: usize, arrival: f64 },
    Unserved { pickup: usize },
}

impl fmt::Display for Infeasibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::BadEndpoints => write!(f, "path must start at 0 and end at the end depot"),
            Self::UnknownVertex(v) => write!(f, "vertex {v} does not exist"),
            Self::Repeated(v) => write!(f, "vertex {v} visited twice"),
            Self::DeliveryBeforePickup { delivery } => write!(f, "delivery {delivery} precedes its pickup"),
            Self::Capacity { at, load } => write!(f, "load {load} exceeds capacity at {at}"),
            Self::TimeWindow { at, arrival } => write!(f, "arrival {arrival} misses the window of {at}"),
            Self::Unserved { pickup } => write!(f, "pickup {pickup} is never delivered"),
        }
    }
}

/// Walks `path` from time 0 applying waiting, windows, load and pairing.
pub fn simulate_route(inst: &Instance, path: &[usize]) -> Result<Route, Infeasibility> {
    let end = inst.end_depot();
    if path.len() < 2 || path[0] != 0 || *path.last().unwrap() != end {
        return Err(Infeasibility::BadEndpoints);
    }
    let mut seen = vec![false; inst.num_vertices()];
    let mut time = inst.alpha[0];
    let mut load = 0.0;
    let mut open = DeliverySet::EMPTY;
    seen[0] = true;
    for w in path.windows(2) {
        let (i, j) = (w[0], w[1]);
        if j >= inst.num_vertices() {
            return Err(Infeasibility::UnknownVertex(j));
        }
        if seen[j] {
            return Err(Infeasibility::Repeated(j));
        }
        seen[j] = true;
        if j == end && !open.is_empty() {
            let d = open.iter().next().unwrap();
            return Err(Infeasibility::Unserved { pickup: inst.pickup_of(d) });
        }
        if inst.is_delivery(j) {
            if !open.contains(j) {
                return Err(Infeasibility::DeliveryBeforePickup { delivery: j });
            }
            open.remove(j);
        } else if inst.is_pickup(j) {
            open.insert(inst.delivery_of(j));
        }
        load += inst.q[j];
        if load > inst.capacity + EPS {
            return Err(Infeasibility::Capacity { at: j, load });
        }
        let arrival = time + inst.t[i][j];
        if arrival > inst.beta[j] + EPS {
            return Err(Infeasibility::TimeWindow { at: j, arrival });
        }
        time = arrival.max(inst.alpha[j]);
    }
    Ok(Route {
        path: path.to_vec(),
        cost: inst.path_cost(path),
    })
}

/// Every feasible elementary route, in lexicographic path order.
pub fn enumerate_routes_oracle(
    inst: &Instance,
    max_pairs: usize,
    include_empty_route: bool,
) -> Result<Vec<Route>, InstanceError> {
    if inst.n > max_pairs {
        return Err(InstanceError::TooLarge { n: inst.n, limit: max_pairs });
    }
    let mut out = Vec::new();
    let mut path = vec![0];
    let mut visited = vec![false; inst.num_vertices()];
    visited[0] = true;
    route_dfs(inst, include_empty_route, &mut path, &mut visited, inst.alpha[0], 0.0, DeliverySet::EMPTY, &mut out);
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn route_dfs(
    inst: &Instance,
    include_empty: bool,
    path: &mut Vec<usize>,
    visited: &mut [bool],
    time: f64,
    load: f64,
    open: DeliverySet,
    out: &mut Vec<Route>,
) {
    let i = *path.last().unwrap();
    let end = inst.end_depot();
    for j in 1..=end {
        if visited[j] {
            continue;
        }
        if j == end {
            if !open.is_empty() || (path.len() == 1 && !include_empty) {
                continue;
            }
            if time + inst.t[i][j] > inst.beta[j] + EPS {
                continue;
            }
            path.push(j);
            out.push(Route {
                path: path.clone(),
                cost: inst.path_cost(path),
            });
            path.pop();
            continue;
        }
        let next_open = if inst.is_delivery(j) {
            if !open.contains(j) {
                continue;
            }
            open.without(j)
        } else {
            open.with(inst.delivery_of(j))
        };
        let next_load = load + inst.q[j];
        if next_load > inst.capacity + EPS {
            continue;
        }
        let arrival = time + inst.t[i][j];
        if arrival > inst.beta[j] + EPS {
            continue;
        }
        visited[j] = true;
        path.push(j);
        route_dfs(inst, include_empty, path, visited, arrival.max(inst.alpha[j]), next_load, next_open, out);
        path.pop();
        visited[j] = false;
    }
}

/// Requests covered by a route, as a bitmask over pickup indices `p - 1`.
pub fn route_request_mask(inst: &Instance, path: &[usize]) -> u64 {
    path.iter()
        .filter(|&&v| inst.is_pickup(v))
        .fold(0u64, |m, &p| m | 1 << (p - 1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub vehicles: usize,
    pub cost: f64,
    pub routes: Vec<Route>,
}

/// Lexicographic optimum (fewest vehicles, then least cost) by dynamic
/// programming over request subsets of the enumerated routes.
pub fn oracle_optimum(inst: &Instance, max_pairs: usize) -> Result<Option<OracleSolution>, InstanceError> {
    let routes = enumerate_routes_oracle(inst, max_pairs, false)?;
    let full: usize = (1usize << inst.n) - 1;
    let mut best_single: Vec<Option<usize>> = vec![None; full + 1];
    for (k, r) in routes.iter().enumerate() {
        let m = route_request_mask(inst, &r.path) as usize;
        if best_single[m].is_none_or(|b| r.cost < routes[b].cost - 1e-12) {
            best_single[m] = Some(k);
        }
    }
    // dp[mask] = (vehicles, cost, route index, rest mask)
    let mut dp: Vec<Option<(usize, f64, usize, usize)>> = vec![None; full + 1];
    dp[0] = Some((0, 0.0, usize::MAX, 0));
    for mask in 1..=full {
        let low = mask & mask.wrapping_neg();
        let rest_all = mask ^ low;
        // Enumerate sub-masks of `rest_all`; the route takes `low` plus them.
        let mut sub = rest_all;
        loop {
            let part = sub | low;
            if let (Some(r), Some((v, c, _, _))) = (best_single[part], dp[mask ^ part]) {
                let cand = (v + 1, c + routes[r].cost);
                let better = match dp[mask] {
                    None => true,
                    Some((bv, bc, _, _)) => cand.0 < bv || (cand.0 == bv && cand.1 < bc - 1e-9),
                };
                if better {
                    dp[mask] = Some((cand.0, cand.1, r, mask ^ part));
                }
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest_all;
        }
    }
    let Some((vehicles, cost, _, _)) = dp[full] else {
        return Ok(None);
    };
    let mut picked = Vec::new();
    let mut mask = full;
    while mask != 0 {
        let (_, _, r, rest) = dp[mask].unwrap();
        picked.push(routes[r].clone());
        mask = rest;
    }
    picked.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(Some(OracleSolution {
        vehicles,
        cost,
        routes: picked,
    }))
}

/// Random instance with `pairs` requests. Every request is servable on
/// its own route, so the instance is always feasible.
pub fn generate_instance(pairs: usize, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = pairs;
    let nv = 2 * n + 2;
    let mut xy = vec![(0.0, 0.0); nv];
    xy[0] = (rng.gen_range(0.0..=100.0), rng.gen_range(0.0..=100.0));
    for v in xy.iter_mut().take(2 * n + 1).skip(1) {
        *v = (rng.gen_range(0.0..=100.0), rng.gen_range(0.0..=100.0));
    }
    xy[nv - 1] = xy[0];
    let t = euclidean_matrix(&xy);
    let mut q = vec![0.0; nv];
    let mut alpha = vec![0.0; nv];
    let mut beta = vec![0.0; nv];
    let window = |rng: &mut ChaCha8Rng, visit: f64| {
        let width = rng.gen_range(20.0..=60.0);
        let offset = rng.gen_range(0.0..=width);
        let a = floor2((visit - offset).max(0.0));
        let b = ceil2((a + width).max(visit));
        (a, b)
    };
    for p in 1..=n {
        let d = p + n;
        let w: u32 = rng.gen_range(5..=10);
        q[p] = w as f64;
        q[d] = -(w as f64);
        let sp = rng.gen_range(t[0][p]..=t[0][p] + 150.0);
        let sd_lo = sp + t[p][d];
        let sd = rng.gen_range(sd_lo..=sd_lo + 60.0);
        (alpha[p], beta[p]) = window(&mut rng, sp);
        (alpha[d], beta[d]) = window(&mut rng, sd);
    }
    let horizon = (n + 1..=2 * n)
        .map(|d| beta[d] + t[d][nv - 1])
        .fold(0.0f64, f64::max)
        .ceil();
    beta[0] = horizon;
    beta[nv - 1] = horizon;
    Instance {
        name: format!("gen-{pairs}-{seed}"),
        n,
        capacity: 15.0,
        q,
        alpha,
        beta,
        t,
    }
}
