//! The overall solve: vehicle bound, cost bound, fragments, network, and the
//! refinement loop, repeated per vehicle target and cost guess.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::cere::absorb_nodes;
use crate::colgen::{
    integer_rmp_bound, set_vehicle_constraint, solve_master, solve_with_cuts, CgConfig, MasterState, ObjectiveMode,
};
use crate::fl::{retain_fragments, rho_double_prime, FlContext, FIX_TOL};
use crate::fragments::{enumerate_fragments, FragmentSet, NodeH, DEFAULT_ENUMERATION_CAP};
use crate::instance::{simulate_route, Instance, Route};
use crate::ren::{build_network, Discretization, Network};
use crate::rfn::{refine_solve, RefineOptions, RefineOutcome, RefineStatus, Refinement};
use crate::SolveError;

/// Algorithm variant: B solves a fixed time grid with no-good cuts, D uses
/// discretization discovery; F adds reduced-cost fixing, C adds node
/// absorption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Variant {
    B,
    D,
    BF,
    DF,
    BFC,
    DFC,
}

impl Variant {
    pub const ALL: [Variant; 6] = [Variant::B, Variant::D, Variant::BF, Variant::DF, Variant::BFC, Variant::DFC];

    pub fn discovery(self) -> bool {
        matches!(self, Variant::D | Variant::DF | Variant::DFC)
    }

    pub fn fixing(self) -> bool {
        !matches!(self, Variant::B | Variant::D)
    }

    pub fn absorption(self) -> bool {
        matches!(self, Variant::BFC | Variant::DFC)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown variant {s:?} (expected one of B, D, BF, DF, BFC, DFC)"))
    }
}

#[derive(Debug, Clone)]
pub struct Config {
    pub variant: Variant,
    /// Cost guess above the lower bound when a same-size heuristic exists.
    pub psi_same: f64,
    pub psi_diff: f64,
    pub grid_delta: f64,
    pub max_increase_phase1: i64,
    pub max_increase_phase2: i64,
    pub cut_rounds: usize,
    pub time_limit: Option<Duration>,
    pub seed: u64,
    pub threads: usize,
    /// Starting vehicle target instead of the rounded-up bound.
    pub vehicles: Option<usize>,
    pub cg: CgConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            variant: Variant::DFC,
            psi_same: 20.0,
            psi_diff: 30.0,
            grid_delta: 5.0,
            max_increase_phase1: 500,
            max_increase_phase2: 6000,
            cut_rounds: 3,
            time_limit: None,
            seed: 0,
            threads: 1,
            vehicles: None,
            cg: CgConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Optimal,
    Infeasible,
    TimeLimit,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseStats {
    pub z_lb_v: f64,
    pub z_lb_c: f64,
    pub fragments: usize,
    pub resourced_fragments: usize,
    pub resourced_nodes: usize,
    pub ddd_iterations: usize,
    pub mip_nodes: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub status: RunStatus,
    pub vehicles: usize,
    pub cost: f64,
    pub routes: Vec<Vec<usize>>,
    pub phases: Vec<PhaseStats>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Report with wall times zeroed, for reproducibility checks.
    pub fn without_times(&self) -> Self {
        let mut r = self.clone();
        for p in &mut r.phases {
            p.seconds = 0.0;
        }
        r
    }
}

struct Bounds {
    z_lb_v: f64,
    z_lb_c: f64,
    cost_ctx: Option<FlContext>,
    vehicle_ctx: Option<FlContext>,
}

struct Solver<'a> {
    inst: &'a Instance,
    config: &'a Config,
    deadline: Option<Instant>,
    extra_times: BTreeMap<NodeH, Vec<f64>>,
    phases: Vec<PhaseStats>,
}

enum PhaseResult {
    Solved(f64, Vec<Route>),
    Nothing,
    TimeLimit(Option<(f64, Vec<Route>)>),
}

impl Solver<'_> {
    fn out_of_time(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d)
    }

    fn fragments(&self, bounds: &Bounds, gap: f64) -> Result<FragmentSet, SolveError> {
        let mut set = enumerate_fragments(self.inst, DEFAULT_ENUMERATION_CAP)?;
        if self.config.variant.fixing() {
            if let Some(ctx) = &bounds.vehicle_ctx {
                set = retain_fragments(self.inst, ctx, &set);
            }
            if let Some(ctx) = &bounds.cost_ctx {
                let ctx = with_gap(ctx, gap);
                set = retain_fragments(self.inst, &ctx, &set);
            }
        }
        Ok(set)
    }

    /// Builds and solves the network program over `set`.
    fn network_phase(
        &mut self,
        bounds: &Bounds,
        set: &FragmentSet,
        vehicles: usize,
        cutoff: Option<f64>,
        gap: f64,
        branch_gap: Option<f64>,
    ) -> Result<PhaseResult, SolveError> {
        let started = Instant::now();
        let inst = self.inst;
        let variant = self.config.variant;
        let mut net: Network = if variant.discovery() {
            build_network(inst, set, Discretization::Minimal, &self.extra_times)?
        } else {
            build_network(inst, set, Discretization::Grid(self.config.grid_delta), &BTreeMap::new())?
        };
        let cost_ctx = bounds.cost_ctx.as_ref().map(|c| with_gap(c, gap));
        let vehicle_ctx = bounds.vehicle_ctx.as_ref();
        let fixing = |net: &Network, a: usize| {
            let cost_fixed = cost_ctx
                .as_ref()
                .is_some_and(|c| !c.keeps(rho_double_prime(inst, c, net, a)));
            cost_fixed || vehicle_ctx.is_some_and(|c| !c.keeps(rho_double_prime(inst, c, net, a)))
        };
        let branching = |net: &Network, a: usize| {
            let (Some(c), Some(g)) = (cost_ctx.as_ref(), branch_gap) else {
                return true;
            };
            rho_double_prime(inst, c, net, a) >= g - FIX_TOL
        };
        let opts = RefineOptions {
            vehicles,
            cutoff,
            refinement: if variant.discovery() {
                Refinement::Discovery
            } else {
                Refinement::NoGood
            },
            deadline: self.deadline,
            threads: self.config.threads,
            fixing: variant.fixing().then_some(&fixing as &dyn Fn(&Network, usize) -> bool),
            branching: branch_gap.map(|_| &branching as &dyn Fn(&Network, usize) -> bool),
            ..RefineOptions::default()
        };
        let outcome: RefineOutcome = refine_solve(inst, &mut net, &opts)?;
        if variant.discovery() {
            for (node, times) in net.extra_times() {
                let entry = self.extra_times.entry(node).or_default();
                for t in times {
                    if !entry.iter().any(|&u| (u - t).abs() <= 1e-9) {
                        entry.push(t);
                    }
                }
            }
        }
        self.phases.push(PhaseStats {
            z_lb_v: bounds.z_lb_v,
            z_lb_c: bounds.z_lb_c,
            fragments: set.len(),
            resourced_fragments: net.num_active_arcs(),
            resourced_nodes: net.num_resourced_nodes(),
            ddd_iterations: outcome.iterations.len(),
            mip_nodes: outcome.mip_nodes(),
            seconds: started.elapsed().as_secs_f64(),
        });
        Ok(match outcome.status {
            RefineStatus::Optimal => PhaseResult::Solved(outcome.cost.unwrap_or(0.0), outcome.routes),
            RefineStatus::Infeasible | RefineStatus::NoSolutionUnderCutoff => PhaseResult::Nothing,
            RefineStatus::TimeLimit | RefineStatus::NodeLimit | RefineStatus::IterationLimit => {
                PhaseResult::TimeLimit(outcome.cost.map(|c| (c, outcome.routes)))
            }
        })
    }

    /// Solves with exactly `vehicles` routes; `None` when impossible.
    fn solve_target(
        &mut self,
        vehicle_state: &MasterState,
        z_lb_v: f64,
        vehicles: usize,
    ) -> Result<Option<PhaseResult>, SolveError> {
        let inst = self.inst;
        let config = self.config;
        let mut state = MasterState::new(inst, ObjectiveMode::TravelCost);
        for col in &vehicle_state.columns {
            state.add_column(inst, col.path.clone());
        }
        set_vehicle_constraint(&mut state, vehicles);
        solve_master(inst, &mut state, &config.cg)?;
        if state.is_infeasible() {
            return Ok(None);
        }
        solve_with_cuts(inst, &mut state, config.cut_rounds, &config.cg)?;
        if state.is_infeasible() {
            return Ok(None);
        }
        let z_lb_c = state.z_lb;
        let heuristic = integer_rmp_bound(inst, &state)?;
        let psi = if heuristic.is_some() { config.psi_same } else { config.psi_diff };
        let guess = heuristic.as_ref().map_or(f64::INFINITY, |h| h.0).min(z_lb_c + psi);
        log::info!("vehicles {vehicles}: cost bound {z_lb_c:.4}, guess {guess:.4}");

        let bounds = Bounds {
            z_lb_v,
            z_lb_c,
            cost_ctx: config.variant.fixing().then(|| FlContext::new(inst, state.duals(), z_lb_c, guess)),
            vehicle_ctx: config
                .variant
                .fixing()
                .then(|| FlContext::new(inst, vehicle_state.duals(), z_lb_v, vehicles as f64)),
        };

        // First phase: everything that can cost at most the guess.
        let gap1 = guess - z_lb_c;
        let mut set = self.fragments(&bounds, gap1)?;
        let mut kept_nodes = set.nodes.clone();
        if config.variant.absorption() {
            let ctx = bounds.cost_ctx.as_ref().map(|c| with_gap(c, gap1));
            set = absorb_nodes(inst, &set, ctx.as_ref(), config.max_increase_phase1, None)?.0;
            kept_nodes = set.nodes.clone();
        }
        match self.network_phase(&bounds, &set, vehicles, Some(guess), gap1, None)? {
            PhaseResult::Solved(cost, routes) => return Ok(Some(PhaseResult::Solved(cost, routes))),
            PhaseResult::TimeLimit(best) => return Ok(Some(PhaseResult::TimeLimit(best.or(heuristic)))),
            PhaseResult::Nothing => {}
        }
        if self.out_of_time() {
            return Ok(Some(PhaseResult::TimeLimit(heuristic)));
        }

        // Second phase: solutions above the guess, below the best known.
        let upper = heuristic.as_ref().map_or(f64::INFINITY, |h| h.0);
        let gap2 = upper - z_lb_c;
        let mut set = self.fragments(&bounds, gap2)?;
        let mut same_nodes = true;
        if config.variant.absorption() {
            let ctx = bounds.cost_ctx.as_ref().map(|c| with_gap(c, gap2));
            let absorbed: BTreeSet<NodeH> = set.nodes.difference(&kept_nodes).copied().collect();
            set = absorb_nodes(inst, &set, ctx.as_ref(), config.max_increase_phase2, Some(&absorbed))?.0;
            same_nodes = set.nodes == kept_nodes;
        }
        let branch_gap = (config.variant.fixing() && same_nodes).then_some(gap1);
        let cutoff = upper.is_finite().then_some(upper);
        Ok(match self.network_phase(&bounds, &set, vehicles, cutoff, gap2, branch_gap)? {
            PhaseResult::Solved(cost, routes) => Some(PhaseResult::Solved(cost, routes)),
            PhaseResult::TimeLimit(best) => Some(PhaseResult::TimeLimit(best.or(heuristic))),
            PhaseResult::Nothing => heuristic.map(|(c, r)| PhaseResult::Solved(c, r)),
        })
    }
}

fn with_gap(ctx: &FlContext, gap: f64) -> FlContext {
    let mut c = ctx.clone();
    c.gap = if gap.is_finite() { gap.max(0.0) } else { f64::INFINITY };
    c
}

fn report(status: RunStatus, routes: Vec<Route>, phases: Vec<PhaseStats>) -> RunReport {
    let cost = routes.iter().map(|r| r.cost).sum();
    RunReport {
        status,
        vehicles: routes.len(),
        cost,
        routes: routes.into_iter().map(|r| r.path).collect(),
        phases,
    }
}

/// Minimizes vehicles, then travel cost.
pub fn solve(inst: &Instance, config: &Config) -> Result<RunReport, SolveError> {
    inst.validate()?;
    let mut solver = Solver {
        inst,
        config,
        deadline: config.time_limit.map(|d| Instant::now() + d),
        extra_times: BTreeMap::new(),
        phases: Vec::new(),
    };
    if inst.n == 0 {
        return Ok(report(RunStatus::Optimal, Vec::new(), Vec::new()));
    }
    let mut vehicle_state = MasterState::new(inst, ObjectiveMode::Vehicles);
    solve_master(inst, &mut vehicle_state, &config.cg)?;
    if vehicle_state.is_infeasible() {
        return Ok(report(RunStatus::Infeasible, Vec::new(), Vec::new()));
    }
    let z_lb_v = vehicle_state.z_lb;
    let mut vehicles = config.vehicles.unwrap_or((z_lb_v - 1e-6).ceil().max(0.0) as usize);
    log::info!("vehicle bound {z_lb_v:.4}, starting at {vehicles}");
    while vehicles <= inst.n {
        match solver.solve_target(&vehicle_state, z_lb_v, vehicles)? {
            Some(PhaseResult::Solved(_, routes)) => {
                return Ok(report(RunStatus::Optimal, canonical(inst, routes)?, solver.phases));
            }
            Some(PhaseResult::TimeLimit(best)) => {
                let routes = best.map(|b| b.1).unwrap_or_default();
                return Ok(report(RunStatus::TimeLimit, canonical(inst, routes)?, solver.phases));
            }
            Some(PhaseResult::Nothing) | None => {}
        }
        if solver.out_of_time() {
            return Ok(report(RunStatus::TimeLimit, Vec::new(), solver.phases));
        }
        vehicles += 1;
    }
    Ok(report(RunStatus::Infeasible, Vec::new(), solver.phases))
}

/// Re-simulated routes in a fixed order.
fn canonical(inst: &Instance, routes: Vec<Route>) -> Result<Vec<Route>, SolveError> {
    let mut out = routes
        .into_iter()
        .map(|r| {
            simulate_route(inst, &r.path).map_err(|e| SolveError::Internal(format!("route {:?} is infeasible: {e:?}", r.path)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::small_paper_instance;

    #[test]
    fn small_instance_every_variant() {
        let inst = small_paper_instance();
        for variant in Variant::ALL {
            let config = Config {
                variant,
                ..Config::default()
            };
            let r = solve(&inst, &config).unwrap();
            assert_eq!(r.status, RunStatus::Optimal, "{variant}");
            assert_eq!(r.vehicles, 1, "{variant}");
            assert!((r.cost - 166.74).abs() < 1e-4, "{variant}: {}", r.cost);
            assert_eq!(r.routes, vec![vec![0, 1, 4, 2, 3, 5, 6, 7]]);
        }
    }

    #[test]
    fn zero_vehicle_target_is_raised() {
        let inst = small_paper_instance();
        let config = Config {
            vehicles: Some(0),
            ..Config::default()
        };
        let r = solve(&inst, &config).unwrap();
        assert_eq!(r.vehicles, 1);
        assert!((r.cost - 166.74).abs() < 1e-4);
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.to_string().parse::<Variant>().unwrap(), v);
        }
        assert!("X".parse::<Variant>().is_err());
    }
}
