//! Restricted master problem over routes and the column-generation loop.

use std::collections::HashSet;

use fragsolve_mip::{
    solve_lp, solve_mip, CallbackAction, ColId, LinearProgram, LpStatus, MipModel, MipOptions, MipStatus, Sense,
};

use crate::instance::{Instance, Route};
use crate::labelling::{solve_pricing_forward, ActiveCut, Duals};
use crate::SolveError;

const ARTIFICIAL_COST: f64 = 1e7;
const RC_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveMode {
    Vehicles,
    TravelCost,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetRowCut {
    pub members: [usize; 3],
    pub dual: f64,
}

impl SubsetRowCut {
    /// Coefficient of a route with the given path.
    pub fn coefficient(&self, path: &[usize]) -> u32 {
        let visits = path.iter().filter(|v| self.members.contains(v)).count() as u32;
        visits / 2
    }
}

#[derive(Debug, Clone)]
pub struct MasterColumn {
    pub path: Vec<usize>,
    pub cost: f64,
    /// Visit count per request vertex.
    pub coverage: Vec<(usize, u32)>,
}

impl MasterColumn {
    pub fn new(inst: &Instance, path: Vec<usize>) -> Self {
        let mut counts = vec![0u32; inst.num_vertices()];
        for &v in &path {
            counts[v] += 1;
        }
        let coverage = (1..=2 * inst.n).filter(|&i| counts[i] > 0).map(|i| (i, counts[i])).collect();
        let cost = inst.path_cost(&path);
        Self { path, cost, coverage }
    }

    pub fn is_elementary(&self) -> bool {
        self.coverage.iter().all(|&(_, c)| c == 1)
    }
}

#[derive(Debug, Clone)]
pub struct CgConfig {
    pub max_iterations: usize,
    pub max_columns_per_iteration: usize,
    pub max_cuts: usize,
    /// Emits one JSON line per iteration at debug level.
    pub trace: bool,
}

impl Default for CgConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            max_columns_per_iteration: 100,
            max_cuts: 50,
            trace: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MasterState {
    pub mode: ObjectiveMode,
    pub columns: Vec<MasterColumn>,
    pub vehicle_rhs: Option<f64>,
    pub cuts: Vec<SubsetRowCut>,
    /// Dual per vertex (depots zero).
    pub pi: Vec<f64>,
    pub sigma: f64,
    pub z_lb: f64,
    pub dual_objective: f64,
    /// Column values of the last RMP solve.
    pub lambda: Vec<f64>,
    /// Largest artificial value of the last RMP solve.
    pub artificial_mass: f64,
    pub iterations: usize,
    seen: HashSet<Vec<usize>>,
}

impl MasterState {
    pub fn new(inst: &Instance, mode: ObjectiveMode) -> Self {
        Self {
            mode,
            columns: Vec::new(),
            vehicle_rhs: None,
            cuts: Vec::new(),
            pi: vec![0.0; inst.num_vertices()],
            sigma: 0.0,
            z_lb: 0.0,
            dual_objective: 0.0,
            lambda: Vec::new(),
            artificial_mass: 0.0,
            iterations: 0,
            seen: HashSet::new(),
        }
    }

    pub fn add_column(&mut self, inst: &Instance, path: Vec<usize>) -> bool {
        if !self.seen.insert(path.clone()) {
            return false;
        }
        self.columns.push(MasterColumn::new(inst, path));
        true
    }

    fn column_cost(&self, col: &MasterColumn) -> f64 {
        match self.mode {
            ObjectiveMode::Vehicles => 1.0,
            ObjectiveMode::TravelCost => col.cost,
        }
    }

    pub fn duals(&self) -> Duals {
        Duals {
            pi: self.pi.clone(),
            sigma: self.sigma,
            vehicle_mode: self.mode == ObjectiveMode::Vehicles,
            cuts: self
                .cuts
                .iter()
                .map(|c| ActiveCut {
                    members: c.members,
                    dual: c.dual,
                })
                .collect(),
        }
    }

    /// True when the last solve needed artificial columns.
    pub fn is_infeasible(&self) -> bool {
        self.artificial_mass > 1e-6
    }
}

/// Adds (or replaces) the equality row fixing the number of routes and
/// switches the objective to travel cost.
pub fn set_vehicle_constraint(state: &mut MasterState, z_ub_v: usize) {
    state.vehicle_rhs = Some(z_ub_v as f64);
    state.mode = ObjectiveMode::TravelCost;
}

struct Rmp {
    lp: LinearProgram,
    vehicle_row: Option<usize>,
    first_cut_row: usize,
    first_artificial: usize,
}

fn build_rmp(inst: &Instance, state: &MasterState) -> Rmp {
    let mut lp = LinearProgram::new();
    let requests = 2 * inst.n;
    for _ in 0..requests {
        lp.rows.push(fragsolve_mip::Row {
            sense: Sense::Eq,
            rhs: 1.0,
            name: None,
        });
    }
    let vehicle_row = state.vehicle_rhs.map(|rhs| {
        lp.rows.push(fragsolve_mip::Row {
            sense: Sense::Eq,
            rhs,
            name: None,
        });
        requests
    });
    let first_cut_row = lp.num_rows();
    for _ in &state.cuts {
        lp.rows.push(fragsolve_mip::Row {
            sense: Sense::Le,
            rhs: 1.0,
            name: None,
        });
    }
    for col in &state.columns {
        let mut entries: Vec<(usize, f64)> = col.coverage.iter().map(|&(v, c)| (v - 1, c as f64)).collect();
        if let Some(r) = vehicle_row {
            entries.push((r, 1.0));
        }
        for (k, cut) in state.cuts.iter().enumerate() {
            let a = cut.coefficient(&col.path);
            if a > 0 {
                entries.push((first_cut_row + k, a as f64));
            }
        }
        lp.columns.push(fragsolve_mip::Column {
            cost: state.column_cost(col),
            lower: 0.0,
            upper: f64::INFINITY,
            entries,
            name: None,
        });
    }
    let first_artificial = lp.num_cols();
    for i in 0..requests {
        let c = lp.add_column(ARTIFICIAL_COST, 0.0, f64::INFINITY);
        lp.columns[c.0].entries.push((i, 1.0));
    }
    if let Some(r) = vehicle_row {
        for sign in [1.0, -1.0] {
            let c = lp.add_column(ARTIFICIAL_COST, 0.0, f64::INFINITY);
            lp.columns[c.0].entries.push((r, sign));
        }
    }
    Rmp {
        lp,
        vehicle_row,
        first_cut_row,
        first_artificial,
    }
}

/// Runs column generation to optimality for the current rows.
pub fn solve_master(inst: &Instance, state: &mut MasterState, config: &CgConfig) -> Result<(), SolveError> {
    let start_iter = state.iterations;
    loop {
        if state.iterations - start_iter >= config.max_iterations {
            return Err(SolveError::IterationLimit(config.max_iterations));
        }
        state.iterations += 1;
        let rmp = build_rmp(inst, state);
        let sol = solve_lp(&rmp.lp)?;
        if sol.status != LpStatus::Optimal {
            return Err(SolveError::Internal(format!("restricted master is {:?}", sol.status)));
        }
        state.pi = vec![0.0; inst.num_vertices()];
        for i in 0..2 * inst.n {
            state.pi[i + 1] = sol.dual[i];
        }
        state.sigma = rmp.vehicle_row.map_or(0.0, |r| sol.dual[r]);
        for (k, cut) in state.cuts.iter_mut().enumerate() {
            cut.dual = sol.dual[rmp.first_cut_row + k].min(0.0);
        }
        state.z_lb = sol.objective;
        state.dual_objective = sol.dual_objective;
        state.lambda = sol.primal[..rmp.first_artificial].to_vec();
        state.artificial_mass = sol.primal[rmp.first_artificial..].iter().sum();

        let pool = solve_pricing_forward(inst, &state.duals());
        let routes = pool.negative_routes(inst, RC_TOL);
        let mut added = 0;
        for r in routes {
            if added >= config.max_columns_per_iteration {
                break;
            }
            if state.add_column(inst, r.path) {
                added += 1;
            }
        }
        if config.trace {
            log::debug!(
                target: "cg_trace",
                "{}",
                serde_json::json!({
                    "iteration": state.iterations,
                    "z_lb": state.z_lb,
                    "columns_added": added,
                    "cuts": state.cuts.len(),
                })
            );
        }
        if added == 0 {
            return Ok(());
        }
    }
}

/// Most violated subset-row cuts for the current RMP solution.
pub fn separate_src_cuts(inst: &Instance, state: &MasterState, max_cuts: usize) -> Vec<SubsetRowCut> {
    let support: Vec<(&MasterColumn, f64)> = state
        .columns
        .iter()
        .zip(&state.lambda)
        .filter(|(_, &l)| l > 1e-9)
        .map(|(c, &l)| (c, l))
        .collect();
    let existing: HashSet<[usize; 3]> = state.cuts.iter().map(|c| c.members).collect();
    let mut found: Vec<(f64, SubsetRowCut)> = Vec::new();
    let last = 2 * inst.n;
    for a in 1..=last {
        for b in a + 1..=last {
            for c in b + 1..=last {
                let members = [a, b, c];
                if existing.contains(&members) {
                    continue;
                }
                let cut = SubsetRowCut { members, dual: 0.0 };
                let lhs: f64 = support.iter().map(|(col, l)| cut.coefficient(&col.path) as f64 * l).sum();
                if lhs - 1.0 > 1e-4 {
                    found.push((lhs - 1.0, cut));
                }
            }
        }
    }
    found.sort_by(|x, y| y.0.total_cmp(&x.0).then_with(|| x.1.members.cmp(&y.1.members)));
    found.into_iter().take(max_cuts).map(|(_, c)| c).collect()
}

/// Column generation followed by `rounds` of cut separation, each round
/// re-optimized by column generation.
pub fn solve_with_cuts(inst: &Instance, state: &mut MasterState, rounds: usize, config: &CgConfig) -> Result<(), SolveError> {
    solve_master(inst, state, config)?;
    for _ in 0..rounds {
        let cuts = separate_src_cuts(inst, state, config.max_cuts);
        if cuts.is_empty() {
            break;
        }
        log::info!("adding {} subset-row cuts", cuts.len());
        state.cuts.extend(cuts);
        solve_master(inst, state, config)?;
    }
    Ok(())
}

/// Best integer solution over the generated elementary columns.
pub fn integer_rmp_bound(inst: &Instance, state: &MasterState) -> Result<Option<(f64, Vec<Route>)>, SolveError> {
    let cols: Vec<&MasterColumn> = state.columns.iter().filter(|c| c.is_elementary()).collect();
    if cols.is_empty() {
        return Ok(None);
    }
    let mut lp = LinearProgram::new();
    let ids: Vec<ColId> = cols.iter().map(|c| lp.add_column(c.cost, 0.0, 1.0)).collect();
    for i in 1..=2 * inst.n {
        let entries: Vec<(ColId, f64)> = cols
            .iter()
            .zip(&ids)
            .filter(|(c, _)| c.coverage.iter().any(|&(v, _)| v == i))
            .map(|(_, &id)| (id, 1.0))
            .collect();
        lp.add_row(Sense::Eq, 1.0, &entries);
    }
    if let Some(rhs) = state.vehicle_rhs {
        let entries: Vec<(ColId, f64)> = ids.iter().map(|&id| (id, 1.0)).collect();
        lp.add_row(Sense::Eq, rhs, &entries);
    }
    let options = MipOptions {
        node_limit: 20_000,
        ..MipOptions::default()
    };
    let sol = solve_mip(&MipModel::pure(lp), &options, &mut |_, _| CallbackAction::Continue)?;
    if !sol.has_incumbent() {
        return Ok(None);
    }
    if sol.status != MipStatus::Optimal {
        log::info!("integer master stopped with {:?}", sol.status);
    }
    let routes: Vec<Route> = cols
        .iter()
        .zip(&sol.values)
        .filter(|(_, &v)| v > 0.5)
        .map(|(c, _)| Route {
            path: c.path.clone(),
            cost: c.cost,
        })
        .collect();
    let cost = routes.iter().map(|r| r.cost).sum();
    Ok(Some((cost, routes)))
}
