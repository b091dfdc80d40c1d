//! Best-first branch-and-bound on LP relaxations.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::path::PathBuf;
use std::time::Instant;

use crate::model::LinearProgram;
use crate::simplex::{solve_with_bounds, Basis, LpStatus};
use crate::MipError;

const INT_TOL: f64 = 1e-6;
const CUTOFF_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct MipModel {
    pub lp: LinearProgram,
    pub integral: Vec<bool>,
}

impl MipModel {
    /// Every column integral.
    pub fn pure(lp: LinearProgram) -> Self {
        let integral = vec![true; lp.num_cols()];
        Self { lp, integral }
    }

    pub fn new(lp: LinearProgram, integral: Vec<bool>) -> Self {
        Self { lp, integral }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MipStatus {
    Optimal,
    /// No integer point exists (no cutoff was given).
    Infeasible,
    /// No integer point with objective at most the cutoff.
    NoSolutionUnderCutoff,
    NodeLimit,
    TimeLimit,
    /// Stopped by the incumbent callback.
    Aborted,
}

#[derive(Debug, Clone)]
pub struct MipOptions {
    pub cutoff: Option<f64>,
    pub node_limit: usize,
    pub deadline: Option<Instant>,
    /// Accepted for interface parity; the search is single-threaded.
    pub threads: usize,
    /// Writes the root model in LP text format when set.
    pub dump_lp: Option<PathBuf>,
}

impl Default for MipOptions {
    fn default() -> Self {
        Self {
            cutoff: None,
            node_limit: usize::MAX,
            deadline: None,
            threads: 1,
            dump_lp: None,
        }
    }
}

impl MipOptions {
    pub fn with_cutoff(cutoff: f64) -> Self {
        Self {
            cutoff: Some(cutoff),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CallbackAction {
    Continue,
    Abort,
}

#[derive(Debug, Clone)]
pub struct MipSolution {
    pub status: MipStatus,
    /// Incumbent column values, empty when none was found.
    pub values: Vec<f64>,
    pub objective: f64,
    pub nodes: usize,
    /// Smallest bound over unexplored nodes and the incumbent.
    pub best_bound: f64,
    /// `objective - best_bound`, zero when proven optimal.
    pub gap: f64,
}

impl MipSolution {
    pub fn has_incumbent(&self) -> bool {
        !self.values.is_empty()
    }
}

struct Node {
    bound: f64,
    seq: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    basis: Option<Basis>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // BinaryHeap is a max-heap: smaller bound, then older node, pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Minimizes `model`, calling `on_incumbent(values, objective)` on every
/// improving integer solution.
pub fn solve_mip(
    model: &MipModel,
    options: &MipOptions,
    on_incumbent: &mut dyn FnMut(&[f64], f64) -> CallbackAction,
) -> Result<MipSolution, MipError> {
    let lp = &model.lp;
    lp.validate()?;
    if model.integral.len() != lp.num_cols() {
        return Err(MipError::Malformed(format!(
            "{} integrality flags for {} columns",
            model.integral.len(),
            lp.num_cols()
        )));
    }
    if let Some(path) = &options.dump_lp {
        if let Err(e) = std::fs::write(path, lp.to_lp_string(Some(&model.integral))) {
            log::warn!("could not dump model to {}: {e}", path.display());
        }
    }
    let cutoff = options.cutoff.unwrap_or(f64::INFINITY);
    let mut lower: Vec<f64> = lp.columns.iter().map(|c| c.lower).collect();
    let mut upper: Vec<f64> = lp.columns.iter().map(|c| c.upper).collect();
    for (j, &int) in model.integral.iter().enumerate() {
        if int {
            lower[j] = (lower[j] - INT_TOL).ceil();
            upper[j] = (upper[j] + INT_TOL).floor();
        }
    }

    let mut heap = BinaryHeap::new();
    let mut seq = 0;
    heap.push(Node {
        bound: f64::NEG_INFINITY,
        seq,
        lower,
        upper,
        basis: None,
    });
    let mut incumbent: Vec<f64> = Vec::new();
    let mut best = f64::INFINITY;
    let mut nodes = 0;

    let finish = |status: MipStatus, heap: &BinaryHeap<Node>, incumbent: Vec<f64>, best: f64, nodes: usize| {
        let open = heap.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
        let best_bound = open.min(best);
        let gap = if best.is_finite() { (best - best_bound).max(0.0) } else { f64::INFINITY };
        MipSolution {
            status,
            values: incumbent,
            objective: best,
            nodes,
            best_bound,
            gap,
        }
    };

    while let Some(node) = heap.pop() {
        if node.bound >= best - 1e-9 || node.bound > cutoff + CUTOFF_TOL {
            continue;
        }
        if nodes >= options.node_limit {
            heap.push(node);
            return Ok(finish(MipStatus::NodeLimit, &heap, incumbent, best, nodes));
        }
        if options.deadline.is_some_and(|d| Instant::now() >= d) {
            heap.push(node);
            return Ok(finish(MipStatus::TimeLimit, &heap, incumbent, best, nodes));
        }
        nodes += 1;
        let sol = solve_with_bounds(lp, &node.lower, &node.upper, node.basis.as_ref())?;
        match sol.status {
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => return Err(MipError::Unbounded),
            LpStatus::Optimal => {}
        }
        let obj = sol.objective;
        if obj >= best - 1e-9 || obj > cutoff + CUTOFF_TOL {
            continue;
        }
        let mut branch: Option<(usize, f64)> = None;
        for (j, &int) in model.integral.iter().enumerate() {
            if !int {
                continue;
            }
            let v = sol.primal[j];
            let frac = (v - v.round()).abs();
            if frac > INT_TOL && branch.is_none_or(|(_, f)| frac > f + 1e-12) {
                branch = Some((j, frac));
            }
        }
        match branch {
            None => {
                let mut values = sol.primal.clone();
                for (j, &int) in model.integral.iter().enumerate() {
                    if int {
                        values[j] = values[j].round();
                    }
                }
                let value = lp.objective_value(&values);
                if value < best - 1e-9 && value <= cutoff + CUTOFF_TOL {
                    best = value;
                    incumbent = values;
                    log::trace!("incumbent {best} after {nodes} nodes");
                    if on_incumbent(&incumbent, best) == CallbackAction::Abort {
                        return Ok(finish(MipStatus::Aborted, &heap, incumbent, best, nodes));
                    }
                }
            }
            Some((j, _)) => {
                let v = sol.primal[j];
                let mut down_upper = node.upper.clone();
                down_upper[j] = v.floor();
                let mut up_lower = node.lower.clone();
                up_lower[j] = v.ceil();
                seq += 1;
                heap.push(Node {
                    bound: obj,
                    seq,
                    lower: node.lower,
                    upper: down_upper,
                    basis: sol.basis.clone(),
                });
                seq += 1;
                heap.push(Node {
                    bound: obj,
                    seq,
                    lower: up_lower,
                    upper: node.upper,
                    basis: sol.basis,
                });
            }
        }
    }
    let status = if best.is_finite() {
        MipStatus::Optimal
    } else if options.cutoff.is_some() {
        MipStatus::NoSolutionUnderCutoff
    } else {
        MipStatus::Infeasible
    };
    Ok(finish(status, &heap, incumbent, best, nodes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Sense;

    fn no_callback() -> impl FnMut(&[f64], f64) -> CallbackAction {
        |_, _| CallbackAction::Continue
    }

    #[test]
    fn rounding_up_binary_cover() {
        let mut lp = LinearProgram::new();
        let a = lp.add_column(1.0, 0.0, 1.0);
        let b = lp.add_column(1.0, 0.0, 1.0);
        lp.add_row(Sense::Ge, 1.5, &[(a, 1.0), (b, 1.0)]);
        let sol = solve_mip(&MipModel::pure(lp), &MipOptions::default(), &mut no_callback()).unwrap();
        assert_eq!(sol.status, MipStatus::Optimal);
        assert!((sol.objective - 2.0).abs() < 1e-9);
    }

    #[test]
    fn integral_root_takes_one_node() {
        let mut lp = LinearProgram::new();
        let a = lp.add_column(1.0, 0.0, 1.0);
        let b = lp.add_column(2.0, 0.0, 1.0);
        lp.add_row(Sense::Ge, 1.0, &[(a, 1.0), (b, 1.0)]);
        let sol = solve_mip(&MipModel::pure(lp), &MipOptions::default(), &mut no_callback()).unwrap();
        assert_eq!(sol.nodes, 1);
        assert_eq!(sol.values, vec![1.0, 0.0]);
    }

    #[test]
    fn cutoff_below_bound() {
        let mut lp = LinearProgram::new();
        let a = lp.add_column(1.0, 0.0, 1.0);
        let b = lp.add_column(1.0, 0.0, 1.0);
        lp.add_row(Sense::Ge, 1.5, &[(a, 1.0), (b, 1.0)]);
        let sol = solve_mip(&MipModel::pure(lp), &MipOptions::with_cutoff(1.0), &mut no_callback()).unwrap();
        assert_eq!(sol.status, MipStatus::NoSolutionUnderCutoff);
        assert!(!sol.has_incumbent());
    }

    #[test]
    fn callback_can_abort() {
        let mut lp = LinearProgram::new();
        let a = lp.add_column(1.0, 0.0, 1.0);
        lp.add_row(Sense::Ge, 1.0, &[(a, 1.0)]);
        let mut seen = 0;
        let mut cb = |_: &[f64], _: f64| {
            seen += 1;
            CallbackAction::Abort
        };
        let sol = solve_mip(&MipModel::pure(lp), &MipOptions::default(), &mut cb).unwrap();
        assert_eq!(sol.status, MipStatus::Aborted);
        assert_eq!(seen, 1);
    }

    #[test]
    fn mixed_columns_keep_continuous_values() {
        // min -x - y, x + y <= 2.5, x integer in [0, 10], y in [0, 0.7]
        let mut lp = LinearProgram::new();
        let x = lp.add_column(-1.0, 0.0, 10.0);
        let y = lp.add_column(-1.0, 0.0, 0.7);
        lp.add_row(Sense::Le, 2.5, &[(x, 1.0), (y, 1.0)]);
        let model = MipModel::new(lp, vec![true, false]);
        let sol = solve_mip(&model, &MipOptions::default(), &mut no_callback()).unwrap();
        assert!((sol.objective + 2.5).abs() < 1e-9, "{}", sol.objective);
        assert!((sol.values[0] - sol.values[0].round()).abs() < 1e-9);
    }
}
