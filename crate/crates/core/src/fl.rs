//! Reduced-cost bounds for fragments and resourced fragments, and fixing of
//! those whose bound exceeds the optimality gap.

use crate::fragments::{Fragment, FragmentSet};
use crate::instance::Instance;
use crate::labelling::{
    solve_pricing_backward, solve_pricing_forward, BackwardPool, CutState, Duals, ForwardPool, Label,
};
use crate::ren::Network;

/// Slack applied before a bound counts as exceeding the gap.
pub const FIX_TOL: f64 = 1e-6;

/// Duals with the full label frontiers computed from them.
#[derive(Debug, Clone)]
pub struct FlContext {
    pub duals: Duals,
    pub forward: ForwardPool,
    pub backward: BackwardPool,
    pub z_lb: f64,
    /// Upper bound minus `z_lb`; infinite when no upper bound is known.
    pub gap: f64,
}

impl FlContext {
    pub fn new(inst: &Instance, duals: Duals, z_lb: f64, z_ub: f64) -> Self {
        let forward = solve_pricing_forward(inst, &duals);
        let backward = solve_pricing_backward(inst, &duals);
        let gap = if z_ub.is_finite() { (z_ub - z_lb).max(0.0) } else { f64::INFINITY };
        Self {
            duals,
            forward,
            backward,
            z_lb,
            gap,
        }
    }

    pub fn keeps(&self, rho: f64) -> bool {
        keep(rho, self.gap)
    }
}

/// Retained iff `rho` does not exceed `gap` (beyond tolerance).
pub fn keep(rho: f64, gap: f64) -> bool {
    gap.is_infinite() || rho <= gap + FIX_TOL
}

pub fn fix_variables(rhos: &[f64], gap: f64) -> Vec<bool> {
    rhos.iter().map(|&r| keep(r, gap)).collect()
}

/// Reduced cost of the fragment's own edges.
pub fn fragment_reduced_cost(inst: &Instance, duals: &Duals, f: &Fragment) -> f64 {
    f.path.windows(2).map(|w| duals.edge(inst, w[0], w[1])).sum()
}

/// Cut dual mass due when joining a prefix and suffix around `f`.
fn join_penalty(duals: &Duals, f: &Fragment, fwd: &CutState, bwd: &CutState) -> f64 {
    let mut pen = 0.0;
    for (k, cut) in duals.cuts.iter().enumerate() {
        let inner = f.interior().iter().filter(|v| cut.members.contains(v)).count();
        let visits = usize::from(fwd.get(k)) + inner + usize::from(bwd.get(k));
        pen += (visits / 2) as f64 * -cut.dual;
    }
    pen
}

/// Smallest reduced cost of a route that traverses `f` starting from a
/// forward label accepted by `admit`.
fn bound(inst: &Instance, ctx: &FlContext, f: &Fragment, admit: impl Fn(&Label) -> bool) -> f64 {
    let own = fragment_reduced_cost(inst, &ctx.duals, f);
    let fwd = ctx.forward.bucket(f.first(), f.start_onboard);
    let bwd = ctx.backward.bucket(f.last(), f.end_onboard);
    let mut best = f64::INFINITY;
    for &p in fwd {
        let lp = &ctx.forward.labels[p];
        if lp.time > f.latest_start + 1e-9 {
            break;
        }
        if !admit(lp) {
            continue;
        }
        let need = f.end_time(lp.time);
        for &b in bwd {
            let lb = &ctx.backward.labels[b];
            if lb.latest < need - 1e-9 {
                break;
            }
            let rc = lp.rcost + own + lb.rcost + join_penalty(&ctx.duals, f, &lp.cuts, &lb.cuts);
            best = best.min(rc);
        }
    }
    best
}

/// Lower bound on the reduced cost of any route containing `f`.
pub fn rho_prime(inst: &Instance, ctx: &FlContext, f: &Fragment) -> f64 {
    bound(inst, ctx, f, |_| true)
}

/// Lower bound on the reduced cost of any route whose canonical
/// representation uses resourced fragment `arc`.
pub fn rho_double_prime(inst: &Instance, ctx: &FlContext, net: &Network, arc: usize) -> f64 {
    let a = &net.arcs[arc];
    let upper = net.next_copy(a.departure).map_or(f64::INFINITY, |c| net.rnodes[c].time);
    bound(inst, ctx, &net.fragments[a.fragment], |l| l.time < upper - 1e-9)
}

/// Fragments whose bound does not exceed the gap.
pub fn retain_fragments(inst: &Instance, ctx: &FlContext, set: &FragmentSet) -> FragmentSet {
    let kept = set
        .fragments
        .iter()
        .filter(|f| ctx.keeps(rho_prime(inst, ctx, f)))
        .cloned()
        .collect();
    FragmentSet::new(kept)
}
