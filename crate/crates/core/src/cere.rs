//! Node absorption: replace every fragment entering and leaving a node by
//! their concatenations, when that does not grow the fragment set too much.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::fl::{rho_prime, FlContext};
use crate::fragments::{Fragment, FragmentSet, NodeH};
use crate::instance::Instance;
use crate::SolveError;

#[derive(Debug, Clone, Serialize)]
pub struct AbsorptionPlan {
    pub node: String,
    pub entering: usize,
    pub leaving: usize,
    pub joined: usize,
    pub delta: i64,
    pub absorbed: bool,
}

/// `f1` followed by `f2`; `Ok(None)` when the result is infeasible.
pub fn join_fragments(inst: &Instance, f1: &Fragment, f2: &Fragment) -> Result<Option<Fragment>, SolveError> {
    if f1.end_node() != f2.start_node() {
        return Err(SolveError::InvalidInput(format!(
            "{:?} ends at {} but {:?} starts at {}",
            f1.path,
            f1.end_node(),
            f2.path,
            f2.start_node()
        )));
    }
    let mut path = f1.path.clone();
    path.extend_from_slice(&f2.path[1..]);
    let mut seen = BTreeSet::new();
    if !path.iter().all(|v| seen.insert(*v)) {
        return Ok(None);
    }
    Ok(Fragment::from_path(inst, &path, f1.start_onboard))
}

/// Absorbs nodes until none qualifies. `max_increase` bounds the growth
/// `joined - entering - leaving` (strictly); `i64::MIN` disables absorption
/// and `i64::MAX` absorbs everything. With `restrict_to`, only those nodes
/// are attempted.
pub fn absorb_nodes(
    inst: &Instance,
    set: &FragmentSet,
    fl: Option<&FlContext>,
    max_increase: i64,
    restrict_to: Option<&BTreeSet<NodeH>>,
) -> Result<(FragmentSet, Vec<AbsorptionPlan>), SolveError> {
    let start = NodeH::new(0, &[]);
    let end = NodeH::new(inst.end_depot(), &[]);
    let mut fragments = set.fragments.clone();
    let mut plans = Vec::new();
    if max_increase == i64::MIN {
        return Ok((FragmentSet::new(fragments), plans));
    }
    loop {
        let current = FragmentSet::new(std::mem::take(&mut fragments));
        fragments = current.fragments;
        let mut order: Vec<(usize, NodeH)> = current
            .nodes
            .iter()
            .filter(|n| **n != start && **n != end)
            .filter(|n| restrict_to.is_none_or(|r| r.contains(n)))
            .map(|n| {
                let entering = fragments.iter().filter(|f| f.end_node() == *n).count();
                let leaving = fragments.iter().filter(|f| f.start_node() == *n).count();
                (entering * leaving, *n)
            })
            .collect();
        order.sort();
        let mut absorbed_any = false;
        for (_, node) in order {
            let (touching, rest): (Vec<Fragment>, Vec<Fragment>) =
                fragments.drain(..).partition(|f| f.end_node() == node || f.start_node() == node);
            fragments = rest;
            if touching.is_empty() {
                continue;
            }
            let entering: Vec<&Fragment> = touching.iter().filter(|f| f.end_node() == node).collect();
            let leaving: Vec<&Fragment> = touching.iter().filter(|f| f.start_node() == node).collect();
            let mut joined = Vec::new();
            for f1 in &entering {
                for f2 in &leaving {
                    if let Some(f) = join_fragments(inst, f1, f2)? {
                        if fl.is_none_or(|ctx| ctx.keeps(rho_prime(inst, ctx, &f))) {
                            joined.push(f);
                        }
                    }
                }
            }
            let delta = joined.len() as i64 - entering.len() as i64 - leaving.len() as i64;
            let absorbed = delta < max_increase;
            plans.push(AbsorptionPlan {
                node: node.to_string(),
                entering: entering.len(),
                leaving: leaving.len(),
                joined: joined.len(),
                delta,
                absorbed,
            });
            if absorbed {
                fragments.extend(joined);
                absorbed_any = true;
            } else {
                fragments.extend(touching);
            }
        }
        if !absorbed_any {
            return Ok((FragmentSet::new(fragments), plans));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fragments::{enumerate_fragments, DEFAULT_ENUMERATION_CAP};
    use crate::instance::{small_paper_instance, DeliverySet};

    #[test]
    fn joins_the_unique_pair() {
        let inst = small_paper_instance();
        let f1 = Fragment::from_path(&inst, &[1, 2, 4, 3], DeliverySet::from_vertices(&[4])).unwrap();
        let f2 = Fragment::from_path(&inst, &[3, 5, 6, 7], DeliverySet::from_vertices(&[5, 6])).unwrap();
        let j = join_fragments(&inst, &f1, &f2).unwrap().unwrap();
        assert_eq!(j.path, vec![1, 2, 4, 3, 5, 6, 7]);
        assert_eq!(j.start_onboard, DeliverySet::from_vertices(&[4]));
        assert!(join_fragments(&inst, &f2, &f1).is_err());
    }

    #[test]
    fn absorbs_the_single_pair_node() {
        let inst = small_paper_instance();
        let set = enumerate_fragments(&inst, DEFAULT_ENUMERATION_CAP).unwrap();
        let node = NodeH::new(3, &[5, 6]);
        let only = BTreeSet::from([node]);
        let (out, plans) = absorb_nodes(&inst, &set, None, 0, Some(&only)).unwrap();
        assert_eq!(plans[0].delta, -1);
        assert!(plans[0].absorbed);
        assert_eq!(out.len(), 12);
        assert!(!out.nodes.contains(&node));

        let (same, plans) = absorb_nodes(&inst, &set, None, i64::MIN, None).unwrap();
        assert!(plans.is_empty());
        assert_eq!(same.len(), set.len());
    }

    #[test]
    fn unlimited_growth_enumerates_routes() {
        let inst = small_paper_instance();
        let set = enumerate_fragments(&inst, DEFAULT_ENUMERATION_CAP).unwrap();
        let (out, _) = absorb_nodes(&inst, &set, None, i64::MAX, None).unwrap();
        assert_eq!(out.nodes.len(), 2);
        assert!(out.fragments.iter().all(|f| f.first() == 0 && f.last() == inst.end_depot()));
    }
}
