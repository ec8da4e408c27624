//! Minimum total-cost assignments.
//!
//! No single exact method covers every cost shape, so [`solve`] dispatches:
//! interval stabbing for unit costs, a convex min-cost flow for monomials of
//! degree at least one, and branch-and-bound for concave monomials. The
//! brute-force enumerator is the fallback and the reference in tests.

use std::collections::VecDeque;

use serde::Serialize;
use thiserror::Error;

use crate::model::{Assignment, CostFunction, Instance, LoadProfile, ModelError};
use crate::scalar::Scalar;
use crate::search::{SearchError, SearchSpace};

#[derive(Debug, Error)]
pub enum OptError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error("{method} does not apply to {cost} costs: {reason}")]
    Inapplicable {
        method: &'static str,
        cost: String,
        reason: &'static str,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OptMethod {
    BruteForce,
    UnitGreedy,
    ConvexFlow,
    #[serde(rename = "concave_bnb")]
    ConcaveBnB,
    Heuristic,
}

impl OptMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            OptMethod::BruteForce => "brute_force",
            OptMethod::UnitGreedy => "unit_greedy",
            OptMethod::ConvexFlow => "convex_flow",
            OptMethod::ConcaveBnB => "concave_bnb",
            OptMethod::Heuristic => "heuristic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult<S> {
    pub assignment: Assignment,
    pub cost: S,
    pub method: OptMethod,
    /// `cost` is the global minimum.
    pub exact: bool,
    /// Proven lower bound on the optimum when the search did not finish.
    pub lower_bound: Option<S>,
}

#[derive(Serialize)]
struct OptDoc<'a, S> {
    cost: S,
    method: &'static str,
    exact: bool,
    slots: &'a [usize],
}

impl<S: Scalar> OptResult<S> {
    fn exact(inst: &Instance<S>, slots: Vec<usize>, method: OptMethod) -> Self {
        let loads = LoadProfile::from_slots(inst.horizon(), &slots);
        OptResult {
            cost: inst.cost_of_loads(&loads),
            assignment: Assignment::new(slots),
            method,
            exact: true,
            lower_bound: None,
        }
    }

    /// `{"cost": .., "method": .., "exact": .., "slots": [..]}`
    pub fn to_json(&self) -> String {
        serde_json::to_string(&OptDoc {
            cost: self.cost,
            method: self.method.as_str(),
            exact: self.exact,
            slots: &self.assignment.slots,
        })
        .expect("plain data serializes")
    }
}

fn describe<S: Scalar>(c: &CostFunction<S>) -> String {
    match c.degree() {
        None => "unit".into(),
        Some(d) => format!("monomial(d={d})"),
    }
}

/// Exhaustive minimum over all assignments (identical-window jobs pruned).
pub fn opt_bruteforce<S: Scalar>(
    inst: &Instance<S>,
    budget: u128,
) -> Result<OptResult<S>, OptError> {
    let space = SearchSpace::new(inst, true);
    space.check_budget(budget)?;
    let shards = space.fold(
        || None::<(S, Vec<usize>)>,
        |best, slots, loads| {
            let cost = inst.cost_of_loads(loads);
            if best.as_ref().is_none_or(|(b, _)| cost < *b) {
                *best = Some((cost, slots.to_vec()));
            }
        },
    );
    let mut best: Option<(S, Vec<usize>)> = None;
    for shard in shards.into_iter().flatten() {
        if best.as_ref().is_none_or(|(b, _)| shard.0 < *b) {
            best = Some(shard);
        }
    }
    let (_, slots) = best.expect("search space is never empty");
    Ok(OptResult::exact(inst, slots, OptMethod::BruteForce))
}

/// Unit costs: minimum number of slots stabbing every window. Takes jobs by
/// deadline, opens the last slot of the earliest-deadline unserved job and
/// serves every job whose window contains it.
pub fn opt_unit_greedy<S: Scalar>(inst: &Instance<S>) -> Result<OptResult<S>, OptError> {
    if *inst.cost() != CostFunction::Unit {
        return Err(OptError::Inapplicable {
            method: OptMethod::UnitGreedy.as_str(),
            cost: describe(inst.cost()),
            reason: "interval stabbing minimizes occupied slots only",
        });
    }
    let mut by_deadline: Vec<usize> = (0..inst.n()).collect();
    by_deadline.sort_by_key(|&j| (inst.job(j).deadline, j));
    let mut slots = vec![0usize; inst.n()];
    let mut served = vec![false; inst.n()];
    for &j in &by_deadline {
        if served[j] {
            continue;
        }
        let open = inst.job(j).deadline - 1;
        for &k in &by_deadline {
            if !served[k] && inst.job(k).allows(open) {
                served[k] = true;
                slots[k] = open;
            }
        }
    }
    Ok(OptResult::exact(inst, slots, OptMethod::UnitGreedy))
}

/// Convex monomials (`degree >= 1`): min-cost flow from jobs to slots where
/// the k-th job on a slot costs `c(k) - c(k-1)`. Jobs are inserted one at a
/// time along a cheapest augmenting path. Every job-to-slot arc is free, so
/// the cheapest path ends at the reachable slot with the smallest next
/// marginal; marginals are computed from the current load on demand.
pub fn opt_flow_convex<S: Scalar>(inst: &Instance<S>) -> Result<OptResult<S>, OptError> {
    let c = inst.cost();
    if !c.is_convex_monomial() {
        return Err(OptError::Inapplicable {
            method: OptMethod::ConvexFlow.as_str(),
            cost: describe(c),
            reason: "augmenting paths need nondecreasing marginal costs",
        });
    }
    let horizon = inst.horizon();
    let mut slot_of: Vec<usize> = vec![0; inst.n()];
    let mut on_slot: Vec<Vec<usize>> = vec![Vec::new(); horizon + 1];
    // via[t]: job whose move into t reached it during the current search
    let mut via: Vec<usize> = vec![usize::MAX; horizon + 1];
    let mut visited: Vec<bool> = vec![false; horizon + 1];
    let mut queue = VecDeque::new();

    for root in 0..inst.n() {
        visited.iter_mut().for_each(|v| *v = false);
        queue.clear();
        for t in inst.job(root).window() {
            visited[t] = true;
            via[t] = root;
            queue.push_back(t);
        }
        let mut best: Option<(S, usize)> = None;
        while let Some(t) = queue.pop_front() {
            let marginal = c.marginal(on_slot[t].len());
            if best.is_none_or(|(m, b)| marginal < m || (marginal == m && t < b)) {
                best = Some((marginal, t));
            }
            for &k in &on_slot[t] {
                for u in inst.job(k).window() {
                    if !visited[u] {
                        visited[u] = true;
                        via[u] = k;
                        queue.push_back(u);
                    }
                }
            }
        }
        let (_, mut t) = best.expect("window is nonempty");
        loop {
            let k = via[t];
            if k == root {
                slot_of[k] = t;
                on_slot[t].push(k);
                break;
            }
            let prev = slot_of[k];
            on_slot[prev].retain(|&x| x != k);
            slot_of[k] = t;
            on_slot[t].push(k);
            t = prev;
        }
    }
    Ok(OptResult::exact(inst, slot_of, OptMethod::ConvexFlow))
}

/// Concave heuristic: repeatedly open the slot covering the most unserved
/// jobs and put all of them there.
pub fn opt_greedy_consolidate<S: Scalar>(inst: &Instance<S>) -> OptResult<S> {
    let mut slots = vec![0usize; inst.n()];
    let mut left: Vec<usize> = (0..inst.n()).collect();
    while !left.is_empty() {
        let open = (1..=inst.horizon())
            .max_by_key(|&t| {
                let covered = left.iter().filter(|&&j| inst.job(j).allows(t)).count();
                (covered, std::cmp::Reverse(t))
            })
            .expect("horizon >= 1");
        left.retain(|&j| {
            if inst.job(j).allows(open) {
                slots[j] = open;
                false
            } else {
                true
            }
        });
    }
    let mut r = OptResult::exact(inst, slots, OptMethod::Heuristic);
    r.exact = false;
    r
}

struct Bnb<'a, S> {
    inst: &'a Instance<S>,
    order: Vec<usize>,
    tied: Vec<bool>,
    slots: Vec<usize>,
    loads: LoadProfile,
    best_cost: S,
    best: Vec<usize>,
    nodes: u128,
    node_budget: u128,
    aborted: bool,
}

impl<S: Scalar> Bnb<'_, S> {
    fn run(&mut self, pos: usize, partial: S) {
        if self.aborted {
            return;
        }
        self.nodes += 1;
        if self.nodes > self.node_budget {
            self.aborted = true;
            return;
        }
        if pos == self.order.len() {
            if partial < self.best_cost {
                self.best_cost = partial;
                self.best = self.slots.clone();
            }
            return;
        }
        // For concave c, spreading r more jobs over slots loaded at most m
        // costs at least c(m + r) - c(m).
        let c = *self.inst.cost();
        let m = self.loads.max_load();
        let remaining = self.order.len() - pos;
        // ties within rounding are not improvements
        let slack = S::epsilon() * S::lit(64.0) * self.best_cost.abs().max(S::one());
        if partial + c.eval(m + remaining) - c.eval(m) >= self.best_cost - slack {
            return;
        }
        let j = self.order[pos];
        let job = self.inst.job(j);
        let lo = if self.tied[pos] {
            self.slots[self.order[pos - 1]]
        } else {
            job.release
        };
        let mut candidates: Vec<usize> = (lo..job.deadline).collect();
        // consolidate first: heaviest slots, then lower index
        candidates.sort_by_key(|&t| (std::cmp::Reverse(self.loads.load(t)), t));
        for t in candidates {
            let step = c.marginal(self.loads.load(t));
            self.slots[j] = t;
            self.loads.add(t);
            self.run(pos + 1, partial + step);
            self.loads.remove(t);
        }
    }
}

/// Concave monomials (`degree < 1`): depth-first branch-and-bound over job
/// placements, most constrained jobs first, joining already-open slots
/// before opening new ones. Seeded with [`opt_greedy_consolidate`]. If the
/// node budget runs out the best assignment found is returned with
/// `exact = false` and the bound `c(n)`.
pub fn opt_concave_search<S: Scalar>(
    inst: &Instance<S>,
    node_budget: u128,
) -> Result<OptResult<S>, OptError> {
    let c = inst.cost();
    if !c.is_concave_monomial() {
        return Err(OptError::Inapplicable {
            method: OptMethod::ConcaveBnB.as_str(),
            cost: describe(c),
            reason: "the pruning bound relies on concavity",
        });
    }
    let seed = opt_greedy_consolidate(inst);
    let mut order: Vec<usize> = (0..inst.n()).collect();
    order.sort_by_key(|&j| {
        let job = inst.job(j);
        (job.width(), job.release, job.deadline, j)
    });
    let tied = order
        .iter()
        .enumerate()
        .map(|(i, &j)| i > 0 && inst.job(order[i - 1]) == inst.job(j))
        .collect();
    let mut bnb = Bnb {
        inst,
        order,
        tied,
        slots: vec![0; inst.n()],
        loads: LoadProfile::empty(inst.horizon()),
        best_cost: seed.cost,
        best: seed.assignment.slots.clone(),
        nodes: 0,
        node_budget,
        aborted: false,
    };
    bnb.run(0, S::zero());
    let mut r = OptResult::exact(inst, bnb.best, OptMethod::ConcaveBnB);
    if bnb.aborted {
        r.exact = false;
        r.lower_bound = Some(c.eval(inst.n()));
    }
    Ok(r)
}

/// Best exact method for the instance's cost shape, falling back to brute
/// force when branch-and-bound runs out of nodes.
pub fn solve<S: Scalar>(inst: &Instance<S>, budget: u128) -> Result<OptResult<S>, OptError> {
    let c = inst.cost();
    if *c == CostFunction::Unit {
        return opt_unit_greedy(inst);
    }
    if c.is_convex_monomial() {
        return opt_flow_convex(inst);
    }
    let r = opt_concave_search(inst, budget)?;
    if r.exact {
        return Ok(r);
    }
    match opt_bruteforce(inst, budget) {
        Ok(exact) => Ok(exact),
        Err(OptError::Search(_)) => Ok(r),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Job;

    fn inst(cost: CostFunction<f64>, jobs: &[(usize, usize)], horizon: usize) -> Instance<f64> {
        Instance::new(
            cost,
            horizon,
            jobs.iter().map(|&(r, d)| Job::new(r, d)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn unit_greedy_examples() {
        let two = inst(CostFunction::Unit, &[(1, 3), (2, 4)], 3);
        let r = opt_unit_greedy(&two).unwrap();
        assert_eq!((r.cost, r.assignment.slots), (1.0, vec![2, 2]));

        let disjoint = inst(CostFunction::Unit, &[(1, 2), (2, 4), (4, 5)], 4);
        assert_eq!(opt_unit_greedy(&disjoint).unwrap().cost, 3.0);

        // brute force over 2*2*2 profiles: two slots suffice, one does not
        let chain = inst(CostFunction::Unit, &[(1, 3), (2, 4), (3, 5)], 4);
        let r = opt_unit_greedy(&chain).unwrap();
        assert_eq!(r.cost, 2.0);
        assert_eq!(r.assignment.slots, vec![2, 2, 4]);
        assert_eq!(opt_bruteforce(&chain, 100).unwrap().cost, 2.0);
    }

    #[test]
    fn unit_greedy_refuses_monomial() {
        let i = inst(CostFunction::monomial(2.0).unwrap(), &[(1, 2)], 1);
        assert!(matches!(
            opt_unit_greedy(&i),
            Err(OptError::Inapplicable { .. })
        ));
    }

    #[test]
    fn flow_spreads_when_room() {
        let i = inst(CostFunction::monomial(2.0).unwrap(), &[(1, 6); 4], 5);
        let r = opt_flow_convex(&i).unwrap();
        assert_eq!(r.cost, 4.0);
        assert!(r.exact);
    }

    #[test]
    fn flow_reroutes_through_occupied_slots() {
        // job 0 takes slot 1 first; job 1 only fits slot 1, so inserting it
        // pushes job 0 over to slot 2
        let i = inst(
            CostFunction::monomial(2.0).unwrap(),
            &[(1, 3), (1, 2), (1, 4)],
            3,
        );
        let r = opt_flow_convex(&i).unwrap();
        assert_eq!(r.assignment.slots, vec![2, 1, 3]);
        assert_eq!(r.cost, 3.0);
        assert_eq!(r.cost, opt_bruteforce(&i, 100).unwrap().cost);
    }

    #[test]
    fn flow_refuses_concave() {
        let i = inst(CostFunction::monomial(0.5).unwrap(), &[(1, 2)], 1);
        assert!(matches!(
            opt_flow_convex(&i),
            Err(OptError::Inapplicable { .. })
        ));
        assert!(opt_flow_convex(&inst(CostFunction::Unit, &[(1, 2)], 1)).is_err());
    }

    #[test]
    fn concave_consolidates() {
        let i = inst(
            CostFunction::monomial(0.5).unwrap(),
            &[(1, 3), (2, 4), (1, 4), (2, 3)],
            3,
        );
        let r = opt_concave_search(&i, 1_000_000).unwrap();
        assert!(r.exact);
        assert_eq!(r.cost, 2.0);
        assert_eq!(r.assignment.slots, vec![2, 2, 2, 2]);
    }

    #[test]
    fn concave_budget_exhaustion_reports_bound() {
        let i = inst(
            CostFunction::monomial(0.5).unwrap(),
            &[(1, 3), (2, 4), (3, 5)],
            4,
        );
        let r = opt_concave_search(&i, 1).unwrap();
        assert!(!r.exact);
        assert_eq!(r.lower_bound, Some(3f64.sqrt()));
        // still a valid assignment with its true cost
        assert_eq!(r.cost, crate::model::total_cost(&i, &r.assignment).unwrap());
    }

    #[test]
    fn single_job() {
        for c in [
            CostFunction::Unit,
            CostFunction::monomial(0.5).unwrap(),
            CostFunction::monomial(2.0).unwrap(),
        ] {
            let i = inst(c, &[(2, 4)], 4);
            assert_eq!(opt_bruteforce(&i, 10).unwrap().cost, 1.0);
            assert_eq!(solve(&i, 10).unwrap().cost, 1.0);
        }
    }

    #[test]
    fn export_document() {
        let i = inst(CostFunction::Unit, &[(1, 3), (2, 4)], 3);
        let doc = opt_unit_greedy(&i).unwrap().to_json();
        assert_eq!(
            doc,
            r#"{"cost":1.0,"method":"unit_greedy","exact":true,"slots":[2,2]}"#
        );
    }
}
