#![allow(dead_code)]

use costshare::{Assignment, CostFunction, Instance, Job};
use proptest::prelude::*;

pub const EPS: f64 = 1e-9;

pub fn cost_strategy() -> impl Strategy<Value = CostFunction> {
    prop_oneof![
        Just(CostFunction::Unit),
        prop::sample::select(vec![0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0])
            .prop_map(|d| CostFunction::monomial(d).unwrap()),
    ]
}

pub fn concave_strategy() -> impl Strategy<Value = CostFunction> {
    prop::sample::select(vec![0.25, 0.5, 0.75]).prop_map(|d| CostFunction::monomial(d).unwrap())
}

/// Windows inside `1..=horizon`.
pub fn jobs_strategy(horizon: usize, max_n: usize) -> impl Strategy<Value = Vec<Job>> {
    prop::collection::vec((1..=horizon, 1..=horizon), 1..=max_n).prop_map(move |pairs| {
        pairs
            .into_iter()
            .map(|(a, b)| Job::new(a.min(b), a.max(b) + 1))
            .collect()
    })
}

pub fn instance_with(
    cost: impl Strategy<Value = CostFunction>,
    max_n: usize,
    max_t: usize,
) -> impl Strategy<Value = Instance> {
    (cost, 1..=max_t).prop_flat_map(move |(c, t)| {
        jobs_strategy(t, max_n).prop_map(move |jobs| Instance::new(c, t, jobs).unwrap())
    })
}

pub fn instance(max_n: usize, max_t: usize) -> impl Strategy<Value = Instance> {
    instance_with(cost_strategy(), max_n, max_t)
}

/// An instance together with one assignment inside the windows.
pub fn instance_and_assignment(
    max_n: usize,
    max_t: usize,
) -> impl Strategy<Value = (Instance, Assignment)> {
    instance(max_n, max_t).prop_flat_map(|inst| {
        let slots: Vec<_> = inst.jobs().iter().map(|j| j.window()).collect();
        (Just(inst), slots).prop_map(|(inst, s)| (inst, Assignment::new(s)))
    })
}

/// Every assignment of a small instance, jobs in input order.
pub fn all_assignments(inst: &Instance) -> Vec<Assignment> {
    let mut out = vec![Vec::new()];
    for job in inst.jobs() {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<usize>| {
                job.window().map(move |t| {
                    let mut p = prefix.clone();
                    p.push(t);
                    p
                })
            })
            .collect();
    }
    out.into_iter().map(Assignment::new).collect()
}

/// Loads recomputed the slow way.
pub fn naive_loads(inst: &Instance, a: &Assignment) -> Vec<usize> {
    (0..=inst.horizon())
        .map(|t| a.slots.iter().filter(|&&s| s == t).count())
        .collect()
}
