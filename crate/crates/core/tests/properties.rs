mod common;

use common::*;
use costshare::equilibrium::{
    best_response, enumerate_nash, is_nash, rosenthal_potential, run_brd, worst_nash, BrdOrder,
};
use costshare::mechanism::{is_mechanism_nash, support_payments, worst_supportable, MechProfile};
use costshare::model::{load_profile, total_cost};
use costshare::optimal::{opt_bruteforce, solve};
use costshare::{Assignment, CostFunction, Instance, Instance32, Job};
use proptest::prelude::*;

/// Equilibrium test written directly from the definition.
fn nash_from_scratch(inst: &Instance, a: &Assignment) -> bool {
    let loads = naive_loads(inst, a);
    let c = |l: usize| inst.cost().eval(l);
    (0..inst.n()).all(|j| {
        let s = a.slot(j);
        let now = c(loads[s]) / loads[s] as f64;
        inst.job(j)
            .window()
            .filter(|&t| t != s)
            .all(|t| now <= c(loads[t] + 1) / (loads[t] + 1) as f64 + EPS)
    })
}

fn cost_from_scratch(inst: &Instance, a: &Assignment) -> f64 {
    naive_loads(inst, a)
        .iter()
        .map(|&l| inst.cost().eval(l))
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn loads_are_conserved((inst, a) in instance_and_assignment(8, 6)) {
        let loads = load_profile(&inst, &a).unwrap();
        prop_assert_eq!(loads.total(), inst.n());
        prop_assert_eq!(loads.as_slice(), &naive_loads(&inst, &a)[1..]);
    }

    #[test]
    fn unit_cost_counts_open_slots((inst, a) in instance_and_assignment(8, 6)) {
        let unit = inst.with_cost(CostFunction::Unit).unwrap();
        let open = naive_loads(&inst, &a).iter().filter(|&&l| l > 0).count();
        prop_assert_eq!(total_cost(&unit, &a).unwrap(), open as f64);
    }

    #[test]
    fn cost_ignores_job_order_and_unused_slots(
        (inst, a) in instance_and_assignment(8, 6),
        seed in any::<u64>(),
    ) {
        let mut order: Vec<usize> = (0..inst.n()).collect();
        // cheap deterministic shuffle
        order.sort_by_key(|&j| (j as u64).wrapping_mul(seed | 1).rotate_left(17));
        let jobs: Vec<Job> = order.iter().map(|&j| inst.job(j)).collect();
        let slots: Vec<usize> = order.iter().map(|&j| a.slot(j)).collect();
        let shuffled = Instance::new(*inst.cost(), inst.horizon(), jobs.clone()).unwrap();
        let base = total_cost(&inst, &a).unwrap();
        prop_assert!((total_cost(&shuffled, &Assignment::new(slots.clone())).unwrap() - base).abs() < EPS);
        let wider = Instance::new(*inst.cost(), inst.horizon() + 3, jobs).unwrap();
        prop_assert!((total_cost(&wider, &Assignment::new(slots)).unwrap() - base).abs() < EPS);
        prop_assert!((cost_from_scratch(&inst, &a) - base).abs() < EPS);
    }

    #[test]
    fn nash_agrees_with_definition((inst, a) in instance_and_assignment(8, 6)) {
        prop_assert_eq!(is_nash(&inst, &a, EPS).unwrap().holds(), nash_from_scratch(&inst, &a));
    }

    #[test]
    fn improving_moves_lower_potential((inst, a) in instance_and_assignment(8, 6)) {
        let loads = naive_loads(&inst, &a);
        let phi = rosenthal_potential(&inst, &a).unwrap();
        let c = |l: usize| inst.cost().eval(l);
        for j in 0..inst.n() {
            let s = a.slot(j);
            let now = c(loads[s]) / loads[s] as f64;
            for t in inst.job(j).window().filter(|&t| t != s) {
                let then = c(loads[t] + 1) / (loads[t] + 1) as f64;
                let mut b = a.clone();
                b.slots[j] = t;
                let after = rosenthal_potential(&inst, &b).unwrap();
                prop_assert!(((phi - after) - (now - then)).abs() < 1e-9);
                if then < now - EPS {
                    prop_assert!(after < phi);
                }
            }
        }
    }

    #[test]
    fn best_response_never_hurts((inst, a) in instance_and_assignment(8, 6)) {
        let loads = naive_loads(&inst, &a);
        let c = |l: usize| inst.cost().eval(l);
        for j in 0..inst.n() {
            let s = a.slot(j);
            let t = best_response(&inst, &a, j, EPS).unwrap();
            prop_assert!(inst.job(j).allows(t));
            let now = c(loads[s]) / loads[s] as f64;
            if t != s {
                prop_assert!((c(loads[t] + 1) / (loads[t] + 1) as f64) < now - EPS);
            }
        }
    }

    #[test]
    fn dynamics_end_in_equilibrium(
        (inst, a) in instance_and_assignment(8, 6),
        seed in any::<u64>(),
        shuffled in any::<bool>(),
    ) {
        let order = if shuffled { BrdOrder::Random(seed) } else { BrdOrder::RoundRobin };
        let (end, trace) = run_brd(&inst, &a, order, 100_000, EPS).unwrap();
        prop_assert!(trace.converged);
        prop_assert!(nash_from_scratch(&inst, &end));
        for w in trace.steps.windows(2) {
            prop_assert!(w[1].potential_before == w[0].potential_after);
        }
        prop_assert!(trace.steps.iter().all(|s| s.potential_after < s.potential_before));
    }

    #[test]
    fn worst_equilibrium_dominates_every_equilibrium(
        (inst, a) in instance_and_assignment(6, 5),
    ) {
        let (end, _) = run_brd(&inst, &a, BrdOrder::RoundRobin, 100_000, EPS).unwrap();
        let (worst, cost) = worst_nash(&inst, 10_000_000, EPS).unwrap();
        prop_assert!(nash_from_scratch(&inst, &worst));
        prop_assert!(cost >= total_cost(&inst, &end).unwrap() - EPS);
        let all = enumerate_nash(&inst, 10_000_000, EPS, false).unwrap();
        prop_assert!(all.iter().all(|(_, c)| *c <= cost + EPS));
        prop_assert!(all.iter().any(|(_, c)| (*c - cost).abs() < EPS));
    }

    #[test]
    fn solver_matches_brute_force(inst in instance(7, 6)) {
        let fast = solve(&inst, 10_000_000).unwrap();
        let slow = opt_bruteforce(&inst, 10_000_000).unwrap();
        prop_assert!(fast.exact);
        fast.assignment.validate(&inst).unwrap();
        prop_assert!((total_cost(&inst, &fast.assignment).unwrap() - fast.cost).abs() < EPS);
        prop_assert!((fast.cost - slow.cost).abs() < EPS);
    }

    #[test]
    fn adding_a_job_never_lowers_the_optimum(inst in instance(6, 5), r in 1usize..=5, w in 1usize..=5) {
        let r = r.min(inst.horizon());
        let d = (r + w).min(inst.horizon() + 1);
        let mut jobs = inst.jobs().to_vec();
        jobs.push(Job::new(r, d));
        let bigger = Instance::new(*inst.cost(), inst.horizon(), jobs).unwrap();
        let before = solve(&inst, 10_000_000).unwrap().cost;
        let after = solve(&bigger, 10_000_000).unwrap().cost;
        prop_assert!(after >= before - EPS);
    }

    #[test]
    fn supportable_assignments_verify_and_are_tight((inst, a) in instance_and_assignment(6, 5)) {
        let cert = support_payments(&inst, &a, EPS).unwrap();
        prop_assert_eq!(cert.feasible, cert.payments.is_some());
        prop_assert_eq!(cert.feasible, cert.blocking_slot.is_none());
        if let Some(p) = cert.payments {
            let profile = MechProfile::new(a.clone(), p).unwrap();
            prop_assert!(is_mechanism_nash(&inst, &profile, EPS).unwrap().holds());
            let loads = naive_loads(&inst, &a);
            for (t, &l) in loads.iter().enumerate().filter(|(_, &l)| l > 0) {
                let paid: f64 = (0..inst.n()).filter(|&j| a.slot(j) == t).map(|j| profile.payments.get(j)).sum();
                prop_assert!((paid - inst.cost().eval(l)).abs() < EPS);
            }
        }
    }

    #[test]
    fn worst_supportable_dominates(inst in instance(5, 5)) {
        let (worst, cost) = worst_supportable(&inst, 10_000_000, EPS).unwrap();
        prop_assert!(is_mechanism_nash(&inst, &worst, EPS).unwrap().holds());
        for a in all_assignments(&inst) {
            if support_payments(&inst, &a, EPS).unwrap().feasible {
                prop_assert!(total_cost(&inst, &a).unwrap() <= cost + EPS);
            }
        }
    }

    #[test]
    fn documents_round_trip(inst in instance(8, 6)) {
        let back = Instance::from_json(&inst.to_json()).unwrap();
        prop_assert_eq!(back, inst);
    }

    #[test]
    fn single_precision_agrees((inst, a) in instance_and_assignment(6, 5)) {
        let inst32 = Instance32::from_json(&inst.to_json()).unwrap();
        let c64 = total_cost(&inst, &a).unwrap();
        let c32 = total_cost(&inst32, &a).unwrap();
        prop_assert!((c64 - c32 as f64).abs() < 1e-3 * c64.max(1.0));
        let opt32 = solve(&inst32, 10_000_000).unwrap().cost as f64;
        let opt64 = solve(&inst, 10_000_000).unwrap().cost;
        prop_assert!((opt32 - opt64).abs() < 1e-3 * opt64.max(1.0));
    }
}
