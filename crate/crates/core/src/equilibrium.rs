//! Pure Nash equilibria of the equal-share game: verification, best-response
//! dynamics driven by the Rosenthal potential, and exhaustive search for the
//! worst equilibrium.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::model::{load_profile, Assignment, Instance, LoadProfile, ModelError};
use crate::scalar::Scalar;
use crate::search::{SearchError, SearchSpace};

#[derive(Debug, Error)]
pub enum EquilibriumError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error("best-response dynamics did not converge within {max_steps} steps")]
    StepBudget { max_steps: usize },
    #[error("enumeration found no equilibrium")]
    NoEquilibrium,
}

/// Outcome of an equilibrium check: empty means the condition holds.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict<V> {
    pub violations: Vec<V>,
}

impl<V> Verdict<V> {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// A job that could strictly lower its share by moving.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NashViolation<S> {
    pub job: usize,
    pub from_slot: usize,
    pub to_slot: usize,
    pub current_share: S,
    pub deviation_share: S,
}

pub(crate) fn violations_from<S: Scalar>(
    inst: &Instance<S>,
    slots: &[usize],
    loads: &LoadProfile,
    eps: S,
    first_only: bool,
) -> Vec<NashViolation<S>> {
    let c = inst.cost();
    let mut out = Vec::new();
    for (j, job) in inst.jobs().iter().enumerate() {
        let from = slots[j];
        let current = c.eval(loads.load(from)) / S::from_count(loads.load(from));
        for t in job.window().filter(|&t| t != from) {
            let l = loads.load(t) + 1;
            let deviation = c.eval(l) / S::from_count(l);
            if current > deviation + eps {
                out.push(NashViolation {
                    job: j,
                    from_slot: from,
                    to_slot: t,
                    current_share: current,
                    deviation_share: deviation,
                });
                if first_only {
                    return out;
                }
            }
        }
    }
    out
}

pub(crate) fn is_nash_with<S: Scalar>(
    inst: &Instance<S>,
    slots: &[usize],
    loads: &LoadProfile,
    eps: S,
) -> bool {
    violations_from(inst, slots, loads, eps, true).is_empty()
}

/// Checks `c(l_{s_j})/l_{s_j} <= c(l_t+1)/(l_t+1) + eps` for every job and
/// every other slot in its window; returns every failing pair.
pub fn is_nash<S: Scalar>(
    inst: &Instance<S>,
    a: &Assignment,
    eps: S,
) -> Result<Verdict<NashViolation<S>>, ModelError> {
    let loads = load_profile(inst, a)?;
    Ok(Verdict {
        violations: violations_from(inst, &a.slots, &loads, eps, false),
    })
}

fn best_response_with<S: Scalar>(
    inst: &Instance<S>,
    slots: &[usize],
    loads: &LoadProfile,
    j: usize,
    eps: S,
) -> (usize, S, S) {
    let c = inst.cost();
    let from = slots[j];
    let current = c.eval(loads.load(from)) / S::from_count(loads.load(from));
    let mut best: Option<(usize, S)> = None;
    for t in inst.job(j).window().filter(|&t| t != from) {
        let l = loads.load(t) + 1;
        let share = c.eval(l) / S::from_count(l);
        if best.is_none_or(|(_, b)| share < b) {
            best = Some((t, share));
        }
    }
    match best {
        Some((t, share)) if share < current - eps => (t, current, share),
        _ => (from, current, current),
    }
}

/// Slot minimizing the share job `j` would pay, holding everyone else fixed.
/// Stays put unless some move is strictly better by more than `eps`; among
/// equally good moves the smallest slot wins.
pub fn best_response<S: Scalar>(
    inst: &Instance<S>,
    a: &Assignment,
    j: usize,
    eps: S,
) -> Result<usize, ModelError> {
    let loads = load_profile(inst, a)?;
    Ok(best_response_with(inst, &a.slots, &loads, j, eps).0)
}

pub(crate) fn potential_of_loads<S: Scalar>(inst: &Instance<S>, loads: &LoadProfile) -> S {
    let c = inst.cost();
    loads
        .occupied()
        .map(|(_, l)| (1..=l).map(|k| c.eval(k) / S::from_count(k)).sum::<S>())
        .sum()
}

/// `Φ = Σ_t Σ_{k=1}^{l_t} c(k)/k`. A unilateral move changes Φ by exactly
/// the change in the mover's share.
pub fn rosenthal_potential<S: Scalar>(inst: &Instance<S>, a: &Assignment) -> Result<S, ModelError> {
    let loads = load_profile(inst, a)?;
    Ok(potential_of_loads(inst, &loads))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BrdOrder {
    /// Jobs in index order, repeated until a full pass makes no move.
    RoundRobin,
    /// A fresh seeded shuffle of the jobs for every pass.
    Random(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BrdStep<S> {
    pub job: usize,
    pub from: usize,
    pub to: usize,
    pub potential_before: S,
    pub potential_after: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrdTrace<S> {
    pub steps: Vec<BrdStep<S>>,
    pub converged: bool,
}

impl<S: Scalar> BrdTrace<S> {
    /// Rows `step,job,from,to,potential` with the potential after the move.
    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["step", "job", "from", "to", "potential"])?;
        for (i, s) in self.steps.iter().enumerate() {
            w.write_record([
                i.to_string(),
                s.job.to_string(),
                s.from.to_string(),
                s.to.to_string(),
                s.potential_after.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Best-response dynamics from `start` until no job can improve by more than
/// `eps`. Each recorded step lowers the potential by more than `eps`.
pub fn run_brd<S: Scalar>(
    inst: &Instance<S>,
    start: &Assignment,
    order: BrdOrder,
    max_steps: usize,
    eps: S,
) -> Result<(Assignment, BrdTrace<S>), EquilibriumError> {
    let mut loads = load_profile(inst, start)?;
    let mut slots = start.slots.clone();
    let mut potential = potential_of_loads(inst, &loads);
    let mut steps = Vec::new();
    let mut rng = match order {
        BrdOrder::Random(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        BrdOrder::RoundRobin => None,
    };
    let mut perm: Vec<usize> = (0..inst.n()).collect();

    loop {
        if let Some(rng) = rng.as_mut() {
            perm.shuffle(rng);
        }
        let mut moved = false;
        for &j in &perm {
            let (to, current, share) = best_response_with(inst, &slots, &loads, j, eps);
            if to == slots[j] {
                continue;
            }
            if steps.len() == max_steps {
                return Err(EquilibriumError::StepBudget { max_steps });
            }
            let from = slots[j];
            loads.remove(from);
            loads.add(to);
            slots[j] = to;
            let after = potential + share - current;
            steps.push(BrdStep {
                job: j,
                from,
                to,
                potential_before: potential,
                potential_after: after,
            });
            potential = after;
            moved = true;
        }
        if !moved {
            break;
        }
    }
    Ok((
        Assignment::new(slots),
        BrdTrace {
            steps,
            converged: true,
        },
    ))
}

/// Maximum-cost equilibrium by exhaustive enumeration.
pub fn worst_nash<S: Scalar>(
    inst: &Instance<S>,
    budget: u128,
    eps: S,
) -> Result<(Assignment, S), EquilibriumError> {
    let space = SearchSpace::new(inst, true);
    space.check_budget(budget)?;
    let shards = space.fold(
        || None::<(S, Vec<usize>)>,
        |best, slots, loads| {
            let cost = inst.cost_of_loads(loads);
            if best.as_ref().is_some_and(|(b, _)| cost <= *b) {
                return;
            }
            if is_nash_with(inst, slots, loads, eps) {
                *best = Some((cost, slots.to_vec()));
            }
        },
    );
    let mut best: Option<(S, Vec<usize>)> = None;
    for shard in shards.into_iter().flatten() {
        if best.as_ref().is_none_or(|(b, _)| shard.0 > *b) {
            best = Some(shard);
        }
    }
    let (cost, slots) = best.ok_or(EquilibriumError::NoEquilibrium)?;
    Ok((Assignment::new(slots), cost))
}

/// Every equilibrium (one representative per permutation of jobs with
/// identical windows). With `dedup_loads`, one per distinct load profile.
pub fn enumerate_nash<S: Scalar>(
    inst: &Instance<S>,
    budget: u128,
    eps: S,
    dedup_loads: bool,
) -> Result<Vec<(Assignment, S)>, EquilibriumError> {
    let space = SearchSpace::new(inst, true);
    space.check_budget(budget)?;
    let shards = space.fold(Vec::new, |found, slots, loads| {
        if is_nash_with(inst, slots, loads, eps) {
            found.push((
                slots.to_vec(),
                loads.as_slice().to_vec(),
                inst.cost_of_loads(loads),
            ));
        }
    });
    let mut seen = std::collections::HashSet::new();
    let out: Vec<_> = shards
        .into_iter()
        .flatten()
        .filter(|(_, loads, _)| !dedup_loads || seen.insert(loads.clone()))
        .map(|(slots, _, cost)| (Assignment::new(slots), cost))
        .collect();
    if out.is_empty() {
        return Err(EquilibriumError::NoEquilibrium);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CostFunction, Job};

    const EPS: f64 = 1e-9;

    fn inst(cost: CostFunction<f64>, jobs: &[(usize, usize)], horizon: usize) -> Instance<f64> {
        Instance::new(
            cost,
            horizon,
            jobs.iter().map(|&(r, d)| Job::new(r, d)).collect(),
        )
        .unwrap()
    }

    fn two_job_unit() -> Instance<f64> {
        inst(CostFunction::Unit, &[(1, 3), (2, 4)], 3)
    }

    #[test]
    fn best_response_single_slot_window() {
        let i = inst(CostFunction::Unit, &[(2, 3), (1, 4)], 3);
        assert_eq!(
            best_response(&i, &Assignment::new(vec![2, 1]), 0, EPS).unwrap(),
            2
        );
    }

    #[test]
    fn best_response_unit_joins_crowd() {
        // job 0 alone on slot 1; slot 2 holds three others
        let i = inst(CostFunction::Unit, &[(1, 3), (2, 3), (2, 3), (2, 3)], 2);
        let a = Assignment::new(vec![1, 2, 2, 2]);
        assert_eq!(best_response(&i, &a, 0, EPS).unwrap(), 2);
    }

    #[test]
    fn best_response_quadratic_avoids_crowd() {
        // others: one job on slot 1, three on slot 2; job 0 may use either.
        // joining slot 1 costs 2²/2 = 2, sharing slot 2 costs 4²/4 = 4
        let c = CostFunction::monomial(2.0).unwrap();
        let i = inst(c, &[(1, 3), (1, 2), (2, 3), (2, 3), (2, 3)], 2);
        let a = Assignment::new(vec![2, 1, 2, 2, 2]);
        let loads = i.loads(&a).unwrap();
        assert_eq!(
            best_response_with(&i, &a.slots, &loads, 0, EPS),
            (1, 4.0, 2.0)
        );
        assert_eq!(best_response(&i, &a, 0, EPS).unwrap(), 1);
    }

    #[test]
    fn best_response_keeps_slot_on_tie() {
        let i = two_job_unit();
        // (1,3): moving to empty slot 2 gives the same share 1
        assert_eq!(
            best_response(&i, &Assignment::new(vec![1, 3]), 0, EPS).unwrap(),
            1
        );
    }

    #[test]
    fn potential_examples() {
        let i = inst(CostFunction::Unit, &[(1, 3)], 2);
        assert_eq!(
            rosenthal_potential(&i, &Assignment::new(vec![2])).unwrap(),
            1.0
        );
        let i = inst(CostFunction::Unit, &[(1, 2), (1, 2)], 1);
        assert_eq!(
            rosenthal_potential(&i, &Assignment::uniform(2, 1)).unwrap(),
            1.5
        );
        let i = inst(CostFunction::monomial(2.0).unwrap(), &[(1, 2), (1, 2)], 1);
        assert_eq!(
            rosenthal_potential(&i, &Assignment::uniform(2, 1)).unwrap(),
            3.0
        );
    }

    #[test]
    fn two_job_unit_equilibria() {
        // (1,2) and (2,3) are not equilibria; (1,3) and (2,2) are
        let i = two_job_unit();
        let ne = enumerate_nash(&i, 100, EPS, false).unwrap();
        let mut slots: Vec<_> = ne.iter().map(|(a, _)| a.slots.clone()).collect();
        slots.sort();
        assert_eq!(slots, vec![vec![1, 3], vec![2, 2]]);
        let (a, cost) = worst_nash(&i, 100, EPS).unwrap();
        assert_eq!((a.slots, cost), (vec![1, 3], 2.0));
        let v = is_nash(&i, &Assignment::new(vec![1, 2]), EPS).unwrap();
        assert_eq!(v.violations.len(), 1);
        assert_eq!(v.violations[0].job, 0);
        assert_eq!(v.violations[0].deviation_share, 0.5);
    }

    #[test]
    fn single_job_equilibria() {
        let i = inst(CostFunction::monomial(0.5).unwrap(), &[(2, 6)], 6);
        let ne = enumerate_nash(&i, 100, EPS, false).unwrap();
        assert_eq!(ne.len(), 4);
        assert!(ne.iter().all(|(_, c)| *c == 1.0));
        assert_eq!(worst_nash(&i, 100, EPS).unwrap().1, 1.0);
    }

    #[test]
    fn enumeration_budget() {
        let i = inst(CostFunction::Unit, &[(1, 4), (1, 3), (2, 4)], 3);
        assert!(matches!(
            worst_nash(&i, 5, EPS),
            Err(EquilibriumError::Search(SearchError::BudgetExceeded {
                size: 12,
                budget: 5
            }))
        ));
    }

    #[test]
    fn brd_fixed_point() {
        let i = two_job_unit();
        let (a, trace) = run_brd(
            &i,
            &Assignment::new(vec![1, 3]),
            BrdOrder::RoundRobin,
            10,
            EPS,
        )
        .unwrap();
        assert_eq!(a.slots, vec![1, 3]);
        assert!(trace.steps.is_empty());
        assert!(trace.converged);
    }

    #[test]
    fn brd_converges_and_lowers_potential() {
        let i = two_job_unit();
        let (a, trace) = run_brd(
            &i,
            &Assignment::new(vec![1, 2]),
            BrdOrder::RoundRobin,
            10,
            EPS,
        )
        .unwrap();
        assert_eq!(a.slots, vec![2, 2]);
        assert_eq!(trace.steps.len(), 1);
        assert!(trace.steps[0].potential_after < trace.steps[0].potential_before - EPS);
        assert!(is_nash(&i, &a, EPS).unwrap().holds());
    }

    #[test]
    fn brd_step_budget() {
        let i = inst(CostFunction::Unit, &[(1, 3), (1, 3), (1, 3)], 2);
        let err = run_brd(
            &i,
            &Assignment::new(vec![1, 2, 2]),
            BrdOrder::RoundRobin,
            0,
            EPS,
        )
        .unwrap_err();
        assert!(matches!(err, EquilibriumError::StepBudget { max_steps: 0 }));
    }

    #[test]
    fn trace_csv() {
        let i = two_job_unit();
        let (_, trace) = run_brd(
            &i,
            &Assignment::new(vec![1, 2]),
            BrdOrder::RoundRobin,
            10,
            EPS,
        )
        .unwrap();
        let mut out = Vec::new();
        trace.write_csv(&mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "step,job,from,to,potential\n0,0,1,2,1.5\n"
        );
    }
}
