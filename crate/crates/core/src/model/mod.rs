//! Domain types for the scheduling game: cost functions, jobs, instances,
//! assignments and the per-slot load accounting built from them.
//!
//! Slots are numbered `1..=horizon`. A job's window is the half-open range
//! `[release, deadline)`.

mod io;

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub use io::{read_assignment, read_instance, write_assignment, write_instance};

/// Free-form instance metadata (family name, coordinate shift, ...).
pub type Meta = serde_json::Map<String, serde_json::Value>;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("instance has no jobs")]
    NoJobs,
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("monomial degree must be a positive finite number, got {degree}")]
    InvalidDegree { degree: f64 },
    #[error(
        "job {job}: window [{release}, {deadline}) must satisfy 1 <= release < deadline <= {}",
        horizon + 1
    )]
    InvalidJob {
        job: usize,
        release: usize,
        deadline: usize,
        horizon: usize,
    },
    #[error("assignment has {found} slots but the instance has {expected} jobs")]
    LengthMismatch { expected: usize, found: usize },
    #[error("job {job} declared slot {slot} outside its window [{release}, {deadline})")]
    OutsideWindow {
        job: usize,
        slot: usize,
        release: usize,
        deadline: usize,
    },
    #[error("cost share is undefined on an empty slot")]
    EmptySlotShare,
    #[error("malformed document: {0}")]
    Document(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Activation cost of a slot as a function of its load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", bound = "S: Scalar")]
pub enum CostFunction<S> {
    /// `c(0) = 0`, `c(l) = 1` for `l >= 1`.
    Unit,
    /// `c(l) = l^degree`.
    Monomial { degree: S },
}

impl<S: Scalar> CostFunction<S> {
    pub fn monomial(degree: S) -> Result<Self, ModelError> {
        let cost = CostFunction::Monomial { degree };
        cost.validate()?;
        Ok(cost)
    }

    fn validate(&self) -> Result<(), ModelError> {
        match *self {
            CostFunction::Unit => Ok(()),
            CostFunction::Monomial { degree } => {
                if degree.is_finite() && degree > S::zero() {
                    Ok(())
                } else {
                    Err(ModelError::InvalidDegree {
                        degree: degree.to_f64().unwrap_or(f64::NAN),
                    })
                }
            }
        }
    }

    /// `c(load)`. Zero on an empty slot.
    pub fn eval(&self, load: usize) -> S {
        if load == 0 {
            return S::zero();
        }
        match *self {
            CostFunction::Unit => S::one(),
            CostFunction::Monomial { degree } => {
                let x = S::from_count(load);
                // integral exponents go through repeated multiplication so that
                // integer loads give exact integer costs
                if degree.fract() == S::zero() && degree <= S::lit(64.0) {
                    x.powi(degree.to_i32().expect("small integral degree"))
                } else {
                    x.powf(degree)
                }
            }
        }
    }

    /// Per-job share `c(load) / load` under equal cost sharing.
    pub fn share(&self, load: usize) -> Result<S, ModelError> {
        if load == 0 {
            return Err(ModelError::EmptySlotShare);
        }
        Ok(self.eval(load) / S::from_count(load))
    }

    /// Marginal cost of one more job on a slot that holds `load` jobs:
    /// `c(load + 1) - c(load)`.
    pub fn marginal(&self, load: usize) -> S {
        self.eval(load + 1) - self.eval(load)
    }

    pub fn degree(&self) -> Option<S> {
        match *self {
            CostFunction::Unit => None,
            CostFunction::Monomial { degree } => Some(degree),
        }
    }

    /// Monomial with `degree < 1`: shares strictly decrease with load.
    pub fn is_concave_monomial(&self) -> bool {
        matches!(*self, CostFunction::Monomial { degree } if degree < S::one())
    }

    /// Monomial with `degree >= 1`: marginals are nondecreasing.
    pub fn is_convex_monomial(&self) -> bool {
        matches!(*self, CostFunction::Monomial { degree } if degree >= S::one())
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            CostFunction::Unit => "unit",
            CostFunction::Monomial { .. } => "monomial",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Job {
    pub release: usize,
    pub deadline: usize,
}

impl Job {
    pub fn new(release: usize, deadline: usize) -> Self {
        Job { release, deadline }
    }

    /// Slots the job may declare.
    pub fn window(&self) -> Range<usize> {
        self.release..self.deadline
    }

    pub fn allows(&self, slot: usize) -> bool {
        self.release <= slot && slot < self.deadline
    }

    pub fn width(&self) -> usize {
        self.deadline - self.release
    }
}

/// A game: cost function, horizon and job windows. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance<S> {
    cost: CostFunction<S>,
    horizon: usize,
    jobs: Vec<Job>,
    meta: Meta,
}

impl<S: Scalar> Instance<S> {
    pub fn new(cost: CostFunction<S>, horizon: usize, jobs: Vec<Job>) -> Result<Self, ModelError> {
        Self::with_meta(cost, horizon, jobs, Meta::new())
    }

    pub fn with_meta(
        cost: CostFunction<S>,
        horizon: usize,
        jobs: Vec<Job>,
        meta: Meta,
    ) -> Result<Self, ModelError> {
        cost.validate()?;
        if horizon == 0 {
            return Err(ModelError::ZeroHorizon);
        }
        if jobs.is_empty() {
            return Err(ModelError::NoJobs);
        }
        for (job, j) in jobs.iter().enumerate() {
            if j.release == 0 || j.release >= j.deadline || j.deadline > horizon + 1 {
                return Err(ModelError::InvalidJob {
                    job,
                    release: j.release,
                    deadline: j.deadline,
                    horizon,
                });
            }
        }
        Ok(Instance {
            cost,
            horizon,
            jobs,
            meta,
        })
    }

    pub fn cost(&self) -> &CostFunction<S> {
        &self.cost
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn jobs(&self) -> &[Job] {
        &self.jobs
    }

    pub fn job(&self, j: usize) -> Job {
        self.jobs[j]
    }

    pub fn n(&self) -> usize {
        self.jobs.len()
    }

    pub fn meta(&self) -> &Meta {
        &self.meta
    }

    /// Same game with a different cost function.
    pub fn with_cost(&self, cost: CostFunction<S>) -> Result<Self, ModelError> {
        Self::with_meta(cost, self.horizon, self.jobs.clone(), self.meta.clone())
    }

    /// Validates `a` against this instance and returns its load profile.
    pub fn loads(&self, a: &Assignment) -> Result<LoadProfile, ModelError> {
        load_profile(self, a)
    }

    /// `Σ_t c(l_t)` for an already-computed profile.
    pub fn cost_of_loads(&self, loads: &LoadProfile) -> S {
        loads.occupied().map(|(_, l)| self.cost.eval(l)).sum()
    }

    /// Slots contained in every job window.
    pub fn common_slots(&self) -> Range<usize> {
        let lo = self.jobs.iter().map(|j| j.release).max().unwrap_or(1);
        let hi = self.jobs.iter().map(|j| j.deadline).min().unwrap_or(1);
        lo..hi.max(lo)
    }
}

/// One declared slot per job.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment {
    pub slots: Vec<usize>,
}

impl Assignment {
    pub fn new(slots: Vec<usize>) -> Self {
        Assignment { slots }
    }

    /// Every job on `slot`.
    pub fn uniform(n: usize, slot: usize) -> Self {
        Assignment {
            slots: vec![slot; n],
        }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slot(&self, j: usize) -> usize {
        self.slots[j]
    }

    pub fn validate<S: Scalar>(&self, inst: &Instance<S>) -> Result<(), ModelError> {
        if self.slots.len() != inst.n() {
            return Err(ModelError::LengthMismatch {
                expected: inst.n(),
                found: self.slots.len(),
            });
        }
        for (job, (&slot, j)) in self.slots.iter().zip(inst.jobs()).enumerate() {
            if !j.allows(slot) {
                return Err(ModelError::OutsideWindow {
                    job,
                    slot,
                    release: j.release,
                    deadline: j.deadline,
                });
            }
        }
        Ok(())
    }
}

/// Number of jobs on each slot, indexed `1..=horizon`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadProfile {
    loads: Vec<usize>,
}

impl LoadProfile {
    pub(crate) fn empty(horizon: usize) -> Self {
        LoadProfile {
            loads: vec![0; horizon + 1],
        }
    }

    pub(crate) fn from_slots(horizon: usize, slots: &[usize]) -> Self {
        let mut p = Self::empty(horizon);
        for &s in slots {
            p.loads[s] += 1;
        }
        p
    }

    pub(crate) fn add(&mut self, slot: usize) {
        self.loads[slot] += 1;
    }

    pub(crate) fn remove(&mut self, slot: usize) {
        self.loads[slot] -= 1;
    }

    pub fn load(&self, slot: usize) -> usize {
        self.loads.get(slot).copied().unwrap_or(0)
    }

    pub fn horizon(&self) -> usize {
        self.loads.len() - 1
    }

    /// `(slot, load)` for every slot with at least one job, in slot order.
    pub fn occupied(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.loads
            .iter()
            .enumerate()
            .skip(1)
            .filter(|&(_, &l)| l > 0)
            .map(|(t, &l)| (t, l))
    }

    pub fn total(&self) -> usize {
        self.loads.iter().sum()
    }

    pub fn max_load(&self) -> usize {
        self.loads.iter().copied().max().unwrap_or(0)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.loads[1..]
    }
}

pub fn load_profile<S: Scalar>(
    inst: &Instance<S>,
    a: &Assignment,
) -> Result<LoadProfile, ModelError> {
    a.validate(inst)?;
    Ok(LoadProfile::from_slots(inst.horizon(), &a.slots))
}

/// `C(s) = Σ_t c(l_t(s))`.
pub fn total_cost<S: Scalar>(inst: &Instance<S>, a: &Assignment) -> Result<S, ModelError> {
    let loads = load_profile(inst, a)?;
    Ok(inst.cost_of_loads(&loads))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_inst(jobs: &[(usize, usize)], horizon: usize) -> Instance<f64> {
        Instance::new(
            CostFunction::Unit,
            horizon,
            jobs.iter().map(|&(r, d)| Job::new(r, d)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn cost_eval_examples() {
        let unit = CostFunction::<f64>::Unit;
        assert_eq!(unit.eval(0), 0.0);
        assert_eq!(unit.eval(1), 1.0);
        assert_eq!(unit.eval(17), 1.0);
        assert_eq!(CostFunction::monomial(2.0).unwrap().eval(6), 36.0);
        assert_eq!(CostFunction::monomial(0.5).unwrap().eval(4), 2.0);
        assert_eq!(CostFunction::monomial(0.3).unwrap().eval(0), 0.0);
    }

    #[test]
    fn cost_share_examples() {
        assert_eq!(CostFunction::monomial(0.5).unwrap().share(4).unwrap(), 0.5);
        assert_eq!(CostFunction::monomial(2.0).unwrap().share(3).unwrap(), 3.0);
        assert_eq!(CostFunction::<f64>::Unit.share(2).unwrap(), 0.5);
        assert!(matches!(
            CostFunction::<f64>::Unit.share(0),
            Err(ModelError::EmptySlotShare)
        ));
    }

    #[test]
    fn shares_are_monotone_in_load() {
        for d in [0.25, 0.5, 0.75] {
            let c = CostFunction::monomial(d).unwrap();
            for l in 1..1000 {
                assert!(c.share(l + 1).unwrap() < c.share(l).unwrap(), "d={d} l={l}");
            }
        }
        for d in [1.5, 2.0, 3.0] {
            let c = CostFunction::monomial(d).unwrap();
            for l in 1..1000 {
                assert!(c.share(l + 1).unwrap() > c.share(l).unwrap(), "d={d} l={l}");
            }
        }
    }

    #[test]
    fn rejects_bad_degree() {
        assert!(matches!(
            CostFunction::monomial(-1.0f64),
            Err(ModelError::InvalidDegree { .. })
        ));
        assert!(CostFunction::monomial(0.0f64).is_err());
        assert!(CostFunction::monomial(f64::NAN).is_err());
    }

    #[test]
    fn rejects_bad_windows() {
        let err = Instance::<f64>::new(CostFunction::Unit, 3, vec![Job::new(1, 2), Job::new(2, 2)])
            .unwrap_err();
        assert!(matches!(err, ModelError::InvalidJob { job: 1, .. }));
        assert!(Instance::<f64>::new(CostFunction::Unit, 3, vec![Job::new(0, 2)]).is_err());
        assert!(Instance::<f64>::new(CostFunction::Unit, 3, vec![Job::new(3, 5)]).is_err());
        assert!(Instance::<f64>::new(CostFunction::Unit, 3, vec![Job::new(3, 4)]).is_ok());
        assert!(matches!(
            Instance::<f64>::new(CostFunction::Unit, 3, vec![]),
            Err(ModelError::NoJobs)
        ));
    }

    #[test]
    fn load_profile_counts_and_reports_offender() {
        let inst = unit_inst(&[(1, 3), (2, 4), (1, 4)], 3);
        let p = load_profile(&inst, &Assignment::new(vec![2, 2, 3])).unwrap();
        assert_eq!(p.as_slice(), &[0, 2, 1]);
        assert_eq!(p.total(), 3);
        assert_eq!(p.occupied().collect::<Vec<_>>(), vec![(2, 2), (3, 1)]);

        let err = load_profile(&inst, &Assignment::new(vec![2, 1, 3])).unwrap_err();
        assert!(matches!(
            err,
            ModelError::OutsideWindow {
                job: 1,
                slot: 1,
                ..
            }
        ));
        let err = load_profile(&inst, &Assignment::new(vec![2])).unwrap_err();
        assert!(matches!(
            err,
            ModelError::LengthMismatch {
                expected: 3,
                found: 1
            }
        ));
    }

    #[test]
    fn all_on_one_slot() {
        let inst = unit_inst(&[(1, 4), (2, 4), (3, 4), (3, 4)], 3);
        let p = inst.loads(&Assignment::uniform(4, 3)).unwrap();
        assert_eq!(p.load(3), 4);
        assert_eq!(inst.common_slots(), 3..4);
    }

    #[test]
    fn unit_total_cost_counts_occupied_slots() {
        let inst = unit_inst(&[(1, 3), (2, 4), (3, 5), (4, 5)], 4);
        assert_eq!(
            total_cost(&inst, &Assignment::new(vec![1, 2, 3, 4])).unwrap(),
            4.0
        );
        assert_eq!(
            total_cost(&inst, &Assignment::new(vec![2, 2, 4, 4])).unwrap(),
            2.0
        );
    }
}
