//! The payment coordination mechanism.
//!
//! A strategy is a pair (slot, payment). A slot opens only when the payments
//! declared on it cover its activation cost, and a job on an unopened slot is
//! never served. At an equilibrium every occupied slot is paid exactly
//! `c(l_t)`, so moving to an occupied slot `t` costs the marginal
//! `c(l_t + 1) - c(l_t)` and moving to an empty one costs `c(1)`. The least of
//! these over a job's other slots is its *deviation cap*: the most it can be
//! charged at an equilibrium.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::equilibrium::Verdict;
use crate::model::{load_profile, Assignment, CostFunction, Instance, LoadProfile, ModelError};
use crate::optimal::{self, OptError, OptResult};
use crate::scalar::Scalar;
use crate::search::{SearchError, SearchSpace};

#[derive(Debug, Error)]
pub enum MechanismError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Opt(#[from] OptError),
    #[error("{found} payments given for {expected} jobs")]
    PaymentCount { expected: usize, found: usize },
    #[error("job {job}: payment {value} is not a nonnegative number")]
    InvalidPayment { job: usize, value: f64 },
    #[error("slot {slot} has no job whose window misses every other occupied slot; the assignment is not optimal")]
    NotOptimal { slot: usize },
    #[error("assignment occupies {occupied} slots; fair-share payments need all jobs on one slot")]
    NotSingleSlot { occupied: usize },
    #[error("{0}")]
    WrongCost(&'static str),
    #[error("no exact optimum available (best found {cost}, lower bound {lower_bound:?})")]
    InexactOptimum { cost: f64, lower_bound: Option<f64> },
    #[error("no supportable assignment found")]
    NoSupportable,
}

/// One nonnegative payment per job.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct PaymentProfile<S> {
    payments: Vec<S>,
}

impl<S: Scalar> PaymentProfile<S> {
    pub fn new(payments: Vec<S>) -> Result<Self, MechanismError> {
        for (job, &p) in payments.iter().enumerate() {
            if !(p.is_finite() && p >= S::zero()) {
                return Err(MechanismError::InvalidPayment {
                    job,
                    value: p.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        Ok(PaymentProfile { payments })
    }

    pub fn zeros(n: usize) -> Self {
        PaymentProfile {
            payments: vec![S::zero(); n],
        }
    }

    pub fn get(&self, j: usize) -> S {
        self.payments[j]
    }

    pub fn as_slice(&self) -> &[S] {
        &self.payments
    }

    pub fn len(&self) -> usize {
        self.payments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.payments.is_empty()
    }

    pub fn total(&self) -> S {
        self.payments.iter().copied().sum()
    }
}

/// Assignment plus payments: `{"slots": [..], "payments": [..]}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MechProfile<S> {
    pub assignment: Assignment,
    pub payments: PaymentProfile<S>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
struct MechDoc<S> {
    slots: Vec<usize>,
    payments: Vec<S>,
}

impl<S: Scalar> MechProfile<S> {
    pub fn new(
        assignment: Assignment,
        payments: PaymentProfile<S>,
    ) -> Result<Self, MechanismError> {
        if assignment.len() != payments.len() {
            return Err(MechanismError::PaymentCount {
                expected: assignment.len(),
                found: payments.len(),
            });
        }
        Ok(MechProfile {
            assignment,
            payments,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&MechDoc {
            slots: self.assignment.slots.clone(),
            payments: self.payments.payments.clone(),
        })
        .expect("plain data serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, MechanismError> {
        let doc: MechDoc<S> = serde_json::from_str(s).map_err(ModelError::from)?;
        Self::new(
            Assignment::new(doc.slots),
            PaymentProfile::new(doc.payments)?,
        )
    }

    fn check_len(&self, inst: &Instance<S>) -> Result<(), MechanismError> {
        if self.payments.len() != inst.n() {
            return Err(MechanismError::PaymentCount {
                expected: inst.n(),
                found: self.payments.len(),
            });
        }
        Ok(())
    }
}

/// Largest payment a job can carry at an equilibrium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cap<S> {
    Finite(S),
    /// The window holds no other slot.
    Unbounded,
}

impl<S: Scalar> Cap<S> {
    pub fn finite(&self) -> Option<S> {
        match *self {
            Cap::Finite(x) => Some(x),
            Cap::Unbounded => None,
        }
    }

    pub fn admits(&self, payment: S, eps: S) -> bool {
        match *self {
            Cap::Finite(x) => payment <= x + eps,
            Cap::Unbounded => true,
        }
    }
}

impl<S: Scalar> Serialize for Cap<S> {
    fn serialize<Z: Serializer>(&self, z: Z) -> Result<Z::Ok, Z::Error> {
        match self {
            Cap::Finite(x) => x.serialize(z),
            Cap::Unbounded => z.serialize_str("unbounded"),
        }
    }
}

impl<S: Scalar> fmt::Display for Cap<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cap::Finite(x) => write!(f, "{x}"),
            Cap::Unbounded => f.write_str("unbounded"),
        }
    }
}

/// How verification prices a move to another slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DeviationPricing {
    /// Pay whatever the slot still lacks after its current payments:
    /// `max{0, c(l_t + 1) - Σ_{s_j' = t} ξ_j'}`.
    #[default]
    Residual,
    /// Pay the marginal `c(l_t + 1) - c(l_t)`, or `c(1)` on an empty slot.
    /// Agrees with `Residual` whenever every occupied slot is paid exactly.
    Marginal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MechViolation<S> {
    /// Payments fall short of the activation cost; the slot stays closed.
    Uncovered { slot: usize, paid: S, cost: S },
    /// Payments exceed the activation cost; some payer could pay less.
    Overpaid { slot: usize, paid: S, cost: S },
    /// Job `job` could move to `to` and pay `price < payment`.
    Deviation {
        job: usize,
        from: usize,
        to: usize,
        payment: S,
        price: S,
    },
}

fn slot_payments<S: Scalar>(horizon: usize, slots: &[usize], payments: &[S]) -> Vec<S> {
    let mut paid = vec![S::zero(); horizon + 1];
    for (&t, &p) in slots.iter().zip(payments) {
        paid[t] += p;
    }
    paid
}

/// Slots whose declared payments cover `c(l_t)` within `eps`.
pub fn open_slots<S: Scalar>(
    inst: &Instance<S>,
    p: &MechProfile<S>,
    eps: S,
) -> Result<BTreeSet<usize>, MechanismError> {
    p.check_len(inst)?;
    let loads = load_profile(inst, &p.assignment)?;
    let paid = slot_payments(inst.horizon(), &p.assignment.slots, p.payments.as_slice());
    Ok(loads
        .occupied()
        .filter(|&(t, l)| paid[t] >= inst.cost().eval(l) - eps)
        .map(|(t, _)| t)
        .collect())
}

fn move_price<S: Scalar>(c: &CostFunction<S>, load: usize) -> S {
    if load == 0 {
        c.eval(1)
    } else {
        c.marginal(load)
    }
}

pub(crate) fn cap_with<S: Scalar>(
    inst: &Instance<S>,
    slots: &[usize],
    loads: &LoadProfile,
    j: usize,
) -> Cap<S> {
    let c = inst.cost();
    inst.job(j)
        .window()
        .filter(|&t| t != slots[j])
        .map(|t| move_price(c, loads.load(t)))
        .fold(Cap::Unbounded, |acc, x| match acc {
            Cap::Finite(y) if y <= x => acc,
            _ => Cap::Finite(x),
        })
}

/// Minimum over the other slots `t` in job `j`'s window of
/// `c(l_t + 1) - c(l_t)` (occupied) or `c(1)` (empty).
pub fn deviation_cap<S: Scalar>(
    inst: &Instance<S>,
    a: &Assignment,
    j: usize,
) -> Result<Cap<S>, MechanismError> {
    let loads = load_profile(inst, a)?;
    Ok(cap_with(inst, &a.slots, &loads, j))
}

pub fn is_mechanism_nash<S: Scalar>(
    inst: &Instance<S>,
    p: &MechProfile<S>,
    eps: S,
) -> Result<Verdict<MechViolation<S>>, MechanismError> {
    is_mechanism_nash_with(inst, p, eps, DeviationPricing::Residual)
}

/// Equilibrium check for the mechanism: every occupied slot is paid exactly
/// its cost (within `eps`) and no job can move and pay less than it does now.
pub fn is_mechanism_nash_with<S: Scalar>(
    inst: &Instance<S>,
    p: &MechProfile<S>,
    eps: S,
    pricing: DeviationPricing,
) -> Result<Verdict<MechViolation<S>>, MechanismError> {
    p.check_len(inst)?;
    let loads = load_profile(inst, &p.assignment)?;
    let c = inst.cost();
    let slots = &p.assignment.slots;
    let paid = slot_payments(inst.horizon(), slots, p.payments.as_slice());
    let mut violations = Vec::new();

    for (t, l) in loads.occupied() {
        let cost = c.eval(l);
        if paid[t] < cost - eps {
            violations.push(MechViolation::Uncovered {
                slot: t,
                paid: paid[t],
                cost,
            });
        } else if paid[t] > cost + eps {
            violations.push(MechViolation::Overpaid {
                slot: t,
                paid: paid[t],
                cost,
            });
        }
    }
    for (j, &from) in slots.iter().enumerate() {
        let payment = p.payments.get(j);
        for t in inst.job(j).window().filter(|&t| t != from) {
            let price = match pricing {
                DeviationPricing::Residual => (c.eval(loads.load(t) + 1) - paid[t]).max(S::zero()),
                DeviationPricing::Marginal => move_price(c, loads.load(t)),
            };
            if payment > price + eps {
                violations.push(MechViolation::Deviation {
                    job: j,
                    from,
                    to: t,
                    payment,
                    price,
                });
            }
        }
    }
    Ok(Verdict { violations })
}

/// Whether an assignment can be sustained by some payments, with the
/// payments when it can.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "S: Scalar")]
pub struct SupportCertificate<S> {
    pub feasible: bool,
    pub caps: Vec<Cap<S>>,
    pub payments: Option<PaymentProfile<S>>,
    pub blocking_slot: Option<usize>,
}

impl<S: Scalar> SupportCertificate<S> {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("plain data serializes")
    }
}

/// First occupied slot whose jobs' caps cannot add up to its cost.
fn blocking_slot<S: Scalar>(
    inst: &Instance<S>,
    loads: &LoadProfile,
    slot_of: &[usize],
    caps: &[Cap<S>],
    eps: S,
) -> Option<usize> {
    let mut finite = vec![S::zero(); inst.horizon() + 1];
    let mut unbounded = vec![false; inst.horizon() + 1];
    for (j, cap) in caps.iter().enumerate() {
        match cap {
            Cap::Finite(x) => finite[slot_of[j]] += *x,
            Cap::Unbounded => unbounded[slot_of[j]] = true,
        }
    }
    loads
        .occupied()
        .find(|&(t, l)| !unbounded[t] && finite[t] < inst.cost().eval(l) - eps)
        .map(|(t, _)| t)
}

/// An assignment is supportable iff on every occupied slot the jobs' caps sum
/// to at least the slot cost. Payments are filled per slot: if some job there
/// has an unbounded cap, those jobs split the cost equally and the rest pay
/// nothing; otherwise each job pays its cap scaled by `c(l_t) / Σ caps`.
pub fn support_payments<S: Scalar>(
    inst: &Instance<S>,
    a: &Assignment,
    eps: S,
) -> Result<SupportCertificate<S>, MechanismError> {
    let loads = load_profile(inst, a)?;
    let slots = &a.slots;
    let caps: Vec<Cap<S>> = (0..inst.n())
        .map(|j| cap_with(inst, slots, &loads, j))
        .collect();
    if let Some(t) = blocking_slot(inst, &loads, slots, &caps, eps) {
        return Ok(SupportCertificate {
            feasible: false,
            caps,
            payments: None,
            blocking_slot: Some(t),
        });
    }

    let mut payments = vec![S::zero(); inst.n()];
    for (t, l) in loads.occupied() {
        let cost = inst.cost().eval(l);
        let here: Vec<usize> = (0..inst.n()).filter(|&j| slots[j] == t).collect();
        let free: Vec<usize> = here
            .iter()
            .copied()
            .filter(|&j| caps[j] == Cap::Unbounded)
            .collect();
        if !free.is_empty() {
            let each = cost / S::from_count(free.len());
            for j in free {
                payments[j] = each;
            }
        } else {
            let total: S = here.iter().filter_map(|&j| caps[j].finite()).sum();
            if total > S::zero() {
                for &j in &here {
                    payments[j] = caps[j].finite().unwrap_or_default() * cost / total;
                }
            }
        }
    }
    Ok(SupportCertificate {
        feasible: true,
        caps,
        payments: Some(PaymentProfile { payments }),
        blocking_slot: None,
    })
}

/// Maximum-cost supportable assignment, by exhaustive enumeration, with the
/// payments that sustain it.
pub fn worst_supportable<S: Scalar>(
    inst: &Instance<S>,
    budget: u128,
    eps: S,
) -> Result<(MechProfile<S>, S), MechanismError> {
    let space = SearchSpace::new(inst, true);
    space.check_budget(budget)?;
    let shards = space.fold(
        || (Vec::<Cap<S>>::new(), None::<(S, Vec<usize>)>),
        |(caps, best), slots, loads| {
            let cost = inst.cost_of_loads(loads);
            if best.as_ref().is_some_and(|(b, _)| cost <= *b) {
                return;
            }
            caps.clear();
            caps.extend((0..inst.n()).map(|j| cap_with(inst, slots, loads, j)));
            if blocking_slot(inst, loads, slots, caps, eps).is_none() {
                *best = Some((cost, slots.to_vec()));
            }
        },
    );
    let mut best: Option<(S, Vec<usize>)> = None;
    for (_, shard) in shards {
        if let Some(s) = shard {
            if best.as_ref().is_none_or(|(b, _)| s.0 > *b) {
                best = Some(s);
            }
        }
    }
    let (cost, slots) = best.ok_or(MechanismError::NoSupportable)?;
    let assignment = Assignment::new(slots);
    let cert = support_payments(inst, &assignment, eps)?;
    let payments = cert.payments.ok_or(MechanismError::NoSupportable)?;
    Ok((MechProfile::new(assignment, payments)?, cost))
}

/// Unit costs: on every occupied slot of an optimal assignment, the
/// lowest-index job with no other occupied slot in its window pays 1 and
/// everyone else pays 0.
pub fn payments_unit_optimal<S: Scalar>(
    inst: &Instance<S>,
    opt: &Assignment,
) -> Result<PaymentProfile<S>, MechanismError> {
    if *inst.cost() != CostFunction::Unit {
        return Err(MechanismError::WrongCost(
            "payments_unit_optimal needs unit costs",
        ));
    }
    let loads = load_profile(inst, opt)?;
    let mut payments = vec![S::zero(); inst.n()];
    for (t, _) in loads.occupied() {
        let payer = (0..inst.n()).find(|&j| {
            opt.slot(j) == t && inst.job(j).window().all(|u| u == t || loads.load(u) == 0)
        });
        match payer {
            Some(j) => payments[j] = S::one(),
            None => return Err(MechanismError::NotOptimal { slot: t }),
        }
    }
    Ok(PaymentProfile { payments })
}

/// Concave monomials with every job on one slot: each pays the fair share
/// `n^(d-1)`.
pub fn payments_common_slot<S: Scalar>(
    inst: &Instance<S>,
    opt: &Assignment,
) -> Result<PaymentProfile<S>, MechanismError> {
    if !inst.cost().is_concave_monomial() {
        return Err(MechanismError::WrongCost(
            "payments_common_slot needs a monomial with degree below 1",
        ));
    }
    let loads = load_profile(inst, opt)?;
    let occupied = loads.occupied().count();
    if occupied != 1 {
        return Err(MechanismError::NotSingleSlot { occupied });
    }
    let share = inst.cost().share(inst.n())?;
    Ok(PaymentProfile {
        payments: vec![share; inst.n()],
    })
}

#[derive(Debug, Clone)]
pub struct MechPoa<S> {
    pub worst: MechProfile<S>,
    pub worst_cost: S,
    pub opt: OptResult<S>,
    pub ratio: S,
}

/// Worst supportable cost over the exact optimum.
pub fn mechanism_poa<S: Scalar>(
    inst: &Instance<S>,
    budget: u128,
    eps: S,
) -> Result<MechPoa<S>, MechanismError> {
    let opt = optimal::solve(inst, budget)?;
    if !opt.exact {
        return Err(MechanismError::InexactOptimum {
            cost: opt.cost.to_f64().unwrap_or(f64::NAN),
            lower_bound: opt.lower_bound.and_then(|b| b.to_f64()),
        });
    }
    let (worst, worst_cost) = worst_supportable(inst, budget, eps)?;
    Ok(MechPoa {
        ratio: worst_cost / opt.cost,
        worst,
        worst_cost,
        opt,
    })
}
