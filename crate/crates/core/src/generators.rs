//! Instance families with known equilibria and optima, plus seeded random
//! instances.
//!
//! Each named family carries an equilibrium witness, a reference optimal
//! assignment and closed-form predictions for both costs, and checks all of
//! them when it is built.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use thiserror::Error;

use crate::equilibrium::is_nash;
use crate::mechanism::{is_mechanism_nash, MechProfile, MechanismError, PaymentProfile};
use crate::model::{total_cost, Assignment, CostFunction, Instance, Job, Meta, ModelError};
use crate::scalar::{approx_eq, Scalar};

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid parameters: {0}")]
    Domain(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
    #[error("family {family} failed self-check: {what}")]
    SelfCheck { family: String, what: String },
}

/// Which equilibrium notion the canonical witness satisfies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EquilibriumKind {
    /// Equal cost shares, no payments.
    Base,
    /// Payment mechanism; the witness comes with payments.
    Mechanism,
}

#[derive(Debug, Clone)]
pub struct NamedFamily<S> {
    pub name: String,
    pub instance: Instance<S>,
    pub canonical_ne: Assignment,
    pub canonical_payments: Option<PaymentProfile<S>>,
    pub ne_kind: EquilibriumKind,
    pub reference_opt: Assignment,
    pub provenance: &'static str,
    pub predicted_ne_cost: S,
    pub predicted_opt_cost: S,
}

impl<S: Scalar> NamedFamily<S> {
    pub fn ne_cost(&self) -> S {
        total_cost(&self.instance, &self.canonical_ne).expect("validated on construction")
    }

    pub fn opt_cost(&self) -> S {
        total_cost(&self.instance, &self.reference_opt).expect("validated on construction")
    }

    pub fn mech_profile(&self) -> Option<MechProfile<S>> {
        self.canonical_payments
            .clone()
            .map(|p| MechProfile::new(self.canonical_ne.clone(), p).expect("lengths checked"))
    }

    /// Witness is an equilibrium of its kind, the optimum is feasible, and the
    /// predicted costs match the recomputed ones within `eps`.
    pub fn validate(&self, eps: S) -> Result<(), GenError> {
        let fail = |what: String| GenError::SelfCheck {
            family: self.name.clone(),
            what,
        };
        let ne_cost = total_cost(&self.instance, &self.canonical_ne)?;
        let opt_cost = total_cost(&self.instance, &self.reference_opt)?;
        match self.ne_kind {
            EquilibriumKind::Base => {
                let v = is_nash(&self.instance, &self.canonical_ne, eps)?;
                if !v.holds() {
                    return Err(fail(format!(
                        "witness is not an equilibrium: {:?}",
                        v.violations[0]
                    )));
                }
            }
            EquilibriumKind::Mechanism => {
                let p = self
                    .mech_profile()
                    .ok_or_else(|| fail("mechanism witness without payments".into()))?;
                let v = is_mechanism_nash(&self.instance, &p, eps)?;
                if !v.holds() {
                    return Err(fail(format!(
                        "witness is not a mechanism equilibrium: {:?}",
                        v.violations[0]
                    )));
                }
            }
        }
        if !approx_eq(ne_cost, self.predicted_ne_cost, eps) {
            return Err(fail(format!(
                "equilibrium cost {ne_cost} != predicted {}",
                self.predicted_ne_cost
            )));
        }
        if !approx_eq(opt_cost, self.predicted_opt_cost, eps) {
            return Err(fail(format!(
                "optimal cost {opt_cost} != predicted {}",
                self.predicted_opt_cost
            )));
        }
        Ok(())
    }

    fn checked(self) -> Result<Self, GenError> {
        self.validate(S::default_epsilon())?;
        Ok(self)
    }
}

fn meta(pairs: serde_json::Value) -> Meta {
    match pairs {
        serde_json::Value::Object(m) => m,
        _ => Meta::new(),
    }
}

/// `h² + h` jobs on slots `-h..=h`: for each `j` in `1..=h`, `j` jobs may use
/// `[-j, 0]` and `j` jobs may use `[0, j]`. Slot `t` is stored at index
/// `t + h + 1`. The witness puts the `[-j, 0]` jobs on `-j` and the `[0, j]`
/// jobs on `j`; the optimum puts everyone on `0`.
pub fn gen_valley<S: Scalar>(h: usize, d: S) -> Result<NamedFamily<S>, GenError> {
    if h == 0 {
        return Err(GenError::Domain("valley needs h >= 1".into()));
    }
    if !(d > S::zero() && d < S::one()) {
        return Err(GenError::Domain(format!("valley needs 0 < d < 1, got {d}")));
    }
    let shift = h + 1;
    let zero = shift;
    let mut jobs = Vec::new();
    let mut ne = Vec::new();
    for j in 1..=h {
        for _ in 0..j {
            jobs.push(Job::new(zero - j, zero + 1));
            ne.push(zero - j);
        }
        for _ in 0..j {
            jobs.push(Job::new(zero, zero + j + 1));
            ne.push(zero + j);
        }
    }
    let n = jobs.len();
    let cost = CostFunction::monomial(d)?;
    let instance = Instance::with_meta(
        cost,
        2 * h + 1,
        jobs,
        meta(json!({"family": "valley", "h": h, "degree": d.to_f64(), "slot_shift": shift})),
    )?;
    let predicted_ne_cost = (1..=h).map(|j| S::lit(2.0) * cost.eval(j)).sum();
    NamedFamily {
        name: format!("valley(h={h},d={d})"),
        instance,
        canonical_ne: Assignment::new(ne),
        canonical_payments: None,
        ne_kind: EquilibriumKind::Base,
        reference_opt: Assignment::uniform(n, zero),
        provenance: "valley lower bound: h²+h jobs over 2h+1 slots, |t| jobs on slot t",
        predicted_ne_cost,
        predicted_opt_cost: cost.eval(n),
    }
    .checked()
}

/// (label, number of slots) from the first slot onward.
const QUADRATIC_LABELS: [(usize, usize); 7] =
    [(6, 1), (5, 2), (4, 5), (3, 20), (2, 60), (1, 120), (0, 120)];

/// Quadratic-cost instance whose worst equilibrium costs 706 against an
/// optimum of 352. Slots are laid out by label (one "6", two "5", five "4",
/// twenty "3", sixty "2", 120 "1", 120 "0"); a slot labelled `x` holds `x`
/// jobs at equilibrium, each allowed every slot from the first through the
/// last slot labelled `x - 1`.
pub fn gen_quadratic<S: Scalar>() -> Result<NamedFamily<S>, GenError> {
    // last slot index of each label region, 1-based
    let mut last = [0usize; 7];
    let mut first = [0usize; 7];
    let mut next = 1;
    for &(label, count) in &QUADRATIC_LABELS {
        first[label] = next;
        next += count;
        last[label] = next - 1;
    }
    let horizon = next - 1;

    let mut jobs = Vec::new();
    let mut ne = Vec::new();
    let mut opt = Vec::new();
    // jobs of labels 6 and 5 go two per slot on the first eight slots
    let mut paired = 0usize;
    for &(label, count) in &QUADRATIC_LABELS {
        if label == 0 {
            continue;
        }
        let mut spread = 0usize;
        for slot in first[label]..first[label] + count {
            for _ in 0..label {
                jobs.push(Job::new(1, last[label - 1] + 1));
                ne.push(slot);
                if label >= 5 {
                    opt.push(1 + paired / 2);
                    paired += 1;
                } else {
                    opt.push(first[label - 1] + spread);
                    spread += 1;
                }
            }
        }
    }
    let cost = CostFunction::monomial(S::lit(2.0))?;
    let instance = Instance::with_meta(cost, horizon, jobs, meta(json!({"family": "quadratic"})))?;
    NamedFamily {
        name: "quadratic".into(),
        instance,
        canonical_ne: Assignment::new(ne),
        canonical_payments: None,
        ne_kind: EquilibriumKind::Base,
        reference_opt: Assignment::new(opt),
        provenance: "c(x)=x² instance with labelled slots; equilibrium 706, optimum 352",
        predicted_ne_cost: S::lit(706.0),
        predicted_opt_cost: S::lit(352.0),
    }
    .checked()
}

/// Unit costs, horizon 3, jobs `[1, 3)` and `[2, 4)`. Under the mechanism
/// the jobs can sit on slots 1 and 3, each paying 1 (cost 2); the optimum
/// shares slot 2 (cost 1).
pub fn gen_two_job_unit<S: Scalar>() -> Result<NamedFamily<S>, GenError> {
    let instance = Instance::with_meta(
        CostFunction::Unit,
        3,
        vec![Job::new(1, 3), Job::new(2, 4)],
        meta(json!({"family": "two_job_unit"})),
    )?;
    NamedFamily {
        name: "two_job_unit".into(),
        instance,
        canonical_ne: Assignment::new(vec![1, 3]),
        canonical_payments: Some(PaymentProfile::new(vec![S::one(), S::one()])?),
        ne_kind: EquilibriumKind::Mechanism,
        reference_opt: Assignment::uniform(2, 2),
        provenance: "two-job unit-cost mechanism lower bound of 2",
        predicted_ne_cost: S::lit(2.0),
        predicted_opt_cost: S::one(),
    }
    .checked()
}

fn integral_power<S: Scalar>(n: usize, e: S) -> Option<usize> {
    let x = S::from_count(n).powf(e);
    let r = x.round();
    if (x - r).abs() <= S::lit(1e-6) * r.max(S::one()) {
        r.to_usize()
    } else {
        None
    }
}

/// `m = n^d` slots, job `j < m` restricted to slot `j + 1`, and `n - m`
/// unrestricted jobs. Witness: the unrestricted jobs spread evenly
/// (`n^(1-d) - 1` per slot) paying nothing while each restricted job pays its
/// whole slot. Optimum: every unrestricted job on slot 1.
pub fn gen_freeloader<S: Scalar>(n: usize, d: S) -> Result<NamedFamily<S>, GenError> {
    if !(d > S::zero() && d < S::one()) {
        return Err(GenError::Domain(format!(
            "freeloader needs 0 < d < 1, got {d}"
        )));
    }
    let (m, k) = match (integral_power(n, d), integral_power(n, S::one() - d)) {
        (Some(m), Some(k)) if m >= 1 && m * k == n => (m, k),
        _ => {
            return Err(GenError::Domain(format!(
                "freeloader needs integral n^d and n^(1-d), got n={n}, d={d}"
            )))
        }
    };
    let cost = CostFunction::monomial(d)?;
    let mut jobs: Vec<Job> = (1..=m).map(|t| Job::new(t, t + 1)).collect();
    let mut ne: Vec<usize> = (1..=m).collect();
    let mut payments = vec![cost.eval(k); m];
    for t in 1..=m {
        for _ in 0..k - 1 {
            jobs.push(Job::new(1, m + 1));
            ne.push(t);
            payments.push(S::zero());
        }
    }
    let mut opt: Vec<usize> = (1..=m).collect();
    opt.resize(n, 1);
    let instance = Instance::with_meta(
        cost,
        m,
        jobs,
        meta(json!({"family": "freeloader", "n": n, "degree": d.to_f64()})),
    )?;
    NamedFamily {
        name: format!("freeloader(n={n},d={d})"),
        instance,
        canonical_ne: Assignment::new(ne),
        canonical_payments: Some(PaymentProfile::new(payments)?),
        ne_kind: EquilibriumKind::Mechanism,
        reference_opt: Assignment::new(opt),
        provenance: "mechanism lower bound with single-slot payers and free riders",
        predicted_ne_cost: S::from_count(m) * cost.eval(k),
        predicted_opt_cost: cost.eval(n - m + 1) + S::from_count(m - 1),
    }
    .checked()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RandomShape {
    /// Windows drawn uniformly from every valid `[r, d)`.
    General,
    /// Windows drawn uniformly from those containing the given slot.
    CommonSlot(usize),
}

/// Seeded random instance; the same arguments always give the same instance.
pub fn gen_random<S: Scalar>(
    n: usize,
    horizon: usize,
    seed: u64,
    shape: RandomShape,
    cost: CostFunction<S>,
) -> Result<Instance<S>, GenError> {
    if n == 0 || horizon == 0 {
        return Err(GenError::Domain("random instances need n, T >= 1".into()));
    }
    let windows: Vec<Job> = (1..=horizon)
        .flat_map(|r| (r + 1..=horizon + 1).map(move |d| Job::new(r, d)))
        .filter(|j| match shape {
            RandomShape::General => true,
            RandomShape::CommonSlot(t) => j.allows(t),
        })
        .collect();
    if let RandomShape::CommonSlot(t) = shape {
        if t == 0 || t > horizon {
            return Err(GenError::Domain(format!(
                "common slot {t} outside 1..={horizon}"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jobs = (0..n)
        .map(|_| windows[rng.gen_range(0..windows.len())])
        .collect();
    let mut m = meta(json!({"family": "random", "seed": seed}));
    if let RandomShape::CommonSlot(t) = shape {
        m.insert("common_slot".into(), json!(t));
    }
    Ok(Instance::with_meta(cost, horizon, jobs, m)?)
}
