use std::fmt;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{poa_family, write_reports_csv, HarnessConfig, HarnessError};
use crate::equilibrium::{is_nash, rosenthal_potential, run_brd, worst_nash, BrdOrder};
use crate::generators::{
    gen_freeloader, gen_quadratic, gen_random, gen_two_job_unit, gen_valley, GenError, RandomShape,
};
use crate::mechanism::{
    is_mechanism_nash, mechanism_poa, payments_common_slot, payments_unit_optimal,
};
use crate::model::{total_cost, Assignment};
use crate::optimal::{opt_bruteforce, opt_concave_search, opt_flow_convex, opt_unit_greedy, solve};
use crate::search::SearchSpace;
use crate::{CostFunction, Instance, MechProfile, NamedFamily, OptResult, PaymentProfile};

/// Where the checks get their closed-form families. Tests swap in a broken
/// provider to make sure the checks notice.
pub trait FamilyProvider: Sync {
    fn quadratic(&self) -> Result<NamedFamily, GenError> {
        gen_quadratic()
    }
    fn valley(&self, h: usize, d: f64) -> Result<NamedFamily, GenError> {
        gen_valley(h, d)
    }
    fn two_job_unit(&self) -> Result<NamedFamily, GenError> {
        gen_two_job_unit()
    }
    fn freeloader(&self, n: usize, d: f64) -> Result<NamedFamily, GenError> {
        gen_freeloader(n, d)
    }
}

/// The stock generators.
pub struct StockFamilies;

impl FamilyProvider for StockFamilies {}

pub const CRITERIA: [(u8, &str); 10] = [
    (1, "quadratic counterexample"),
    (2, "valley family"),
    (3, "valley asymptote"),
    (4, "unit mechanism ratio at most 2"),
    (5, "unit mechanism equilibrium existence"),
    (6, "common-slot constant"),
    (7, "freeloader family"),
    (8, "solver oracle equivalence"),
    (9, "potential and best-response dynamics"),
    (10, "mechanism payment structure"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = ">")]
    Gt,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Eq => "==",
            Relation::Le => "<=",
            Relation::Ge => ">=",
            Relation::Gt => ">",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub label: String,
    pub observed: f64,
    pub relation: Relation,
    pub expected: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckRow {
    pub fn new(
        label: impl Into<String>,
        observed: f64,
        relation: Relation,
        expected: f64,
        tolerance: f64,
    ) -> Self {
        let passed = match relation {
            Relation::Eq => (observed - expected).abs() <= tolerance,
            Relation::Le => observed <= expected + tolerance,
            Relation::Ge => observed >= expected - tolerance,
            Relation::Gt => observed > expected,
        };
        CheckRow {
            label: label.into(),
            observed,
            relation,
            expected,
            tolerance,
            passed,
        }
    }

    fn eq(label: impl Into<String>, observed: f64, expected: f64, tol: f64) -> Self {
        Self::new(label, observed, Relation::Eq, expected, tol)
    }

    fn le(label: impl Into<String>, observed: f64, bound: f64, tol: f64) -> Self {
        Self::new(label, observed, Relation::Le, bound, tol)
    }

    fn ge(label: impl Into<String>, observed: f64, bound: f64, tol: f64) -> Self {
        Self::new(label, observed, Relation::Ge, bound, tol)
    }

    fn flag(label: impl Into<String>, ok: bool) -> Self {
        Self::eq(label, if ok { 1.0 } else { 0.0 }, 1.0, 0.0)
    }

    fn count(label: impl Into<String>, observed: usize, at_least: usize) -> Self {
        Self::ge(label, observed as f64, at_least as f64, 0.0)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub title: &'static str,
    pub rows: Vec<CheckRow>,
    /// Set when the criterion could not run to completion.
    pub error: Option<String>,
}

impl CriterionResult {
    pub fn passed(&self) -> bool {
        self.error.is_none() && !self.rows.is_empty() && self.rows.iter().all(|r| r.passed)
    }
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        write!(f, "criterion {:>2} {verdict} {}", self.id, self.title)?;
        match &self.error {
            Some(e) => write!(f, " (error: {e})"),
            None => {
                let failed: Vec<_> = self.rows.iter().filter(|r| !r.passed).collect();
                write!(
                    f,
                    " ({}/{} checks)",
                    self.rows.len() - failed.len(),
                    self.rows.len()
                )?;
                for r in failed {
                    write!(
                        f,
                        "; {}: observed {} expected {} {} (tol {})",
                        r.label, r.observed, r.relation, r.expected, r.tolerance
                    )?;
                }
                Ok(())
            }
        }
    }
}

pub fn write_check_table<W: Write>(
    results: &[CriterionResult],
    writer: W,
) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "criterion",
        "check",
        "observed",
        "relation",
        "expected",
        "tolerance",
        "passed",
    ])?;
    for c in results {
        if let Some(e) = &c.error {
            w.write_record([
                &c.id.to_string(),
                &format!("error: {e}"),
                "",
                "",
                "",
                "",
                "false",
            ])?;
        }
        for r in &c.rows {
            w.write_record([
                c.id.to_string(),
                r.label.clone(),
                r.observed.to_string(),
                r.relation.to_string(),
                r.expected.to_string(),
                r.tolerance.to_string(),
                r.passed.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Runs one criterion by number. Errors inside the checks become a failed
/// result rather than an `Err`.
pub fn run_criterion(id: u8, cfg: &HarnessConfig, fams: &dyn FamilyProvider) -> CriterionResult {
    let title = CRITERIA
        .iter()
        .find(|(k, _)| *k == id)
        .map_or("unknown criterion", |(_, t)| *t);
    let rows = match id {
        1 => quadratic(cfg, fams),
        2 => valley(cfg, fams),
        3 => asymptote(fams),
        4 => unit_ratio(cfg, fams),
        5 => unit_existence(cfg),
        6 => common_slot(cfg),
        7 => freeloader(cfg, fams),
        8 => solver_equivalence(cfg),
        9 => potential_dynamics(cfg),
        10 => payment_structure(cfg),
        _ => Err(HarnessError::Gen(GenError::Domain(format!(
            "no criterion {id}"
        )))),
    };
    match rows {
        Ok(rows) => CriterionResult {
            id,
            title,
            rows,
            error: None,
        },
        Err(e) => CriterionResult {
            id,
            title,
            rows: Vec::new(),
            error: Some(e.to_string()),
        },
    }
}

/// Runs every criterion. With `out`, writes `summary.csv`, `reports.csv` and
/// the witnesses for the named families into that directory.
pub fn reproduce(
    cfg: &HarnessConfig,
    fams: &dyn FamilyProvider,
    out: Option<&Path>,
) -> Result<Vec<CriterionResult>, HarnessError> {
    let results: Vec<_> = CRITERIA
        .iter()
        .map(|(id, _)| run_criterion(*id, cfg, fams))
        .collect();
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        write_check_table(&results, std::fs::File::create(dir.join("summary.csv"))?)?;
        let families = [
            fams.quadratic(),
            fams.valley(2, 0.5),
            fams.two_job_unit(),
            fams.freeloader(16, 0.5),
            fams.freeloader(81, 0.5),
        ];
        let mut reports = Vec::new();
        for fam in families.into_iter().flatten() {
            let mut outcome = poa_family(
                &fam,
                &HarnessConfig {
                    mechanism: true,
                    ..cfg.clone()
                },
            )?;
            outcome.write_witnesses(dir)?;
            reports.push(outcome.report);
        }
        write_reports_csv(&reports, std::fs::File::create(dir.join("reports.csv"))?)?;
    }
    Ok(results)
}

type Rows = Result<Vec<CheckRow>, HarnessError>;

fn seconds(start: Instant) -> f64 {
    start.elapsed().as_secs_f64()
}

fn quadratic(cfg: &HarnessConfig, fams: &dyn FamilyProvider) -> Rows {
    let start = Instant::now();
    let f = fams.quadratic()?;
    let ne = total_cost(&f.instance, &f.canonical_ne)?;
    let opt = opt_flow_convex(&f.instance)?;
    Ok(vec![
        CheckRow::eq("canonical equilibrium cost", ne, 706.0, 0.0),
        CheckRow::flag(
            "canonical profile is an equilibrium",
            is_nash(&f.instance, &f.canonical_ne, cfg.eps)?.holds(),
        ),
        CheckRow::eq("flow optimum cost", opt.cost, 352.0, 0.0),
        CheckRow::new("ratio", ne / opt.cost, Relation::Gt, 2.0, 0.0),
        CheckRow::le("runtime seconds", seconds(start), 10.0, 0.0),
    ])
}

fn valley(cfg: &HarnessConfig, fams: &dyn FamilyProvider) -> Rows {
    let start = Instant::now();
    let mut rows = Vec::new();
    for d in [0.25, 0.5, 0.75] {
        for h in 1..=5usize {
            let f = fams.valley(h, d)?;
            let tag = format!("h={h} d={d}");
            let ne = total_cost(&f.instance, &f.canonical_ne)?;
            let closed_ne: f64 = (1..=h).map(|j| 2.0 * (j as f64).powf(d)).sum();
            let closed_opt = ((h * h + h) as f64).powf(d);
            rows.push(CheckRow::flag(
                format!("{tag} canonical profile is an equilibrium"),
                is_nash(&f.instance, &f.canonical_ne, cfg.eps)?.holds(),
            ));
            rows.push(CheckRow::eq(
                format!("{tag} equilibrium cost"),
                ne,
                closed_ne,
                1e-9,
            ));
            rows.push(CheckRow::eq(
                format!("{tag} reference optimum cost"),
                total_cost(&f.instance, &f.reference_opt)?,
                closed_opt,
                1e-9,
            ));
            rows.push(CheckRow::eq(
                format!("{tag} solver optimum"),
                solve(&f.instance, cfg.budget)?.cost,
                closed_opt,
                1e-9,
            ));
            if h <= 2 {
                let (_, worst) = worst_nash(&f.instance, cfg.budget, cfg.eps)?;
                rows.push(CheckRow::ge(
                    format!("{tag} worst equilibrium"),
                    worst,
                    closed_ne,
                    1e-9,
                ));
            }
        }
    }
    rows.push(CheckRow::le("runtime seconds", seconds(start), 30.0, 0.0));
    Ok(rows)
}

fn asymptote(fams: &dyn FamilyProvider) -> Rows {
    let d = 0.5;
    let mut rows = Vec::new();
    for h in 10..=30usize {
        let f = fams.valley(h, d)?;
        let n = f.instance.n() as f64;
        let ratio =
            total_cost(&f.instance, &f.canonical_ne)? / total_cost(&f.instance, &f.reference_opt)?;
        let predicted = 2.0 * n.powf((1.0 - d) / 2.0) / (1.0 + d);
        // within [0.5, 1.5] of the prediction
        rows.push(CheckRow::eq(
            format!("h={h} ratio over asymptote"),
            ratio / predicted,
            1.0,
            0.5,
        ));
    }
    Ok(rows)
}

/// Seeded corpus of small random instances. `salt` separates corpora drawn
/// from the same run seed.
fn corpus(
    cfg: &HarnessConfig,
    salt: u64,
    count: usize,
    max_n: usize,
    max_t: usize,
    common_slot: bool,
    cost: CostFunction,
) -> Result<Vec<Instance>, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    (0..count)
        .map(|_| {
            let n = rng.gen_range(1..=max_n);
            let t = rng.gen_range(1..=max_t);
            let shape = if common_slot {
                RandomShape::CommonSlot(rng.gen_range(1..=t))
            } else {
                RandomShape::General
            };
            Ok(gen_random(n, t, rng.gen(), shape, cost)?)
        })
        .collect()
}

fn unit_corpus(cfg: &HarnessConfig) -> Result<Vec<Instance>, HarnessError> {
    corpus(cfg, 4, 120, 6, 6, false, CostFunction::Unit)
}

fn max_of(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

fn unit_ratio(cfg: &HarnessConfig, fams: &dyn FamilyProvider) -> Rows {
    let start = Instant::now();
    let insts = unit_corpus(cfg)?;
    let ratios = insts
        .par_iter()
        .map(|inst| Ok(mechanism_poa(inst, cfg.budget, cfg.eps)?.ratio))
        .collect::<Result<Vec<f64>, HarnessError>>()?;
    let two = fams.two_job_unit()?;
    let pair = mechanism_poa(&two.instance, cfg.budget, cfg.eps)?;
    Ok(vec![
        CheckRow::count("instances", ratios.len(), 100),
        CheckRow::le("largest mechanism ratio", max_of(ratios), 2.0, 1e-9),
        CheckRow::eq("two-job instance mechanism ratio", pair.ratio, 2.0, 1e-9),
        CheckRow::le("runtime seconds", seconds(start), 60.0, 0.0),
    ])
}

fn unit_existence(cfg: &HarnessConfig) -> Rows {
    let insts = unit_corpus(cfg)?;
    let verified = insts
        .par_iter()
        .map(|inst| {
            let opt = opt_unit_greedy(inst)?;
            let payments = payments_unit_optimal(inst, &opt.assignment)?;
            let profile = MechProfile::new(opt.assignment, payments)?;
            Ok(is_mechanism_nash(inst, &profile, cfg.eps)?.holds())
        })
        .collect::<Result<Vec<bool>, HarnessError>>()?;
    let ok = verified.iter().filter(|&&v| v).count();
    Ok(vec![
        CheckRow::count("instances", insts.len(), 100),
        CheckRow::eq(
            "optima whose payments verify",
            ok as f64,
            insts.len() as f64,
            0.0,
        ),
    ])
}

/// Mechanism ratio bound for common-slot instances.
pub(crate) fn common_slot_bound(d: f64) -> f64 {
    2.0 / (1.0 - d.powf(d / (1.0 - d)))
}

fn common_slot(cfg: &HarnessConfig) -> Rows {
    let mut rows = Vec::new();
    for (salt, d, bound) in [
        (60, 0.5, 4.0),
        (61, 0.25, common_slot_bound(0.25)),
        (62, 0.75, common_slot_bound(0.75)),
    ] {
        let insts = corpus(cfg, salt, 100, 6, 6, true, CostFunction::monomial(d)?)?;
        let per = insts
            .par_iter()
            .map(|inst| {
                let ratio = mechanism_poa(inst, cfg.budget, cfg.eps)?.ratio;
                let t = inst.common_slots().start;
                let opt = Assignment::uniform(inst.n(), t);
                let payments = payments_common_slot(inst, &opt)?;
                let ok =
                    is_mechanism_nash(inst, &MechProfile::new(opt, payments)?, cfg.eps)?.holds();
                Ok((ratio, ok))
            })
            .collect::<Result<Vec<(f64, bool)>, HarnessError>>()?;
        rows.push(CheckRow::count(format!("d={d} instances"), per.len(), 100));
        rows.push(CheckRow::le(
            format!("d={d} largest mechanism ratio"),
            max_of(per.iter().map(|p| p.0)),
            bound,
            1e-9,
        ));
        rows.push(CheckRow::eq(
            format!("d={d} fair-share profiles that verify"),
            per.iter().filter(|p| p.1).count() as f64,
            per.len() as f64,
            0.0,
        ));
    }
    Ok(rows)
}

fn freeloader(cfg: &HarnessConfig, fams: &dyn FamilyProvider) -> Rows {
    let d = 0.5;
    let mut rows = Vec::new();
    let mut ratios = Vec::new();
    for n in [16usize, 81] {
        let f = fams.freeloader(n, d)?;
        let nf = n as f64;
        let verified = match f.mech_profile() {
            Some(p) => is_mechanism_nash(&f.instance, &p, cfg.eps)?.holds(),
            None => false,
        };
        rows.push(CheckRow::flag(
            format!("n={n} canonical profile verifies"),
            verified,
        ));
        let ne = total_cost(&f.instance, &f.canonical_ne)?;
        let opt = total_cost(&f.instance, &f.reference_opt)?;
        let k = nf.powf(d);
        rows.push(CheckRow::eq(
            format!("n={n} equilibrium cost"),
            ne,
            k * nf.powf(1.0 - d).powf(d),
            1e-9,
        ));
        rows.push(CheckRow::eq(
            format!("n={n} optimum cost"),
            opt,
            (nf - k + 1.0).powf(d) + (k - 1.0),
            1e-9,
        ));
        ratios.push(ne / opt);
    }
    rows.push(CheckRow::new(
        "ratio growth from n=16 to n=81",
        ratios[1] - ratios[0],
        Relation::Gt,
        0.0,
        0.0,
    ));
    Ok(rows)
}

fn solver_equivalence(cfg: &HarnessConfig) -> Rows {
    let start = Instant::now();
    let regimes: [(Option<f64>, &str); 7] = [
        (None, "unit"),
        (Some(1.5), "flow"),
        (Some(2.0), "flow"),
        (Some(3.0), "flow"),
        (Some(0.25), "search"),
        (Some(0.5), "search"),
        (Some(0.75), "search"),
    ];
    let mut rows = Vec::new();
    for (i, (d, solver)) in regimes.into_iter().enumerate() {
        let cost = match d {
            None => CostFunction::Unit,
            Some(d) => CostFunction::monomial(d)?,
        };
        let insts = corpus(cfg, 80 + i as u64, 100, 8, 6, false, cost)?;
        let gaps = insts
            .par_iter()
            .map(|inst| {
                let special: OptResult = match solver {
                    "unit" => opt_unit_greedy(inst)?,
                    "flow" => opt_flow_convex(inst)?,
                    _ => opt_concave_search(inst, cfg.budget)?,
                };
                let brute = opt_bruteforce(inst, cfg.budget)?;
                let consistent = total_cost(inst, &special.assignment)? == special.cost;
                Ok(if special.exact && consistent {
                    (special.cost - brute.cost).abs()
                } else {
                    f64::INFINITY
                })
            })
            .collect::<Result<Vec<f64>, HarnessError>>()?;
        let tag = d.map_or("unit".to_string(), |d| format!("d={d}"));
        rows.push(CheckRow::count(format!("{tag} instances"), gaps.len(), 100));
        rows.push(CheckRow::le(
            format!("{tag} largest gap to brute force"),
            max_of(gaps),
            0.0,
            1e-9,
        ));
    }
    rows.push(CheckRow::le("runtime seconds", seconds(start), 300.0, 0.0));
    Ok(rows)
}

fn random_assignment(inst: &Instance, rng: &mut ChaCha8Rng) -> Assignment {
    Assignment::new(
        inst.jobs()
            .iter()
            .map(|j| rng.gen_range(j.window()))
            .collect(),
    )
}

fn potential_dynamics(cfg: &HarnessConfig) -> Rows {
    let costs = [
        CostFunction::Unit,
        CostFunction::monomial(0.25)?,
        CostFunction::monomial(0.5)?,
        CostFunction::monomial(0.75)?,
        CostFunction::monomial(1.0)?,
        CostFunction::monomial(1.5)?,
        CostFunction::monomial(2.0)?,
        CostFunction::monomial(3.0)?,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0009);
    let mut moves = 0usize;
    let mut rising = 0usize;
    let mut drift: f64 = 0.0;
    let mut brd_runs = 0usize;
    let mut brd_ok = 0usize;
    let mut round = 0u64;
    while moves < 10_000 {
        let cost = costs[round as usize % costs.len()];
        round += 1;
        let n = rng.gen_range(2..=8);
        let t = rng.gen_range(2..=6);
        let inst = gen_random(n, t, rng.gen(), RandomShape::General, cost)?;
        let a = random_assignment(&inst, &mut rng);
        let loads = inst.loads(&a)?;
        let phi = rosenthal_potential(&inst, &a)?;
        let c = inst.cost();
        for j in 0..n {
            let from = a.slot(j);
            let now = c.share(loads.load(from))?;
            for to in inst.job(j).window().filter(|&s| s != from) {
                let then = c.share(loads.load(to) + 1)?;
                if then < now - cfg.eps {
                    let mut b = a.clone();
                    b.slots[j] = to;
                    let after = rosenthal_potential(&inst, &b)?;
                    moves += 1;
                    if after >= phi {
                        rising += 1;
                    }
                    drift = drift.max(((phi - after) - (now - then)).abs());
                }
            }
        }
        if round <= 400 {
            let order = if round.is_multiple_of(2) {
                BrdOrder::RoundRobin
            } else {
                BrdOrder::Random(rng.gen())
            };
            let (end, _) = run_brd(&inst, &a, order, 1_000_000, cfg.eps)?;
            brd_runs += 1;
            if is_nash(&inst, &end, cfg.eps)?.holds() {
                brd_ok += 1;
            }
        }
    }
    let mut rows = vec![
        CheckRow::count("improving moves sampled", moves, 10_000),
        CheckRow::eq(
            "moves that did not lower the potential",
            rising as f64,
            0.0,
            0.0,
        ),
        CheckRow::le("potential drop minus share gain", drift, 0.0, 1e-9),
        CheckRow::eq(
            "dynamics runs ending in equilibrium",
            brd_ok as f64,
            brd_runs as f64,
            0.0,
        ),
    ];
    for d in [0.25, 0.5, 0.75] {
        for h in 1..=3 {
            let f = gen_valley(h, d)?;
            let inst = &f.instance;
            let limit = inst.n() * inst.horizon() * 50;
            let start = Assignment::uniform(inst.n(), inst.common_slots().start);
            let tag = format!("valley h={h} d={d}");
            match run_brd(inst, &start, BrdOrder::RoundRobin, limit, cfg.eps) {
                Ok((end, trace)) => {
                    rows.push(CheckRow::le(
                        format!("{tag} steps"),
                        trace.steps.len() as f64,
                        limit as f64,
                        0.0,
                    ));
                    rows.push(CheckRow::flag(
                        format!("{tag} ends in equilibrium"),
                        is_nash(inst, &end, cfg.eps)?.holds(),
                    ));
                }
                Err(_) => rows.push(CheckRow::flag(
                    format!("{tag} terminates within {limit} steps"),
                    false,
                )),
            }
        }
    }
    Ok(rows)
}

/// Payment grid for the payment-structure checks: multiples of a quarter in [0, 1].
const GRID: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

fn payment_structure(cfg: &HarnessConfig) -> Rows {
    let insts = corpus(cfg, 10, 150, 4, 4, false, CostFunction::Unit)?;
    let mut found = 0usize;
    let mut zero_payment = 0usize;
    let mut tightness = 0usize;
    for inst in &insts {
        let n = inst.n();
        let shards = SearchSpace::new(inst, false).fold(
            || (0usize, 0usize, 0usize),
            |acc, slots, loads| {
                let a = Assignment::new(slots.to_vec());
                let mut digits = vec![0usize; n];
                loop {
                    let xi: Vec<f64> = digits.iter().map(|&k| GRID[k]).collect();
                    let p = MechProfile::new(
                        a.clone(),
                        PaymentProfile::new(xi.clone()).expect("grid payments are valid"),
                    )
                    .expect("lengths match");
                    if is_mechanism_nash(inst, &p, cfg.eps).is_ok_and(|v| v.holds()) {
                        acc.0 += 1;
                        let lonely = |j: usize| {
                            inst.job(j)
                                .window()
                                .all(|t| t == slots[j] || loads.load(t) == 0)
                        };
                        if (0..n).any(|j| xi[j] != 0.0 && !lonely(j)) {
                            acc.1 += 1;
                        }
                        let tight = loads.occupied().all(|(t, l)| {
                            let paid: f64 = (0..n).filter(|&j| slots[j] == t).map(|j| xi[j]).sum();
                            (paid - inst.cost().eval(l)).abs() <= 1e-9
                        });
                        if !tight {
                            acc.2 += 1;
                        }
                    }
                    // next grid point
                    let mut i = 0;
                    while i < n && digits[i] == GRID.len() - 1 {
                        digits[i] = 0;
                        i += 1;
                    }
                    if i == n {
                        break;
                    }
                    digits[i] += 1;
                }
            },
        );
        for (f, z, t) in shards {
            found += f;
            zero_payment += z;
            tightness += t;
        }
    }
    Ok(vec![
        CheckRow::count("instances", insts.len(), 1),
        CheckRow::count("verified mechanism equilibria", found, 1),
        CheckRow::eq("zero-payment violations", zero_payment as f64, 0.0, 0.0),
        CheckRow::eq("tightness violations", tightness as f64, 0.0, 0.0),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relations() {
        assert!(CheckRow::eq("x", 1.0, 1.0 + 1e-12, 1e-9).passed);
        assert!(!CheckRow::eq("x", 1.0, 1.1, 1e-9).passed);
        assert!(CheckRow::le("x", 2.0 + 1e-12, 2.0, 1e-9).passed);
        assert!(!CheckRow::new("x", 2.0, Relation::Gt, 2.0, 0.0).passed);
    }

    #[test]
    fn bound_values() {
        assert!((common_slot_bound(0.5) - 4.0).abs() < 1e-12);
        assert!((common_slot_bound(0.25) - 5.4).abs() < 0.05);
        assert!((common_slot_bound(0.75) - 3.46).abs() < 0.01);
    }

    #[test]
    fn unknown_criterion_fails() {
        let r = run_criterion(42, &HarnessConfig::default(), &StockFamilies);
        assert!(!r.passed());
        assert!(r.error.is_some());
    }

    #[test]
    fn quadratic_passes() {
        let r = run_criterion(1, &HarnessConfig::default(), &StockFamilies);
        assert!(r.passed(), "{r}");
    }
}
