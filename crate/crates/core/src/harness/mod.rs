//! Experiment driver: price-of-anarchy reports with witness files, parameter
//! sweeps, and the reproduction checks.
//!
//! Everything here works in `f64`.

mod checks;
mod sweep;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::equilibrium::{is_nash, worst_nash, EquilibriumError};
use crate::generators::{EquilibriumKind, GenError};
use crate::mechanism::{is_mechanism_nash, worst_supportable, MechanismError};
use crate::model::{self, total_cost, Assignment, ModelError};
use crate::optimal::{self, OptError};
use crate::search::{SearchError, DEFAULT_BUDGET};
use crate::{Instance, MechProfile, NamedFamily, OptResult};

pub use checks::{
    reproduce, run_criterion, write_check_table, CheckRow, CriterionResult, FamilyProvider,
    StockFamilies, CRITERIA,
};
pub use sweep::{sweep, SweepFamily, SweepPoint, SweepRow};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
    #[error(transparent)]
    Opt(#[from] OptError),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("sweep grid is empty")]
    EmptyGrid,
    #[error("audit of {id}: {what}")]
    Audit { id: String, what: String },
}

#[derive(Debug, Clone)]
pub struct HarnessConfig {
    pub eps: f64,
    pub budget: u128,
    pub seed: u64,
    /// Also compute the worst supportable outcome under the mechanism.
    pub mechanism: bool,
    /// Fill `runtime_ms`; off makes reports byte-identical across runs.
    pub record_timing: bool,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            eps: crate::EPSILON,
            budget: DEFAULT_BUDGET,
            seed: 0,
            mechanism: false,
            record_timing: true,
        }
    }
}

pub const CSV_HEADER: [&str; 15] = [
    "instance_id",
    "n",
    "cost_kind",
    "degree",
    "base_worst_ne_cost",
    "mech_worst_cost",
    "opt_cost",
    "opt_method",
    "base_poa",
    "mech_poa",
    "predicted_ne_cost",
    "predicted_opt_cost",
    "runtime_ms",
    "seed",
    "epsilon",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoaReport {
    pub instance_id: String,
    pub n: usize,
    pub cost_kind: String,
    pub degree: Option<f64>,
    pub base_worst_ne_cost: Option<f64>,
    pub mech_worst_cost: Option<f64>,
    pub opt_cost: f64,
    pub opt_method: String,
    pub base_poa: Option<f64>,
    pub mech_poa: Option<f64>,
    pub predicted_ne_cost: Option<f64>,
    pub predicted_opt_cost: Option<f64>,
    pub runtime_ms: u64,
    pub seed: u64,
    pub epsilon: f64,
    /// Every numerator is a proven worst case and the denominator a proven
    /// optimum.
    pub exact: bool,
    /// Witness role -> file name, relative to the report.
    pub witnesses: BTreeMap<String, String>,
}

fn opt_field(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl PoaReport {
    pub fn csv_record(&self) -> [String; 15] {
        [
            self.instance_id.clone(),
            self.n.to_string(),
            self.cost_kind.clone(),
            opt_field(self.degree),
            opt_field(self.base_worst_ne_cost),
            opt_field(self.mech_worst_cost),
            self.opt_cost.to_string(),
            self.opt_method.clone(),
            opt_field(self.base_poa),
            opt_field(self.mech_poa),
            opt_field(self.predicted_ne_cost),
            opt_field(self.predicted_opt_cost),
            self.runtime_ms.to_string(),
            self.seed.to_string(),
            self.epsilon.to_string(),
        ]
    }
}

pub fn write_reports_csv<W: Write>(reports: &[PoaReport], writer: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for r in reports {
        w.write_record(r.csv_record())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_reports_json<W: Write>(reports: &[PoaReport], writer: W) -> Result<(), HarnessError> {
    serde_json::to_writer_pretty(writer, reports).map_err(ModelError::from)?;
    Ok(())
}

/// A report with the assignments behind each of its numbers.
#[derive(Debug, Clone)]
pub struct PoaOutcome {
    pub report: PoaReport,
    pub instance: Instance,
    pub base_ne: Option<Assignment>,
    pub mech_ne: Option<MechProfile>,
    pub opt: OptResult,
}

impl PoaOutcome {
    /// Writes the instance and every witness into `dir` and records the file
    /// names in the report.
    pub fn write_witnesses(&mut self, dir: &Path) -> Result<(), HarnessError> {
        fs::create_dir_all(dir)?;
        let id = sanitize(&self.report.instance_id);
        let mut files = BTreeMap::new();
        let mut put = |role: &str, body: String| -> Result<(), HarnessError> {
            let name = format!("{id}.{role}.json");
            fs::write(dir.join(&name), body)?;
            files.insert(role.to_string(), name);
            Ok(())
        };
        put("instance", self.instance.to_json())?;
        if let Some(a) = &self.base_ne {
            put(
                "base_ne",
                serde_json::to_string(a).map_err(ModelError::from)?,
            )?;
        }
        if let Some(p) = &self.mech_ne {
            put("mech_ne", p.to_json())?;
        }
        put("opt", self.opt.to_json())?;
        self.report.witnesses = files;
        Ok(())
    }
}

/// `valley(h=2,d=0.5)` becomes `valley-h2-d0.5`.
fn sanitize(id: &str) -> String {
    id.chars()
        .filter(|c| !matches!(c, '=' | ')'))
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '_' {
                c
            } else {
                '-'
            }
        })
        .collect()
}

fn ratio(num: Option<f64>, den: f64) -> Option<f64> {
    num.map(|x| x / den)
}

fn elapsed_ms(start: Instant, cfg: &HarnessConfig) -> u64 {
    if cfg.record_timing {
        start.elapsed().as_millis() as u64
    } else {
        0
    }
}

fn base_report(id: &str, inst: &Instance, opt: &OptResult, cfg: &HarnessConfig) -> PoaReport {
    PoaReport {
        instance_id: id.to_string(),
        n: inst.n(),
        cost_kind: inst.cost().kind_name().to_string(),
        degree: inst.cost().degree(),
        base_worst_ne_cost: None,
        mech_worst_cost: None,
        opt_cost: opt.cost,
        opt_method: opt.method.as_str().to_string(),
        base_poa: None,
        mech_poa: None,
        predicted_ne_cost: None,
        predicted_opt_cost: None,
        runtime_ms: 0,
        seed: cfg.seed,
        epsilon: cfg.eps,
        exact: opt.exact,
        witnesses: BTreeMap::new(),
    }
}

/// Exact price of anarchy: worst equilibrium (and worst supportable outcome
/// when `cfg.mechanism`) over the optimum. Numerators whose enumeration
/// exceeds the budget are left empty and the report is marked inexact.
pub fn poa_exact(
    inst: &Instance,
    id: &str,
    cfg: &HarnessConfig,
) -> Result<PoaOutcome, HarnessError> {
    let start = Instant::now();
    let opt = optimal::solve(inst, cfg.budget)?;
    let mut report = base_report(id, inst, &opt, cfg);

    let base_ne = match worst_nash(inst, cfg.budget, cfg.eps) {
        Ok((a, cost)) => {
            report.base_worst_ne_cost = Some(cost);
            Some(a)
        }
        Err(EquilibriumError::Search(SearchError::BudgetExceeded { .. })) => {
            report.exact = false;
            None
        }
        Err(e) => return Err(e.into()),
    };
    let mut mech_ne = None;
    if cfg.mechanism {
        match worst_supportable(inst, cfg.budget, cfg.eps) {
            Ok((p, cost)) => {
                report.mech_worst_cost = Some(cost);
                mech_ne = Some(p);
            }
            Err(MechanismError::Search(SearchError::BudgetExceeded { .. })) => report.exact = false,
            Err(e) => return Err(e.into()),
        }
    }
    report.base_poa = ratio(report.base_worst_ne_cost, opt.cost);
    report.mech_poa = ratio(report.mech_worst_cost, opt.cost);
    report.runtime_ms = elapsed_ms(start, cfg);
    Ok(PoaOutcome {
        report,
        instance: inst.clone(),
        base_ne,
        mech_ne,
        opt,
    })
}

/// Like [`poa_exact`] but falls back to the family's own witnesses when a
/// search is out of budget, and fills the predicted columns.
pub fn poa_family(fam: &NamedFamily, cfg: &HarnessConfig) -> Result<PoaOutcome, HarnessError> {
    let start = Instant::now();
    let mut out = poa_exact(&fam.instance, &fam.name, cfg)?;
    let r = &mut out.report;

    if !out.opt.exact {
        let reference = total_cost(&fam.instance, &fam.reference_opt)?;
        if reference < out.opt.cost {
            out.opt.assignment = fam.reference_opt.clone();
            out.opt.cost = reference;
            out.opt.method = optimal::OptMethod::Heuristic;
        }
        r.opt_cost = out.opt.cost;
        r.opt_method = out.opt.method.as_str().to_string();
    }
    if out.base_ne.is_none() && fam.ne_kind == EquilibriumKind::Base {
        r.base_worst_ne_cost = Some(fam.ne_cost());
        out.base_ne = Some(fam.canonical_ne.clone());
    }
    if cfg.mechanism && out.mech_ne.is_none() {
        if let Some(p) = fam.mech_profile() {
            r.mech_worst_cost = Some(fam.ne_cost());
            out.mech_ne = Some(p);
        }
    }
    r.base_poa = ratio(r.base_worst_ne_cost, r.opt_cost);
    r.mech_poa = ratio(r.mech_worst_cost, r.opt_cost);
    r.predicted_ne_cost = Some(fam.predicted_ne_cost);
    r.predicted_opt_cost = Some(fam.predicted_opt_cost);
    r.runtime_ms = elapsed_ms(start, cfg);
    Ok(out)
}

/// Recomputes every cost in `report` from the files it references in `dir`.
pub fn audit(report: &PoaReport, dir: &Path, eps: f64) -> Result<(), HarnessError> {
    let fail = |what: String| HarnessError::Audit {
        id: report.instance_id.clone(),
        what,
    };
    let path = |role: &str| -> Result<PathBuf, HarnessError> {
        report
            .witnesses
            .get(role)
            .map(|f| dir.join(f))
            .ok_or_else(|| fail(format!("no {role} witness recorded")))
    };
    let inst: Instance = model::read_instance(fs::File::open(path("instance")?)?)?;
    let close = |a: f64, b: f64| (a - b).abs() <= eps;

    let opt_doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(path("opt")?)?).map_err(ModelError::from)?;
    let opt: Assignment = serde_json::from_value(opt_doc["slots"].clone())
        .map(Assignment::new)
        .map_err(ModelError::from)?;
    let opt_cost = total_cost(&inst, &opt)?;
    if !close(opt_cost, report.opt_cost) {
        return Err(fail(format!(
            "opt witness costs {opt_cost}, report says {}",
            report.opt_cost
        )));
    }
    if let Some(expected) = report.base_worst_ne_cost {
        let a = model::read_assignment(fs::File::open(path("base_ne")?)?)?;
        if !is_nash(&inst, &a, eps)?.holds() {
            return Err(fail("base witness is not an equilibrium".into()));
        }
        let cost = total_cost(&inst, &a)?;
        if !close(cost, expected) {
            return Err(fail(format!(
                "base witness costs {cost}, report says {expected}"
            )));
        }
    }
    if let Some(expected) = report.mech_worst_cost {
        let p = MechProfile::from_json(&fs::read_to_string(path("mech_ne")?)?)?;
        if !is_mechanism_nash(&inst, &p, eps)?.holds() {
            return Err(fail("mechanism witness is not an equilibrium".into()));
        }
        let cost = total_cost(&inst, &p.assignment)?;
        if !close(cost, expected) {
            return Err(fail(format!(
                "mechanism witness costs {cost}, report says {expected}"
            )));
        }
    }
    let ratios = [
        (report.base_poa, report.base_worst_ne_cost),
        (report.mech_poa, report.mech_worst_cost),
    ];
    for (poa, num) in ratios {
        if let (Some(p), Some(x)) = (poa, num) {
            if !close(p, x / report.opt_cost) {
                return Err(fail(format!("ratio {p} != {x} / {}", report.opt_cost)));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{gen_freeloader, gen_two_job_unit, gen_valley};
    use crate::model::Job;
    use crate::CostFunction;

    fn cfg() -> HarnessConfig {
        HarnessConfig {
            mechanism: true,
            record_timing: false,
            ..Default::default()
        }
    }

    #[test]
    fn two_job_unit_mechanism_mode() {
        let f = gen_two_job_unit().unwrap();
        let out = poa_exact(&f.instance, "two", &cfg()).unwrap();
        assert_eq!(out.report.mech_poa, Some(2.0));
        assert_eq!(out.report.base_poa, Some(2.0));
        assert_eq!(out.report.opt_cost, 1.0);
        assert!(out.report.exact);
    }

    #[test]
    fn single_job_both_ratios_one() {
        let inst = Instance::new(
            CostFunction::monomial(0.5).unwrap(),
            3,
            vec![Job::new(1, 4)],
        )
        .unwrap();
        let r = poa_exact(&inst, "single", &cfg()).unwrap().report;
        assert_eq!((r.base_poa, r.mech_poa), (Some(1.0), Some(1.0)));
    }

    #[test]
    fn valley_base_ratio_at_least_closed_form() {
        let f = gen_valley(2, 0.5).unwrap();
        let r = poa_family(&f, &cfg()).unwrap().report;
        let closed = 2.0 * (1.0 + 2f64.sqrt()) / 6f64.sqrt();
        assert!(r.base_poa.unwrap() >= closed - 1e-9);
        assert!((closed - 1.971).abs() < 1e-3);
    }

    #[test]
    fn family_fallback_uses_witnesses() {
        let f = gen_freeloader(81, 0.5).unwrap();
        let out = poa_family(&f, &cfg()).unwrap();
        assert!(!out.report.exact);
        assert_eq!(out.report.mech_worst_cost, Some(27.0));
        assert!((out.report.opt_cost - (73f64.sqrt() + 8.0)).abs() < 1e-9);
    }

    #[test]
    fn witnesses_round_trip_through_audit() {
        let dir = tempfile::tempdir().unwrap();
        for f in [
            gen_two_job_unit().unwrap(),
            gen_freeloader(16, 0.5).unwrap(),
        ] {
            let mut out = poa_family(&f, &cfg()).unwrap();
            out.write_witnesses(dir.path()).unwrap();
            audit(&out.report, dir.path(), 1e-9).unwrap();
        }
    }

    #[test]
    fn audit_catches_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let f = gen_two_job_unit().unwrap();
        let mut out = poa_family(&f, &cfg()).unwrap();
        out.write_witnesses(dir.path()).unwrap();
        let mut r = out.report.clone();
        r.opt_cost = 2.0;
        assert!(matches!(
            audit(&r, dir.path(), 1e-9),
            Err(HarnessError::Audit { .. })
        ));
        let mut r = out.report.clone();
        r.mech_poa = Some(1.5);
        assert!(audit(&r, dir.path(), 1e-9).is_err());
    }

    #[test]
    fn csv_has_fixed_header() {
        let f = gen_two_job_unit().unwrap();
        let r = poa_family(&f, &cfg()).unwrap().report;
        let mut out = Vec::new();
        write_reports_csv(&[r], &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
        assert_eq!(
            lines.next().unwrap(),
            "two_job_unit,2,unit,,2,2,1,unit_greedy,2,2,2,1,0,0,0.000000001"
        );
    }
}
