use std::path::Path;

use rayon::prelude::*;

use super::{poa_exact, poa_family, HarnessConfig, HarnessError, PoaOutcome};
use crate::generators::{gen_freeloader, gen_random, gen_valley, RandomShape};
use crate::CostFunction;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepFamily {
    /// `size` is the valley height.
    Valley,
    /// `size` is the number of jobs.
    Freeloader,
    /// `size` is the number of jobs; windows drawn from `1..=horizon`.
    Random { horizon: usize, shape: RandomShape },
}

/// One grid point. `degree: None` means unit costs (random family only).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub family: SweepFamily,
    pub size: usize,
    pub degree: Option<f64>,
}

impl SweepPoint {
    pub fn id(&self, seed: u64) -> String {
        let d = self.degree.map_or("unit".to_string(), |d| format!("d{d}"));
        match self.family {
            SweepFamily::Valley => format!("valley-h{}-{d}", self.size),
            SweepFamily::Freeloader => format!("freeloader-n{}-{d}", self.size),
            SweepFamily::Random { horizon, shape } => {
                let shape = match shape {
                    RandomShape::General => "general".to_string(),
                    RandomShape::CommonSlot(t) => format!("common{t}"),
                };
                format!("random-n{}-T{horizon}-{shape}-{d}-s{seed}", self.size)
            }
        }
    }

    fn degree(&self) -> Result<f64, HarnessError> {
        self.degree.ok_or_else(|| {
            HarnessError::Gen(crate::generators::GenError::Domain(
                "closed-form families need a degree".into(),
            ))
        })
    }

    fn run(&self, seed: u64, cfg: &HarnessConfig) -> Result<PoaOutcome, HarnessError> {
        match self.family {
            SweepFamily::Valley => poa_family(&gen_valley(self.size, self.degree()?)?, cfg),
            SweepFamily::Freeloader => poa_family(&gen_freeloader(self.size, self.degree()?)?, cfg),
            SweepFamily::Random { horizon, shape } => {
                let cost = match self.degree {
                    None => CostFunction::Unit,
                    Some(d) => CostFunction::monomial(d)?,
                };
                let inst = gen_random(self.size, horizon, seed, shape, cost)?;
                poa_exact(&inst, &self.id(seed), cfg)
            }
        }
    }
}

#[derive(Debug)]
pub struct SweepRow {
    pub point: SweepPoint,
    pub id: String,
    pub outcome: Result<PoaOutcome, HarnessError>,
}

/// Runs every grid point concurrently and returns rows in grid order. A row
/// that fails keeps its error and the rest of the sweep carries on. Random
/// points use `cfg.seed + index` as their instance seed.
pub fn sweep(
    points: &[SweepPoint],
    cfg: &HarnessConfig,
    witness_dir: Option<&Path>,
) -> Result<Vec<SweepRow>, HarnessError> {
    if points.is_empty() {
        return Err(HarnessError::EmptyGrid);
    }
    let rows = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let seed = cfg.seed.wrapping_add(i as u64);
            let id = p.id(seed);
            let mut outcome = p.run(
                seed,
                &HarnessConfig {
                    seed,
                    ..cfg.clone()
                },
            );
            if let Ok(out) = &mut outcome {
                out.report.instance_id = id.clone();
                if let Some(dir) = witness_dir {
                    if let Err(e) = out.write_witnesses(dir) {
                        outcome = Err(e);
                    }
                }
            }
            SweepRow {
                point: *p,
                id,
                outcome,
            }
        })
        .collect();
    Ok(rows)
}
