//! Exhaustive enumeration of assignments.
//!
//! Jobs with identical windows are interchangeable, so by default each such
//! group is enumerated as a multiset (nondecreasing slots within the group).
//! The space is split into prefix shards that run on the rayon pool; shard
//! results come back in enumeration order so merges are deterministic.

use rayon::prelude::*;
use thiserror::Error;

use crate::model::{Instance, LoadProfile};
use crate::scalar::Scalar;

pub const DEFAULT_BUDGET: u128 = 10_000_000;

const TARGET_SHARDS: usize = 64;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum SearchError {
    #[error("search space of {size} assignments exceeds budget {budget}")]
    BudgetExceeded { size: u128, budget: u128 },
}

pub struct SearchSpace<'a, S> {
    inst: &'a Instance<S>,
    order: Vec<usize>,
    // tied[i]: order[i] has the same window as order[i - 1]
    tied: Vec<bool>,
    size: u128,
}

impl<'a, S: Scalar> SearchSpace<'a, S> {
    pub fn new(inst: &'a Instance<S>, symmetry: bool) -> Self {
        let mut order: Vec<usize> = (0..inst.n()).collect();
        if symmetry {
            order.sort_by_key(|&j| {
                let job = inst.job(j);
                (job.release, job.deadline)
            });
        }
        let tied: Vec<bool> = order
            .iter()
            .enumerate()
            .map(|(i, &j)| symmetry && i > 0 && inst.job(order[i - 1]) == inst.job(j))
            .collect();

        let mut size: u128 = 1;
        let mut i = 0;
        while i < order.len() {
            let width = inst.job(order[i]).width() as u128;
            let mut k = 1u128;
            while i + (k as usize) < order.len() && tied[i + k as usize] {
                k += 1;
            }
            size = size.saturating_mul(multichoose(width, k));
            i += k as usize;
        }
        SearchSpace {
            inst,
            order,
            tied,
            size,
        }
    }

    /// Number of assignments visited (after symmetry reduction).
    pub fn size(&self) -> u128 {
        self.size
    }

    pub fn check_budget(&self, budget: u128) -> Result<(), SearchError> {
        if self.size > budget {
            Err(SearchError::BudgetExceeded {
                size: self.size,
                budget,
            })
        } else {
            Ok(())
        }
    }

    /// Visits every assignment once. `visit` receives the per-job slots and
    /// the matching load profile; one accumulator is created per shard and
    /// the accumulators are returned in enumeration order.
    pub fn fold<T, I, V>(&self, init: I, visit: V) -> Vec<T>
    where
        T: Send,
        I: Fn() -> T + Sync,
        V: Fn(&mut T, &[usize], &LoadProfile) + Sync,
    {
        let prefixes = self.prefixes();
        prefixes
            .par_iter()
            .map(|prefix| {
                let mut acc = init();
                let mut walker = Walker {
                    space: self,
                    slots: vec![0; self.inst.n()],
                    loads: LoadProfile::empty(self.inst.horizon()),
                };
                for (pos, &slot) in prefix.iter().enumerate() {
                    walker.slots[self.order[pos]] = slot;
                    walker.loads.add(slot);
                }
                walker.walk(prefix.len(), &mut acc, &visit);
                acc
            })
            .collect()
    }

    fn lowest(&self, pos: usize, prefix: &[usize]) -> usize {
        let job = self.inst.job(self.order[pos]);
        if self.tied[pos] {
            prefix[pos - 1]
        } else {
            job.release
        }
    }

    fn prefixes(&self) -> Vec<Vec<usize>> {
        let mut prefixes = vec![Vec::new()];
        let mut depth = 0;
        while depth < self.order.len() && prefixes.len() < TARGET_SHARDS {
            let deadline = self.inst.job(self.order[depth]).deadline;
            prefixes = prefixes
                .into_iter()
                .flat_map(|p| {
                    let lo = self.lowest(depth, &p);
                    (lo..deadline).map(move |t| {
                        let mut q = p.clone();
                        q.push(t);
                        q
                    })
                })
                .collect();
            depth += 1;
        }
        prefixes
    }
}

struct Walker<'s, 'a, S> {
    space: &'s SearchSpace<'a, S>,
    slots: Vec<usize>,
    loads: LoadProfile,
}

impl<S: Scalar> Walker<'_, '_, S> {
    fn walk<T, V>(&mut self, pos: usize, acc: &mut T, visit: &V)
    where
        V: Fn(&mut T, &[usize], &LoadProfile),
    {
        let order = &self.space.order;
        if pos == order.len() {
            visit(acc, &self.slots, &self.loads);
            return;
        }
        let j = order[pos];
        let job = self.space.inst.job(j);
        let lo = if self.space.tied[pos] {
            self.slots[order[pos - 1]]
        } else {
            job.release
        };
        for t in lo..job.deadline {
            self.slots[j] = t;
            self.loads.add(t);
            self.walk(pos + 1, acc, visit);
            self.loads.remove(t);
        }
    }
}

/// Number of size-`k` multisets over `n` items, saturating.
fn multichoose(n: u128, k: u128) -> u128 {
    // C(n + k - 1, k), built incrementally so every intermediate is an integer
    let mut acc: u128 = 1;
    for i in 1..=k {
        acc = match acc.checked_mul(n + i - 1) {
            Some(v) => v / i,
            None => return u128::MAX,
        };
    }
    acc
}
