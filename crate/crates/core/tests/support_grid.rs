//! Falsification search for `support_payments`: when it declares an
//! assignment unsupportable, no payment vector on a grid of step c(l)/64
//! may pass the mechanism equilibrium check.

mod common;

use common::*;
use costshare::mechanism::{is_mechanism_nash, support_payments};
use costshare::model::load_profile;
use costshare::{Assignment, Instance, MechProfile, PaymentProfile};
use proptest::prelude::*;

const STEPS: usize = 64;

/// Calls `visit` with every grid payment vector for `a`. With `tight_only`,
/// only vectors whose per-slot sums equal the slot cost.
fn for_each_grid_profile(
    inst: &Instance,
    a: &Assignment,
    tight_only: bool,
    mut visit: impl FnMut(&[f64]) -> bool,
) {
    let loads = load_profile(inst, a).unwrap();
    let n = inst.n();
    let unit = |j: usize| inst.cost().eval(loads.load(a.slot(j))) / STEPS as f64;
    let mut k = vec![0usize; n];
    loop {
        let admissible = !tight_only
            || loads.occupied().all(|(t, _)| {
                (0..n)
                    .filter(|&j| a.slot(j) == t)
                    .map(|j| k[j])
                    .sum::<usize>()
                    == STEPS
            });
        if admissible {
            let xi: Vec<f64> = (0..n).map(|j| k[j] as f64 * unit(j)).collect();
            if !visit(&xi) {
                return;
            }
        }
        let mut i = 0;
        while i < n && k[i] == STEPS {
            k[i] = 0;
            i += 1;
        }
        if i == n {
            return;
        }
        k[i] += 1;
    }
}

fn check(inst: &Instance, tight_only: bool) -> Result<(), TestCaseError> {
    for a in all_assignments(inst) {
        let cert = support_payments(inst, &a, EPS).unwrap();
        if cert.feasible {
            continue;
        }
        let mut witness = None;
        for_each_grid_profile(inst, &a, tight_only, |xi| {
            let p = MechProfile::new(a.clone(), PaymentProfile::new(xi.to_vec()).unwrap()).unwrap();
            if is_mechanism_nash(inst, &p, EPS).unwrap().holds() {
                witness = Some(xi.to_vec());
                return false;
            }
            true
        });
        prop_assert!(
            witness.is_none(),
            "{:?} declared unsupportable but {:?} verifies",
            a.slots,
            witness
        );
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn full_grid_finds_nothing_on_pairs(inst in instance(2, 4)) {
        check(&inst, false)?;
    }

    // Equilibria are tight, so for larger instances only tight vectors are
    // searched.
    #[test]
    fn tight_grid_finds_nothing(inst in instance(4, 4)) {
        check(&inst, true)?;
    }
}
