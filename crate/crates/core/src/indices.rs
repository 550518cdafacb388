//! Rationality indices: efficiency-deflated GARP, the Critical Cost
//! Efficiency Index and Bronars power.

use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{BudgetSet, Dataset};
use crate::error::{Error, Result};
use crate::rational::{self, Rational};
use crate::revealed::{ExpenditureTable, StrictClause};
use crate::space::{AnswerSpace, Answer};

pub const DEFAULT_CCEI_TOLERANCE: f64 = 1e-6;
pub const CCEI_MAX_ITERATIONS: u32 = 50;
pub const BRONARS_SAMPLING: &str = "near-frontier-uniform";

fn check_efficiency(e: &Rational) -> Result<()> {
    if *e < Rational::zero() || *e > Rational::one() {
        return Err(Error::EfficiencyOutOfRange(e.clone()));
    }
    Ok(())
}

/// GARP with every own expenditure deflated by `e`.
pub fn check_garp_e(d: &Dataset, e: &Rational) -> Result<bool> {
    check_garp_e_with(d, e, StrictClause::default())
}

pub fn check_garp_e_with(d: &Dataset, e: &Rational, clause: StrictClause) -> Result<bool> {
    check_efficiency(e)?;
    Ok(ExpenditureTable::from_dataset(d).garp(e, clause).satisfied)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CceiResult {
    #[serde(with = "rational::pair")]
    pub e_star: Rational,
    pub iterations: u32,
    #[serde(with = "rational::pair")]
    pub tolerance: Rational,
    /// GARP fails at `e_star` itself; it holds for every smaller level.
    pub supremum_only: bool,
}

impl CceiResult {
    pub fn value(&self) -> f64 {
        rational::to_f64(&self.e_star)
    }
}

pub fn ccei(d: &Dataset, tolerance: &Rational) -> Result<CceiResult> {
    ccei_with(d, tolerance, StrictClause::default())
}

/// Bisection on `e` to `tolerance` (at most [`CCEI_MAX_ITERATIONS`] halvings),
/// then the bracket is resolved to the exact expenditure ratio at which
/// GARP_e changes status.
pub fn ccei_with(d: &Dataset, tolerance: &Rational, clause: StrictClause) -> Result<CceiResult> {
    if *tolerance <= Rational::zero() {
        return Err(Error::NonPositiveTolerance);
    }
    let table = ExpenditureTable::from_dataset(d);
    let holds = |e: &Rational| table.garp(e, clause).satisfied;
    let result = |e_star: Rational, iterations: u32, supremum_only: bool| CceiResult {
        e_star,
        iterations,
        tolerance: tolerance.clone(),
        supremum_only,
    };

    if holds(&Rational::one()) {
        return Ok(result(Rational::one(), 0, false));
    }
    if !holds(&Rational::zero()) {
        // only possible with the equal-bundle strict clause
        return Ok(result(Rational::zero(), 0, true));
    }

    let two = rational::int(2);
    let mut lo = Rational::zero();
    let mut hi = Rational::one();
    let mut iterations = 0;
    while &hi - &lo > *tolerance && iterations < CCEI_MAX_ITERATIONS {
        let mid = (&lo + &hi) / &two;
        if holds(&mid) {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }

    // GARP_e only changes status at ratios cross/own; the supremum is one of
    // them and lies in [lo, hi].
    let mut critical: Vec<Rational> = (0..table.len())
        .filter(|&k| !table.own(k).is_zero())
        .flat_map(|k| (0..table.len()).map(move |l| (k, l)))
        .map(|(k, l)| table.cross(k, l) / table.own(k))
        .filter(|c| *c >= lo && *c <= hi)
        .collect();
    critical.sort();
    critical.dedup();
    for (i, c) in critical.iter().enumerate() {
        if !holds(c) {
            return Ok(result(c.clone(), iterations, true));
        }
        let next = critical.get(i + 1).unwrap_or(&hi);
        if !holds(&((c + next) / &two)) {
            return Ok(result(c.clone(), iterations, false));
        }
    }
    Ok(result(lo, iterations, false))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BronarsResult {
    pub power: f64,
    pub violating: u64,
    pub trials: u64,
    pub seed: u64,
    pub sampling: String,
}

/// Integer answers with `R - min_s p_s < cost(q) <= R`.
pub fn near_frontier(space: &AnswerSpace, set: &BudgetSet) -> Vec<Answer> {
    let floor = &set.budget - set.min_price();
    space
        .points()
        .filter(|q| {
            let c = set.cost_in(space, q);
            c > floor && c <= set.budget
        })
        .collect()
}

/// Share of uniformly random near-frontier respondents violating GARP.
///
/// Trial `t` draws from a ChaCha stream selected by `t`, so the estimate does
/// not depend on how trials are scheduled across threads.
pub fn bronars_power(
    design: &[BudgetSet],
    space: &AnswerSpace,
    trials: u64,
    seed: u64,
) -> Result<BronarsResult> {
    if trials == 0 {
        return Err(Error::NoTrials);
    }
    let frontiers: Vec<Vec<Answer>> = design
        .iter()
        .enumerate()
        .map(|(i, set)| {
            let f = near_frontier(space, set);
            if f.is_empty() {
                Err(Error::EmptyFrontier { round: i + 1 })
            } else {
                Ok(f)
            }
        })
        .collect::<Result<_>>()?;
    let sets: Vec<&BudgetSet> = design.iter().collect();

    let violating = (0..trials)
        .into_par_iter()
        .filter(|&trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(trial);
            let answers: Vec<&Answer> = frontiers
                .iter()
                .map(|f| &f[rng.random_range(0..f.len())])
                .collect();
            !ExpenditureTable::new(space, &sets, &answers)
                .garp(&Rational::one(), StrictClause::default())
                .satisfied
        })
        .count() as u64;

    Ok(BronarsResult {
        power: violating as f64 / trials as f64,
        violating,
        trials,
        seed,
        sampling: BRONARS_SAMPLING.to_string(),
    })
}
