//! Revealed-preference relations across corner coordinate systems.
//!
//! Every comparison for round `k` happens in round `k`'s corner system:
//! `q^k R^0 q` when `p^k . q^k_{o^k} >= p^k . q_{o^k}`, and `q^k P^0 q` when the
//! inequality is strict. GARP requires that `q^k R q^l` never coexists with
//! `q^l P^0 q^k`.

use serde::{Deserialize, Serialize};

use crate::dataset::{BudgetSet, Dataset};
use crate::rational::{self, Rational};
use crate::space::{AnswerSpace, Answer};

/// How identical bundles enter the strict relation.
///
/// `CostOnly` makes `q^k P^0 q` depend on strict expenditure alone.
/// `WithEqualBundles` additionally declares `q^k P^0 q` whenever
/// `q_{o^k} = q^k_{o^k}`, so two rounds with the same answer form a violation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrictClause {
    #[default]
    CostOnly,
    WithEqualBundles,
}

/// Dense square boolean matrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BoolMatrix {
    n: usize,
    bits: Vec<bool>,
}

impl BoolMatrix {
    pub fn new(n: usize) -> Self {
        Self { n, bits: vec![false; n * n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        self.bits[i * self.n + j] = value;
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut m = Self::new(n);
        for i in 0..n {
            for j in 0..n {
                m.set(i, j, f(i, j));
            }
        }
        m
    }
}

/// `R^0`, `P^0`, and (once computed) the transitive closure `R`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationMatrices {
    pub r0: BoolMatrix,
    pub p0: BoolMatrix,
    pub r: Option<BoolMatrix>,
}

/// Pairwise expenditures: `cross[k][l] = p^k . q^l_{o^k}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpenditureTable {
    cross: Vec<Vec<Rational>>,
    same_bundle: BoolMatrix,
}

impl ExpenditureTable {
    pub fn new(space: &AnswerSpace, sets: &[&BudgetSet], answers: &[&Answer]) -> Self {
        assert_eq!(sets.len(), answers.len());
        let k = sets.len();
        let cross = sets
            .iter()
            .map(|set| answers.iter().map(|q| set.cost_in(space, q)).collect())
            .collect();
        let same_bundle = BoolMatrix::from_fn(k, |i, j| answers[i] == answers[j]);
        Self { cross, same_bundle }
    }

    pub fn from_dataset(d: &Dataset) -> Self {
        let sets: Vec<&BudgetSet> = d.observations().iter().map(|o| &o.set).collect();
        let answers: Vec<&Answer> = d.observations().iter().map(|o| &o.answer).collect();
        Self::new(d.space(), &sets, &answers)
    }

    pub fn len(&self) -> usize {
        self.cross.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cross.is_empty()
    }

    /// Expenditure of round `k`'s own answer.
    pub fn own(&self, k: usize) -> &Rational {
        &self.cross[k][k]
    }

    /// Cost of `q^l` in round `k`'s system at round `k`'s prices.
    pub fn cross(&self, k: usize, l: usize) -> &Rational {
        &self.cross[k][l]
    }

    pub fn same_bundle(&self, k: usize, l: usize) -> bool {
        self.same_bundle.get(k, l)
    }

    /// Direct relations with own expenditures deflated by `efficiency`.
    pub fn relations(&self, efficiency: &Rational, clause: StrictClause) -> RelationMatrices {
        let n = self.len();
        let mut r0 = BoolMatrix::new(n);
        let mut p0 = BoolMatrix::new(n);
        for k in 0..n {
            let budget = efficiency * self.own(k);
            for l in 0..n {
                let equal = self.same_bundle(k, l);
                let spent = self.cross(k, l);
                r0.set(k, l, budget >= *spent || equal);
                let strict = budget > *spent;
                p0.set(k, l, strict || (equal && clause == StrictClause::WithEqualBundles));
            }
        }
        RelationMatrices { r0, p0, r: None }
    }

    pub fn garp(&self, efficiency: &Rational, clause: StrictClause) -> GarpReport {
        let m = transitive_closure(self.relations(efficiency, clause));
        garp_from_relations(&m, clause)
    }
}

/// `R^0` and `P^0` for a dataset, with undeflated expenditures.
pub fn direct_relations(d: &Dataset) -> RelationMatrices {
    direct_relations_with(d, StrictClause::default())
}

pub fn direct_relations_with(d: &Dataset, clause: StrictClause) -> RelationMatrices {
    ExpenditureTable::from_dataset(d).relations(&rational::one(), clause)
}

/// Fills `r` with the reflexive-transitive closure of `r0` (Warshall).
pub fn transitive_closure(mut m: RelationMatrices) -> RelationMatrices {
    let n = m.r0.dim();
    let mut r = m.r0.clone();
    for i in 0..n {
        r.set(i, i, true);
    }
    for via in 0..n {
        for i in 0..n {
            if !r.get(i, via) {
                continue;
            }
            for j in 0..n {
                if r.get(via, j) {
                    r.set(i, j, true);
                }
            }
        }
    }
    m.r = Some(r);
    m
}

/// Outcome of the GARP test. Violations are ordered pairs `(k, l)` of
/// 0-based observation indices with `q^k R q^l` and `q^l P^0 q^k`, `k != l`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GarpReport {
    pub satisfied: bool,
    pub violations: Vec<(usize, usize)>,
    pub count: usize,
    pub convention: StrictClause,
}

pub fn check_garp(d: &Dataset) -> GarpReport {
    check_garp_with(d, StrictClause::default())
}

pub fn check_garp_with(d: &Dataset, clause: StrictClause) -> GarpReport {
    ExpenditureTable::from_dataset(d).garp(&rational::one(), clause)
}

fn garp_from_relations(m: &RelationMatrices, clause: StrictClause) -> GarpReport {
    let r = m.r.as_ref().expect("closure computed");
    let n = r.dim();
    let violations: Vec<(usize, usize)> = (0..n)
        .flat_map(|k| (0..n).map(move |l| (k, l)))
        .filter(|&(k, l)| k != l && r.get(k, l) && m.p0.get(l, k))
        .collect();
    GarpReport {
        satisfied: violations.is_empty(),
        count: violations.len(),
        violations,
        convention: clause,
    }
}
