//! Afriat numbers and the piecewise-linear rationalizing utility.
//!
//! For GARP-consistent data, [`solve_afriat`] finds positive `(U^k, λ^k)` with
//!
//! ```text
//! U^k <= U^l + λ^l p^l . (q^k_{o^l} - q^l_{o^l})     for all k, l
//! ```
//!
//! and [`PiecewiseUtility`] evaluates
//! `u(x) = min_k U^k + λ^k p^k . (x_{o^k} - q^k_{o^k})`, which is concave and
//! rationalizes the data. Construction is exact; floats appear only in
//! [`PiecewiseUtility::evaluate`].

use num_traits::{One, Zero};
use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rational::{self, Rational};
use crate::revealed::{transitive_closure, ExpenditureTable, StrictClause};
use crate::space::{AnswerSpace, Answer, Corner};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AfriatSolution {
    pub u_levels: Vec<Rational>,
    pub multipliers: Vec<Rational>,
}

impl AfriatSolution {
    pub fn len(&self) -> usize {
        self.u_levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u_levels.is_empty()
    }
}

/// First `(k, l)` whose inequality fails, checked exactly over all `K^2` pairs.
pub fn check_inequalities(d: &Dataset, sol: &AfriatSolution) -> Option<(usize, usize)> {
    let table = ExpenditureTable::from_dataset(d);
    first_failing_pair(&table, sol)
}

fn first_failing_pair(table: &ExpenditureTable, sol: &AfriatSolution) -> Option<(usize, usize)> {
    let n = table.len();
    (0..n)
        .flat_map(|k| (0..n).map(move |l| (k, l)))
        .find(|&(k, l)| {
            let rhs = &sol.u_levels[l]
                + &sol.multipliers[l] * (table.cross(l, k) - table.own(l));
            sol.u_levels[k] > rhs
        })
}

/// Constructs Afriat numbers for GARP-consistent data.
///
/// Observations are grouped into indifference classes (strongly connected
/// components of the revealed-preference relation), and classes are layered
/// by the longest chain of strictly preferred classes above them. The top
/// layer gets `U = λ = 1`. Each lower layer takes a common level `V` one unit
/// below every bound imposed by the layers above, then each member's
/// multiplier is the largest ratio needed to keep every higher observation
/// within reach (floored at 1).
pub fn solve_afriat(d: &Dataset) -> Result<AfriatSolution> {
    let table = ExpenditureTable::from_dataset(d);
    let clause = StrictClause::default();
    let report = table.garp(&Rational::one(), clause);
    if !report.satisfied {
        return Err(Error::GarpViolated { count: report.count });
    }
    let n = table.len();
    if n == 0 {
        return Ok(AfriatSolution { u_levels: vec![], multipliers: vec![] });
    }
    let relations = transitive_closure(table.relations(&Rational::one(), clause));
    let r = relations.r.expect("closure computed");

    let layer = layers(n, |a, b| r.get(a, b));
    let depth = layer.iter().copied().max().unwrap_or(0);

    let mut u = vec![Rational::zero(); n];
    let mut lambda = vec![Rational::zero(); n];
    let mut assigned: Vec<usize> = Vec::with_capacity(n);
    for level in 0..=depth {
        let members: Vec<usize> = (0..n).filter(|&k| layer[k] == level).collect();
        if level == 0 {
            for &k in &members {
                u[k] = Rational::one();
                lambda[k] = Rational::one();
            }
        } else {
            let mut bound: Option<Rational> = None;
            for &k in &assigned {
                let mut tighten = |v: Rational| {
                    if bound.as_ref().is_none_or(|b| v < *b) {
                        bound = Some(v);
                    }
                };
                tighten(u[k].clone());
                for &l in &members {
                    tighten(&u[k] + &lambda[k] * (table.cross(k, l) - table.own(k)));
                }
            }
            let level_u = bound.expect("higher layers are non-empty") - Rational::one();
            for &l in &members {
                u[l] = level_u.clone();
            }
            for &l in &members {
                let mut best: Option<Rational> = None;
                for &k in &assigned {
                    let gap = table.cross(l, k) - table.own(l);
                    if gap <= Rational::zero() {
                        return Err(Error::NonPositiveGap { lower: l, higher: k });
                    }
                    let ratio = (&u[k] - &u[l]) / gap;
                    if best.as_ref().is_none_or(|b| ratio > *b) {
                        best = Some(ratio);
                    }
                }
                let needed = best.unwrap_or_else(Rational::one);
                lambda[l] = if needed < Rational::one() { Rational::one() } else { needed };
            }
        }
        assigned.extend(members);
    }

    // a common shift keeps every inequality and makes all levels positive
    let min_u = u.iter().min().cloned().unwrap_or_else(Rational::one);
    if min_u <= Rational::zero() {
        let shift = Rational::one() - min_u;
        for level in &mut u {
            *level += &shift;
        }
    }

    let sol = AfriatSolution { u_levels: u, multipliers: lambda };
    if let Some((k, l)) = first_failing_pair(&table, &sol) {
        return Err(Error::AfriatInequality { k, l });
    }
    Ok(sol)
}

/// Layer index per observation: 0 for classes no other class is revealed
/// preferred to, otherwise one more than the deepest class above.
fn layers(n: usize, related: impl Fn(usize, usize) -> bool) -> Vec<usize> {
    let above = |a: usize, b: usize| related(a, b) && !related(b, a);
    // in a transitive relation, everything above `b` is above whatever `b`
    // is above, so the count of strict superiors orders classes topologically
    let mut order: Vec<usize> = (0..n).collect();
    let superiors: Vec<usize> = (0..n).map(|b| (0..n).filter(|&a| above(a, b)).count()).collect();
    order.sort_by_key(|&k| (superiors[k], k));
    let mut layer = vec![0usize; n];
    for &b in &order {
        layer[b] = (0..n)
            .filter(|&a| above(a, b))
            .map(|a| layer[a] + 1)
            .max()
            .unwrap_or(0);
    }
    layer
}

#[derive(Debug, Clone)]
struct Piece {
    corner: Corner,
    prices: Vec<Rational>,
    own_cost: Rational,
    level: Rational,
    multiplier: Rational,
}

/// `u(x) = min_k U^k + λ^k p^k . (x_{o^k} - q^k_{o^k})`.
#[derive(Debug, Clone)]
pub struct PiecewiseUtility {
    space: AnswerSpace,
    solution: AfriatSolution,
    pieces: Vec<Piece>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Peak {
    pub answer: Answer,
    pub value: f64,
    #[serde(skip)]
    pub exact: Rational,
    /// Every maximizer, lexicographically ordered; `answer` is the first.
    pub ties: Vec<Answer>,
}

impl PiecewiseUtility {
    pub fn new(d: &Dataset, solution: AfriatSolution) -> Result<Self> {
        if solution.len() != d.len() || solution.multipliers.len() != d.len() {
            return Err(Error::DimensionMismatch { expected: d.len(), found: solution.len() });
        }
        let pieces = d
            .observations()
            .iter()
            .zip(solution.u_levels.iter().zip(&solution.multipliers))
            .map(|(obs, (u, l))| Piece {
                corner: obs.set.corner.clone(),
                prices: obs.set.prices.clone(),
                own_cost: obs.set.cost_in(d.space(), &obs.answer),
                level: u.clone(),
                multiplier: l.clone(),
            })
            .collect();
        Ok(Self { space: d.space().clone(), solution, pieces })
    }

    /// Solves the inequalities and wraps the result.
    pub fn from_dataset(d: &Dataset) -> Result<Self> {
        Self::new(d, solve_afriat(d)?)
    }

    pub fn space(&self) -> &AnswerSpace {
        &self.space
    }

    pub fn solution(&self) -> &AfriatSolution {
        &self.solution
    }

    /// Exact value; `None` for a dataset without observations.
    pub fn evaluate_exact(&self, x: &Answer) -> Option<Rational> {
        self.pieces
            .iter()
            .map(|p| {
                let coords = crate::space::corner_coords_unchecked(
                    x.values(),
                    &p.corner,
                    self.space.scales(),
                );
                &p.level + &p.multiplier * (rational::dot(&p.prices, &coords) - &p.own_cost)
            })
            .min()
    }

    pub fn evaluate(&self, x: &Answer) -> f64 {
        self.evaluate_exact(x).map(|v| rational::to_f64(&v)).unwrap_or(0.0)
    }

    /// Exhaustive argmax over the grid.
    pub fn find_peak(&self) -> Peak {
        let mut best: Option<Rational> = None;
        let mut ties = Vec::new();
        for x in self.space.points() {
            let v = self.evaluate_exact(&x).unwrap_or_else(Rational::zero);
            match &best {
                Some(b) if v < *b => {}
                Some(b) if v == *b => ties.push(x),
                _ => {
                    best = Some(v);
                    ties = vec![x];
                }
            }
        }
        let exact = best.expect("grid is non-empty");
        Peak { answer: ties[0].clone(), value: rational::to_f64(&exact), exact, ties }
    }

    /// Dense table of values in [`AnswerSpace::points`] order.
    pub fn grid_values(&self) -> Vec<f64> {
        self.space.points().map(|x| self.evaluate(&x)).collect()
    }
}

/// Round `k` and a grid point `y` that was affordable at `q^k`'s expenditure
/// yet strictly better than `q^k` under `u`.
pub fn check_weak_rationalization(
    d: &Dataset,
    u: &PiecewiseUtility,
) -> Option<(usize, Answer)> {
    for (k, obs) in d.observations().iter().enumerate() {
        let spent = obs.set.cost_in(d.space(), &obs.answer);
        let chosen = u.evaluate_exact(&obs.answer)?;
        for y in d.space().points() {
            if obs.set.cost_in(d.space(), &y) <= spent && u.evaluate_exact(&y)? > chosen {
                return Some((k, y));
            }
        }
    }
    None
}

/// Counterexample to single-peakedness: `x_c <= y_c <= y*_c` yet `f(x) > f(y)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PeakViolation {
    pub corner: Corner,
    pub x: Answer,
    pub y: Answer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SinglePeakedCheck {
    pub single_peaked: bool,
    /// The global maximizer the check was anchored at.
    pub peak: Answer,
    pub violation: Option<PeakViolation>,
}

/// Checks that `f` has a global maximum `y*` and that, in every corner system
/// `c`, `x_c <= y_c <= y*_c` implies `f(x) <= f(y)`.
///
/// Within the box `{z : z_c <= y*_c}` the order `<=_c` is generated by unit
/// steps that stay inside the box, so checking every unit step is equivalent
/// to checking every pair. Each maximizer is tried in lexicographic order;
/// the first one that passes is reported, otherwise the violation found for
/// the first maximizer.
pub fn verify_single_peaked<T, F>(space: &AnswerSpace, f: F) -> SinglePeakedCheck
where
    T: PartialOrd + Clone,
    F: Fn(&Answer) -> T,
{
    let points: Vec<Answer> = space.points().collect();
    let values: Vec<T> = points.iter().map(&f).collect();
    let mut maximizers: Vec<usize> = Vec::new();
    for (i, v) in values.iter().enumerate() {
        match maximizers.first() {
            Some(&m) if *v < values[m] => {}
            Some(&m) if *v == values[m] => maximizers.push(i),
            _ => maximizers = vec![i],
        }
    }

    let mut first_failure: Option<(Answer, PeakViolation)> = None;
    for &m in &maximizers {
        let peak = &points[m];
        match unit_step_violation(space, &points, &values, peak) {
            None => {
                return SinglePeakedCheck {
                    single_peaked: true,
                    peak: peak.clone(),
                    violation: None,
                }
            }
            Some(v) => {
                if first_failure.is_none() {
                    first_failure = Some((peak.clone(), v));
                }
            }
        }
    }
    let (peak, violation) = first_failure.expect("at least one maximizer");
    SinglePeakedCheck { single_peaked: false, peak, violation: Some(violation) }
}

fn unit_step_violation<T: PartialOrd>(
    space: &AnswerSpace,
    points: &[Answer],
    values: &[T],
    peak: &Answer,
) -> Option<PeakViolation> {
    let scales = space.scales();
    for corner in space.corners() {
        let peak_c = crate::space::corner_coords_unchecked(peak.values(), &corner, scales);
        for (i, x) in points.iter().enumerate() {
            let x_c = crate::space::corner_coords_unchecked(x.values(), &corner, scales);
            if x_c.iter().zip(&peak_c).any(|(a, b)| a > b) {
                continue;
            }
            for s in 0..space.questions() {
                if x_c[s] == peak_c[s] {
                    continue;
                }
                // one step away from the corner along question s
                let mut y = x.values().to_vec();
                if corner.is_high(s) {
                    y[s] -= 1;
                } else {
                    y[s] += 1;
                }
                let y = space.answer(y).expect("step stays on the grid");
                if values[i] > values[space.index_of(&y)] {
                    return Some(PeakViolation { corner: corner.clone(), x: x.clone(), y });
                }
            }
        }
    }
    None
}
