//! Quadratic single-peaked utility `u(q) = -sum_s a_s (q_s - b_s)^2 / 2`:
//! per-round demand for two questions, synthetic respondents, and
//! least-squares recovery of `(a, b)` from observed answers.
//!
//! Demand pins down only the weight ratio `theta = a_1 / a_2`; fitted weights
//! are reported normalized to `a_1 + a_2 = 2`.

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{BudgetSet, Dataset, Observation};
use crate::error::{Error, Result};
use crate::rational;
use crate::session::Round;
use crate::space::{to_corner_coords_f64, Answer, AnswerSpace};

/// Weight ratio or ideal coordinate beyond this marks a respondent as an outlier.
pub const OUTLIER_LIMIT: f64 = 15.0;
/// Minimum usable rounds: one weight ratio plus two ideal coordinates.
pub const MIN_FIT_ROUNDS: usize = 3;

const START_POINTS: usize = 5;
const THETA_RANGE: (f64, f64) = (0.1, 10.0);
const LN_THETA_BOUND: f64 = 20.0;
const SD_TOLERANCE: f64 = 1e-16;
const MAX_ITERS: u64 = 4000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticParams {
    pub weights: Vec<f64>,
    pub ideal: Vec<f64>,
}

impl QuadraticParams {
    pub fn new(weights: Vec<f64>, ideal: Vec<f64>) -> Result<Self> {
        let p = Self { weights, ideal };
        p.validate()?;
        Ok(p)
    }

    /// Two-question parameters from the weight ratio.
    pub fn from_theta(theta: f64, ideal: [f64; 2]) -> Result<Self> {
        Self::new(vec![2.0 * theta / (1.0 + theta), 2.0 / (1.0 + theta)], ideal.to_vec())
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != self.ideal.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                found: self.ideal.len(),
            });
        }
        if !self.weights.iter().all(|&a| a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidParams("weights must be positive and finite".into()));
        }
        if !self.ideal.iter().all(|b| b.is_finite()) {
            return Err(Error::InvalidParams("ideal point must be finite".into()));
        }
        Ok(())
    }

    pub fn theta(&self) -> f64 {
        self.weights[0] / self.weights[1]
    }

    pub fn utility(&self, q: &[f64]) -> f64 {
        -self
            .weights
            .iter()
            .zip(&self.ideal)
            .zip(q)
            .map(|((a, b), x)| 0.5 * a * (x - b) * (x - b))
            .sum::<f64>()
    }

    /// `b` clamped into the grid box and rounded: the round-0 answer.
    pub fn round0(&self, space: &AnswerSpace) -> Answer {
        space.round_clamped(&self.ideal)
    }
}

/// Share of the budget-line pull given to question 1,
/// `(a_1/p_1^2) / (a_1/p_1^2 + a_2/p_2^2)`.
pub fn alpha(weights: &[f64], prices: &[f64]) -> f64 {
    let w1 = weights[0] / (prices[0] * prices[0]);
    let w2 = weights[1] / (prices[1] * prices[1]);
    w1 / (w1 + w2)
}

/// Utility-maximizing real answer in round `set`, in the round's corner
/// coordinates. Two questions only.
pub fn demand(params: &QuadraticParams, set: &BudgetSet, space: &AnswerSpace) -> Result<Vec<f64>> {
    if space.questions() != 2 {
        return Err(Error::UnsupportedDimension(space.questions()));
    }
    params.validate()?;
    if params.weights.len() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: params.weights.len() });
    }
    let prices: Vec<f64> = set.prices.iter().map(rational::to_f64).collect();
    if !prices.iter().all(|&p| p > 0.0) {
        return Err(Error::InvalidParams("prices must be positive".into()));
    }
    let budget = rational::to_f64(&set.budget);
    if budget < 0.0 {
        return Err(Error::InvalidParams("budget must be non-negative".into()));
    }
    Ok(demand_unchecked(&params.weights, &params.ideal, &prices, budget, &set.corner, space))
}

fn demand_unchecked(
    weights: &[f64],
    ideal: &[f64],
    prices: &[f64],
    budget: f64,
    corner: &crate::space::Corner,
    space: &AnswerSpace,
) -> Vec<f64> {
    let n = [space.scale(0) as f64, space.scale(1) as f64];
    let b = to_corner_coords_f64(ideal, corner, space);
    let peak = [b[0].clamp(0.0, n[0]), b[1].clamp(0.0, n[1])];
    if prices[0] * peak[0] + prices[1] * peak[1] <= budget {
        return peak.to_vec();
    }
    // the budget binds: optimum on the line, then clamped to the stretch of
    // the line that lies inside the box
    let alpha = alpha(weights, prices);
    let q1 = alpha * b[0] + (1.0 - alpha) * (budget - prices[1] * b[1]) / prices[0];
    let lo = ((budget - prices[1] * n[1]) / prices[0]).max(0.0);
    let hi = (budget / prices[0]).min(n[0]);
    let q1 = q1.clamp(lo, hi);
    let q2 = ((budget - prices[0] * q1) / prices[1]).clamp(0.0, n[1]);
    vec![q1, q2]
}

/// Demand in absolute coordinates.
pub fn demand_absolute(
    params: &QuadraticParams,
    set: &BudgetSet,
    space: &AnswerSpace,
) -> Result<Vec<f64>> {
    // the corner transform is its own inverse
    Ok(to_corner_coords_f64(&demand(params, set, space)?, &set.corner, space))
}

/// Affordable grid answer closest to `target` (Euclidean, absolute
/// coordinates); ties go to the lexicographically smallest answer.
pub fn nearest_affordable(space: &AnswerSpace, set: &BudgetSet, target: &[f64]) -> Option<Answer> {
    let mut best: Option<(f64, Answer)> = None;
    for q in space.points() {
        if !set.contains_in(space, &q) {
            continue;
        }
        let d: f64 = q.values().iter().zip(target).map(|(&v, t)| (v as f64 - t).powi(2)).sum();
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, q));
        }
    }
    best.map(|(_, q)| q)
}

/// Synthetic respondent answering `rounds` on the grid. Round 0 is `b`
/// clamped and rounded; each included round answers the affordable grid
/// point nearest to demand plus independent normal noise per coordinate.
pub fn simulate_agent(
    params: &QuadraticParams,
    rounds: &[Round],
    space: &AnswerSpace,
    noise_sd: f64,
    seed: u64,
) -> Result<Dataset> {
    let targets = simulate_demands(params, rounds, space, noise_sd, seed)?;
    let mut observations = Vec::with_capacity(targets.len());
    for (i, (set, target)) in targets.into_iter().enumerate() {
        let answer =
            nearest_affordable(space, &set, &target).ok_or(Error::EmptyFrontier { round: i + 1 })?;
        observations.push(Observation { set, answer });
    }
    let excluded = rounds.iter().filter(|r| r.excluded).map(|r| r.set.clone()).collect();
    Dataset::new(space.clone(), params.round0(space), observations, excluded)
}

/// Continuous answers (absolute coordinates) for the included rounds, with
/// optional noise and no rounding.
pub fn simulate_demands(
    params: &QuadraticParams,
    rounds: &[Round],
    space: &AnswerSpace,
    noise_sd: f64,
    seed: u64,
) -> Result<Vec<(BudgetSet, Vec<f64>)>> {
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::InvalidParams("noise_sd must be non-negative".into()));
    }
    let noise = Normal::new(0.0, noise_sd).map_err(|e| Error::InvalidParams(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rounds
        .iter()
        .filter(|r| !r.excluded)
        .map(|r| {
            let mut q = demand_absolute(params, &r.set, space)?;
            if noise_sd > 0.0 {
                for x in &mut q {
                    *x += noise.sample(&mut rng);
                }
            }
            Ok((r.set.clone(), q))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Weights normalized to sum to 2.
    pub params: QuadraticParams,
    pub theta: f64,
    pub rss: f64,
    pub rounds_used: usize,
    pub outlier: bool,
}

/// `max(theta, 1/theta) > 15` (the smaller weight scaled to 1) or `|b_s| > 15`.
pub fn is_outlier(theta: f64, ideal: &[f64]) -> bool {
    theta.max(1.0 / theta) > OUTLIER_LIMIT || ideal.iter().any(|b| b.abs() > OUTLIER_LIMIT)
}

struct Residuals<'a> {
    space: &'a AnswerSpace,
    rounds: Vec<(&'a BudgetSet, Vec<f64>, f64, Vec<f64>)>,
}

impl<'a> Residuals<'a> {
    fn new(space: &'a AnswerSpace, data: &'a [(BudgetSet, Vec<f64>)]) -> Self {
        let rounds = data
            .iter()
            .filter(|(set, _)| rational::is_positive(&set.budget))
            .map(|(set, q)| {
                let prices = set.prices.iter().map(rational::to_f64).collect();
                let target = to_corner_coords_f64(q, &set.corner, space);
                (set, prices, rational::to_f64(&set.budget), target)
            })
            .collect();
        Self { space, rounds }
    }

    fn rss(&self, x: &[f64]) -> f64 {
        let theta = x[0].clamp(-LN_THETA_BOUND, LN_THETA_BOUND).exp();
        let weights = [theta, 1.0];
        let ideal = [x[1], x[2]];
        self.rounds
            .iter()
            .map(|(set, prices, budget, target)| {
                let q = demand_unchecked(&weights, &ideal, prices, *budget, &set.corner, self.space);
                (q[0] - target[0]).powi(2) + (q[1] - target[1]).powi(2)
            })
            .sum()
    }
}

impl CostFunction for &Residuals<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.rss(x))
    }
}

/// Residual sum of squares at `(ln theta, b_1, b_2)`, skipping rounds with
/// no positive budget.
pub fn residual_sum(space: &AnswerSpace, data: &[(BudgetSet, Vec<f64>)], x: [f64; 3]) -> f64 {
    Residuals::new(space, data).rss(&x)
}

fn local_search(problem: &Residuals, start: Vec<f64>, steps: [f64; 3]) -> (Vec<f64>, f64) {
    let mut simplex = vec![start.clone()];
    for (i, step) in steps.iter().enumerate() {
        let mut v = start.clone();
        v[i] += step;
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(SD_TOLERANCE)
        .expect("tolerance is non-negative");
    let run = Executor::new(problem, solver)
        .configure(|state| state.max_iters(MAX_ITERS))
        .run();
    match run {
        Ok(res) => {
            let state = res.state();
            let best = state.get_best_param().cloned().unwrap_or(start);
            let cost = problem.rss(&best);
            (best, cost)
        }
        Err(_) => {
            let cost = problem.rss(&start);
            (start, cost)
        }
    }
}

/// Fits a dataset's answers.
pub fn fit(d: &Dataset) -> Result<FitResult> {
    let data: Vec<(BudgetSet, Vec<f64>)> = d
        .observations()
        .iter()
        .map(|o| (o.set.clone(), o.answer.values().iter().map(|&v| v as f64).collect()))
        .collect();
    fit_points(d.space(), &data)
}

/// Least-squares fit of `(theta, b)` to real answers in absolute coordinates.
///
/// Local searches start from a 5x5x5 grid (theta log-spaced over [0.1, 10],
/// each `b_s` at 0, N/4, N/2, 3N/4, N), run in parallel; the lowest residual
/// wins with ties going to the earliest start, and the winner is refined once
/// more from a fresh simplex.
pub fn fit_points(space: &AnswerSpace, data: &[(BudgetSet, Vec<f64>)]) -> Result<FitResult> {
    if space.questions() != 2 {
        return Err(Error::UnsupportedDimension(space.questions()));
    }
    for (_, q) in data {
        if q.len() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, found: q.len() });
        }
    }
    let problem = Residuals::new(space, data);
    let used = problem.rounds.len();
    if used < MIN_FIT_ROUNDS {
        return Err(Error::TooFewObservations { found: used, required: MIN_FIT_ROUNDS });
    }
    let at_corner = |q: &Vec<f64>| {
        q.iter().zip(space.scales()).all(|(&x, &n)| x == 0.0 || x == n as f64)
    };
    if problem.rounds.iter().all(|(set, _, _, target)| {
        at_corner(&to_corner_coords_f64(target, &set.corner, space))
    }) {
        return Err(Error::DegenerateCorners);
    }

    let n = [space.scale(0) as f64, space.scale(1) as f64];
    let (lt_lo, lt_hi) = (THETA_RANGE.0.ln(), THETA_RANGE.1.ln());
    let grid = |i: usize, lo: f64, hi: f64| lo + (hi - lo) * i as f64 / (START_POINTS - 1) as f64;
    let mut starts = Vec::with_capacity(START_POINTS.pow(3));
    for i in 0..START_POINTS {
        for j in 0..START_POINTS {
            for k in 0..START_POINTS {
                starts.push(vec![grid(i, lt_lo, lt_hi), grid(j, 0.0, n[0]), grid(k, 0.0, n[1])]);
            }
        }
    }
    let steps = [0.5, n[0] / 10.0, n[1] / 10.0];
    let results: Vec<(Vec<f64>, f64)> =
        starts.into_par_iter().map(|s| local_search(&problem, s, steps)).collect();
    let (mut best, mut best_rss) = results
        .into_iter()
        .reduce(|a, b| if b.1 < a.1 { b } else { a })
        .expect("start grid is non-empty");
    let refine_steps = [0.05, n[0] / 100.0, n[1] / 100.0];
    let (refined, refined_rss) = local_search(&problem, best.clone(), refine_steps);
    if refined_rss <= best_rss {
        best = refined;
        best_rss = refined_rss;
    }

    let theta = best[0].clamp(-LN_THETA_BOUND, LN_THETA_BOUND).exp();
    let ideal = [best[1], best[2]];
    Ok(FitResult {
        params: QuadraticParams::from_theta(theta, ideal)?,
        theta,
        rss: best_rss,
        rounds_used: used,
        outlier: is_outlier(theta, &ideal),
    })
}
