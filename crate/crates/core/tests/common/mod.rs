#![allow(dead_code)]

use std::path::PathBuf;

use psm_core::dataset::{BudgetSet, Dataset, Observation};
use psm_core::quadratic::QuadraticParams;
use psm_core::rational::int;
use psm_core::session::{generate_rounds, Round, SessionConfig};
use psm_core::space::AnswerSpace;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> Dataset {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "tests", "fixtures", name].iter().collect();
    Dataset::from_reader(std::fs::File::open(path).unwrap()).unwrap()
}

fn coords(q: &[u32], corner: &[u32], scales: &[u32]) -> Vec<f64> {
    q.iter()
        .zip(corner)
        .zip(scales)
        .map(|((&v, &c), &n)| if c == 0 { v as f64 } else { (n - v) as f64 })
        .collect()
}

/// Expenditure of round `k`'s prices at answer `q`, in plain floats.
pub fn spend(d: &Dataset, k: usize, q: &[u32]) -> f64 {
    let set = &d.observations()[k].set;
    let p: Vec<f64> = set.prices.iter().map(psm_core::rational::to_f64).collect();
    coords(q, set.corner.coords(), d.space().scales()).iter().zip(&p).map(|(x, p)| x * p).sum()
}

/// Ordered-pair GARP_e violations by depth-first search over the direct relation.
pub fn naive_violations(d: &Dataset, e: f64) -> usize {
    let n = d.len();
    let obs = d.observations();
    let own: Vec<f64> = (0..n).map(|k| spend(d, k, obs[k].answer.values())).collect();
    let weak = |k: usize, l: usize| {
        obs[k].answer == obs[l].answer || e * own[k] >= spend(d, k, obs[l].answer.values())
    };
    let strict = |k: usize, l: usize| e * own[k] > spend(d, k, obs[l].answer.values());
    let reaches = |from: usize, to: usize| {
        let mut seen = vec![false; n];
        let mut stack = vec![from];
        while let Some(v) = stack.pop() {
            if v == to {
                return true;
            }
            if seen[v] {
                continue;
            }
            seen[v] = true;
            stack.extend((0..n).filter(|&w| weak(v, w)));
        }
        false
    };
    (0..n)
        .flat_map(|k| (0..n).map(move |l| (k, l)))
        .filter(|&(k, l)| k != l && reaches(k, l) && strict(l, k))
        .count()
}

/// Random interior agent: theta log-uniform on [0.2, 5], b uniform on [1.5, 8.5]^2.
pub fn random_agent(rng: &mut ChaCha8Rng) -> (f64, [f64; 2], QuadraticParams) {
    let theta = rng.random_range(0.2f64.ln()..5f64.ln()).exp();
    let b = [rng.random_range(1.5..8.5), rng.random_range(1.5..8.5)];
    (theta, b, QuadraticParams::from_theta(theta, b).unwrap())
}

/// Default session design for an agent's round-0 answer.
pub fn design_for(params: &QuadraticParams, shuffle_seed: u64) -> (SessionConfig, Vec<Round>) {
    let config = SessionConfig { shuffle_seed, ..SessionConfig::default() };
    let q0 = params.round0(&config.space);
    let rounds = generate_rounds(&config, &q0).unwrap();
    (config, rounds)
}

/// A valid dataset with random corners, prices, budgets and affordable
/// answers; GARP may or may not hold.
pub fn random_dataset(seed: u64, scales: &[u32], max_rounds: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let space = AnswerSpace::new(scales.to_vec()).unwrap();
    let q0 = space
        .answer(scales.iter().map(|&n| rng.random_range(0..=n)).collect())
        .unwrap();
    let corners = space.corners();
    let k = rng.random_range(1..=max_rounds);
    let mut observations = Vec::new();
    while observations.len() < k {
        let corner = corners[rng.random_range(0..corners.len())].clone();
        let prices: Vec<i64> = (0..scales.len()).map(|_| rng.random_range(1..=3)).collect();
        let q0_cost: i64 = coords(q0.values(), corner.coords(), scales)
            .iter()
            .zip(&prices)
            .map(|(x, p)| *x as i64 * p)
            .sum();
        let slack = rng.random_range(1..=3);
        if q0_cost <= slack {
            continue;
        }
        let set = BudgetSet::new(
            &space,
            corner,
            prices.iter().map(|&p| int(p)).collect(),
            int(q0_cost - slack),
        )
        .unwrap();
        let affordable: Vec<_> = space.points().filter(|q| set.contains_in(&space, q)).collect();
        // lean toward the frontier, where choices are informative
        let frontier: Vec<_> = affordable
            .iter()
            .filter(|q| set.cost_in(&space, q) + set.min_price() > set.budget)
            .cloned()
            .collect();
        let pool = if rng.random_bool(0.8) && !frontier.is_empty() { &frontier } else { &affordable };
        let answer = pool[rng.random_range(0..pool.len())].clone();
        observations.push(Observation { set, answer });
    }
    Dataset::new(space, q0, observations, vec![]).unwrap()
}
