//! Round generation and answer enforcement for one respondent.
//!
//! Round 0 is the unconstrained survey. Its answer `q0` fixes every later
//! budget: a round starting from corner `c` with prices `p` gets
//! `R = p . q0_c - slack`, so `q0` is just out of reach. Rounds where
//! `p . q0_c <= slack` leave no room to move and are excluded.

use num_traits::Zero;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{BudgetSet, Dataset, Observation};
use crate::error::{Error, Result};
use crate::rational::{self, Rational};
use crate::space::{Answer, AnswerSpace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    pub space: AnswerSpace,
    pub rounds_per_corner: usize,
    /// Round `j` of a corner uses `price_vectors[j % len]`.
    #[serde(with = "rational::pair_vec_vec")]
    pub price_vectors: Vec<Vec<Rational>>,
    #[serde(with = "rational::pair")]
    pub budget_slack: Rational,
    pub shuffle_seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            space: AnswerSpace::new(vec![10, 10]).expect("valid default space"),
            rounds_per_corner: 2,
            price_vectors: vec![
                vec![rational::int(1), rational::int(2)],
                vec![rational::int(2), rational::int(1)],
            ],
            budget_slack: rational::int(2),
            shuffle_seed: 0,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds_per_corner == 0 {
            return Err(Error::InvalidConfig("rounds_per_corner must be at least 1".into()));
        }
        if self.price_vectors.is_empty() {
            return Err(Error::InvalidConfig("no price vectors".into()));
        }
        for p in &self.price_vectors {
            if p.len() != self.space.questions() {
                return Err(Error::DimensionMismatch {
                    expected: self.space.questions(),
                    found: p.len(),
                });
            }
            if !p.iter().all(rational::is_positive) {
                return Err(Error::InvalidConfig("prices must be strictly positive".into()));
            }
        }
        // without slack q0 would stay affordable and nothing is revealed
        if !rational::is_positive(&self.budget_slack) {
            return Err(Error::InvalidConfig("budget_slack must be positive".into()));
        }
        Ok(())
    }

    pub fn total_rounds(&self) -> usize {
        self.rounds_per_corner * self.space.corners().len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Round {
    pub set: BudgetSet,
    pub excluded: bool,
}

/// Every corner's rounds for `q0`, in shuffled presentation order.
pub fn generate_rounds(config: &SessionConfig, q0: &Answer) -> Result<Vec<Round>> {
    config.validate()?;
    let space = &config.space;
    space.check(q0.values())?;
    let mut rounds = Vec::with_capacity(config.total_rounds());
    for corner in space.corners() {
        for j in 0..config.rounds_per_corner {
            let prices = config.price_vectors[j % config.price_vectors.len()].clone();
            let q0_cost = rational::dot(
                &prices,
                &crate::space::corner_coords_unchecked(q0.values(), &corner, space.scales()),
            );
            let excluded = q0_cost <= config.budget_slack;
            let set = BudgetSet::new(space, corner.clone(), prices, q0_cost - &config.budget_slack)?;
            rounds.push(Round { set, excluded });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.shuffle_seed);
    rounds.shuffle(&mut rng);
    Ok(rounds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    AwaitingRound0,
    InProgress,
    Complete,
}

/// One respondent's progress. Rounds are numbered from 1 in presentation
/// order; round 0 is the unconstrained survey.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    config: SessionConfig,
    round0: Option<Answer>,
    rounds: Vec<Round>,
    answers: Vec<Option<Answer>>,
}

impl SessionState {
    pub fn new(config: SessionConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, round0: None, rounds: vec![], answers: vec![] })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn space(&self) -> &AnswerSpace {
        &self.config.space
    }

    pub fn round0(&self) -> Option<&Answer> {
        self.round0.as_ref()
    }

    /// Generated rounds; empty until round 0 is answered.
    pub fn rounds(&self) -> &[Round] {
        &self.rounds
    }

    pub fn answers(&self) -> &[Option<Answer>] {
        &self.answers
    }

    /// Constrained round `index` (1-based).
    pub fn round(&self, index: usize) -> Option<&Round> {
        index.checked_sub(1).and_then(|i| self.rounds.get(i))
    }

    pub fn status(&self) -> Status {
        match self.current_round() {
            _ if self.round0.is_none() => Status::AwaitingRound0,
            Some(_) => Status::InProgress,
            None => Status::Complete,
        }
    }

    /// Index of the round awaiting an answer; excluded rounds are skipped.
    pub fn current_round(&self) -> Option<usize> {
        if self.round0.is_none() {
            return Some(0);
        }
        self.rounds
            .iter()
            .zip(&self.answers)
            .position(|(r, a)| !r.excluded && a.is_none())
            .map(|i| i + 1)
    }

    /// Records an answer. The state is left untouched on error.
    pub fn submit(&mut self, round_index: usize, answer: Vec<u32>) -> Result<()> {
        let expected = self.current_round().ok_or(Error::SessionComplete)?;
        if round_index != expected {
            return Err(Error::WrongRound { expected, found: round_index });
        }
        let answer = self.config.space.answer(answer)?;
        if expected == 0 {
            let rounds = generate_rounds(&self.config, &answer)?;
            self.answers = vec![None; rounds.len()];
            self.rounds = rounds;
            self.round0 = Some(answer);
            return Ok(());
        }
        let set = &self.rounds[expected - 1].set;
        let cost = set.cost_in(&self.config.space, &answer);
        if cost > set.budget {
            return Err(Error::OverBudget { round: expected, shortfall: cost - &set.budget });
        }
        self.answers[expected - 1] = Some(answer);
        Ok(())
    }

    /// Tokens left after `answer` in round `index`; negative when over budget.
    pub fn remaining(&self, index: usize, answer: &Answer) -> Option<Rational> {
        let round = self.round(index)?;
        Some(&round.set.budget - round.set.cost_in(&self.config.space, answer))
    }

    /// Included rounds in presentation order, excluded budget sets listed apart.
    pub fn to_dataset(&self) -> Result<Dataset> {
        if self.status() != Status::Complete {
            return Err(Error::SessionIncomplete);
        }
        let mut observations = Vec::new();
        let mut excluded = Vec::new();
        for (round, answer) in self.rounds.iter().zip(&self.answers) {
            match (round.excluded, answer) {
                (true, _) => excluded.push(round.set.clone()),
                (false, Some(a)) => {
                    observations.push(Observation { set: round.set.clone(), answer: a.clone() })
                }
                (false, None) => return Err(Error::SessionIncomplete),
            }
        }
        Dataset::new(
            self.config.space.clone(),
            self.round0.clone().expect("complete session has round 0"),
            observations,
            excluded,
        )
    }
}

/// Budget sets of the included rounds, in order.
pub fn included_sets(rounds: &[Round]) -> Vec<BudgetSet> {
    rounds.iter().filter(|r| !r.excluded).map(|r| r.set.clone()).collect()
}

/// Whether every round's budget exceeds zero exactly when it is included.
pub fn exclusion_is_consistent(rounds: &[Round]) -> bool {
    rounds.iter().all(|r| r.excluded == (r.set.budget <= Rational::zero()))
}
