//! Budget sets, observations and the dataset document.
//!
//! Document layout (JSON):
//!
//! ```json
//! {"scales": [4, 4], "round0": [2, 2],
//!  "observations": [{"corner": [0, 0], "prices": [[1, 1], [1, 1]],
//!                    "budget": [2, 1], "answer": [1, 1]}]}
//! ```
//!
//! Rationals are `[numerator, denominator]` pairs. Unknown fields are
//! rejected. An optional `excluded` list carries rounds dropped by the session
//! exclusion rule (same fields as an observation, without `answer`).

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{self, Rational};
use crate::space::{corner_coords_unchecked, AnswerSpace, Answer, Corner};

/// `B^k`: the answers whose corner-coordinate cost is within the budget.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BudgetSet {
    pub corner: Corner,
    pub prices: Vec<Rational>,
    pub budget: Rational,
}

impl BudgetSet {
    pub fn new(
        space: &AnswerSpace,
        corner: Corner,
        prices: Vec<Rational>,
        budget: Rational,
    ) -> Result<Self> {
        space.check(corner.coords())?;
        if prices.len() != space.questions() {
            return Err(Error::DimensionMismatch {
                expected: space.questions(),
                found: prices.len(),
            });
        }
        if let Some(s) = prices.iter().position(|p| !rational::is_positive(p)) {
            return Err(Error::InvalidParams(format!("price of question {s} must be positive")));
        }
        Ok(Self { corner, prices, budget })
    }

    /// `p^k . q_{o^k}` for an answer already known to lie in `space`.
    pub fn cost_in(&self, space: &AnswerSpace, q: &Answer) -> Rational {
        rational::dot(
            &self.prices,
            &corner_coords_unchecked(q.values(), &self.corner, space.scales()),
        )
    }

    pub fn contains_in(&self, space: &AnswerSpace, q: &Answer) -> bool {
        self.cost_in(space, q) <= self.budget
    }

    pub fn min_price(&self) -> &Rational {
        self.prices.iter().min().expect("non-empty prices")
    }
}

/// One constrained round: its budget set and the chosen answer `q^k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Observation {
    pub set: BudgetSet,
    pub answer: Answer,
}

/// `D = {q^k, B^k}` together with the unconstrained round-0 answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    space: AnswerSpace,
    round0: Answer,
    observations: Vec<Observation>,
    excluded: Vec<BudgetSet>,
}

/// Cost of `q` under a round's prices, in that round's corner coordinates.
pub fn cost(space: &AnswerSpace, q: &Answer, set: &BudgetSet) -> Result<Rational> {
    space.check(q.values())?;
    if set.prices.len() != space.questions() {
        return Err(Error::DimensionMismatch {
            expected: space.questions(),
            found: set.prices.len(),
        });
    }
    Ok(set.cost_in(space, q))
}

pub fn budget_contains(space: &AnswerSpace, q: &Answer, set: &BudgetSet) -> Result<bool> {
    Ok(cost(space, q, set)? <= set.budget)
}

impl Dataset {
    /// Validates every dataset invariant; errors name the offending round
    /// (1-based, as in `k = 1..K`).
    pub fn new(
        space: AnswerSpace,
        round0: Answer,
        observations: Vec<Observation>,
        excluded: Vec<BudgetSet>,
    ) -> Result<Self> {
        space.check(round0.values()).map_err(|e| Error::Invariant {
            round: 0,
            message: format!("round-0 answer: {e}"),
        })?;
        for (i, obs) in observations.iter().enumerate() {
            let round = i + 1;
            let fail = |message: String| Error::Invariant { round, message };
            BudgetSet::new(
                &space,
                obs.set.corner.clone(),
                obs.set.prices.clone(),
                obs.set.budget.clone(),
            )
            .map_err(|e| fail(e.to_string()))?;
            space.corner(obs.set.corner.coords().to_vec()).map_err(|e| fail(e.to_string()))?;
            if obs.set.budget < rational::zero() {
                return Err(fail("budget must be non-negative".into()));
            }
            space.check(obs.answer.values()).map_err(|e| fail(format!("answer: {e}")))?;
            let spent = obs.set.cost_in(&space, &obs.answer);
            if spent > obs.set.budget {
                return Err(fail(format!(
                    "answer costs {spent} tokens, budget is {}",
                    obs.set.budget
                )));
            }
            let q0_cost = obs.set.cost_in(&space, &round0);
            if q0_cost <= obs.set.budget {
                return Err(fail(format!(
                    "round-0 answer is affordable (cost {q0_cost} <= budget {})",
                    obs.set.budget
                )));
            }
        }
        for set in &excluded {
            BudgetSet::new(&space, set.corner.clone(), set.prices.clone(), set.budget.clone())?;
            space.corner(set.corner.coords().to_vec())?;
        }
        Ok(Self { space, round0, observations, excluded })
    }

    pub fn space(&self) -> &AnswerSpace {
        &self.space
    }

    pub fn round0(&self) -> &Answer {
        &self.round0
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    /// Rounds generated for the respondent but excluded from analysis.
    pub fn excluded(&self) -> &[BudgetSet] {
        &self.excluded
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Dataset restricted to the observations at `keep` (in the given order).
    pub fn subset(&self, keep: &[usize]) -> Dataset {
        Dataset {
            space: self.space.clone(),
            round0: self.round0.clone(),
            observations: keep.iter().map(|&k| self.observations[k].clone()).collect(),
            excluded: self.excluded.clone(),
        }
    }

    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let doc: DatasetDoc =
            serde_json::from_reader(reader).map_err(|e| Error::Schema(e.to_string()))?;
        doc.into_dataset()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_reader(text.as_bytes())
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = DatasetDoc::from_dataset(self)?;
        serde_json::to_string_pretty(&doc).map_err(|e| Error::Schema(e.to_string()))
    }
}

pub fn load_dataset(source: impl Read) -> Result<Dataset> {
    Dataset::from_reader(source)
}

pub fn save_dataset(d: &Dataset) -> Result<Vec<u8>> {
    let mut bytes = d.to_json()?.into_bytes();
    bytes.push(b'\n');
    Ok(bytes)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetDoc {
    scales: Vec<u32>,
    round0: Vec<u32>,
    observations: Vec<ObservationDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    excluded: Vec<BudgetDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObservationDoc {
    corner: Vec<u32>,
    #[serde(with = "rational::pair_vec")]
    prices: Vec<Rational>,
    #[serde(with = "rational::pair")]
    budget: Rational,
    answer: Vec<u32>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BudgetDoc {
    corner: Vec<u32>,
    #[serde(with = "rational::pair_vec")]
    prices: Vec<Rational>,
    #[serde(with = "rational::pair")]
    budget: Rational,
}

impl DatasetDoc {
    fn into_dataset(self) -> Result<Dataset> {
        let space = AnswerSpace::new(self.scales)?;
        let round0 = space.answer(self.round0).map_err(|e| Error::Invariant {
            round: 0,
            message: format!("round-0 answer: {e}"),
        })?;
        let observations = self
            .observations
            .into_iter()
            .enumerate()
            .map(|(i, o)| {
                let fail = |e: Error| Error::Invariant { round: i + 1, message: e.to_string() };
                let corner = space.corner(o.corner).map_err(fail)?;
                let set = BudgetSet::new(&space, corner, o.prices, o.budget).map_err(fail)?;
                let answer = space.answer(o.answer).map_err(fail)?;
                Ok(Observation { set, answer })
            })
            .collect::<Result<Vec<_>>>()?;
        let excluded = self
            .excluded
            .into_iter()
            .map(|b| {
                let corner = space.corner(b.corner)?;
                BudgetSet::new(&space, corner, b.prices, b.budget)
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(space, round0, observations, excluded)
    }

    fn from_dataset(d: &Dataset) -> Result<Self> {
        // validate that every rational fits the wire format before writing
        for obs in &d.observations {
            for p in &obs.set.prices {
                rational::to_pair(p)?;
            }
            rational::to_pair(&obs.set.budget)?;
        }
        Ok(Self {
            scales: d.space.scales().to_vec(),
            round0: d.round0.values().to_vec(),
            observations: d
                .observations
                .iter()
                .map(|o| ObservationDoc {
                    corner: o.set.corner.coords().to_vec(),
                    prices: o.set.prices.clone(),
                    budget: o.set.budget.clone(),
                    answer: o.answer.values().to_vec(),
                })
                .collect(),
            excluded: d
                .excluded
                .iter()
                .map(|b| BudgetDoc {
                    corner: b.corner.coords().to_vec(),
                    prices: b.prices.clone(),
                    budget: b.budget.clone(),
                })
                .collect(),
        })
    }
}
