//! Answer grids and corner coordinate systems.
//!
//! Answers are integer vectors in absolute coordinates, measured from the
//! zero corner. Every corner `c` defines its own coordinate system in which
//! question `s` is measured as the distance from `c_s`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The grid `X = {0..N(1)} x ... x {0..N(S)}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnswerSpace {
    scales: Vec<u32>,
}

/// A corner of the grid: every coordinate is `0` or `N(s)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Corner(Vec<u32>);

/// A grid point in absolute coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Answer(Vec<u32>);

impl AnswerSpace {
    pub fn new(scales: Vec<u32>) -> Result<Self> {
        if scales.is_empty() {
            return Err(Error::InvalidSpace("at least one question is required".into()));
        }
        if let Some(s) = scales.iter().position(|&n| n == 0) {
            return Err(Error::InvalidSpace(format!("question {s} has an empty scale")));
        }
        // 2^S corners must be enumerable and the grid must stay addressable.
        if scales.len() > 16 {
            return Err(Error::InvalidSpace(format!("{} questions is too many", scales.len())));
        }
        Ok(Self { scales })
    }

    pub fn questions(&self) -> usize {
        self.scales.len()
    }

    pub fn scales(&self) -> &[u32] {
        &self.scales
    }

    pub fn scale(&self, question: usize) -> u32 {
        self.scales[question]
    }

    /// Number of grid points.
    pub fn size(&self) -> usize {
        self.scales.iter().map(|&n| n as usize + 1).product()
    }

    pub fn zero_corner(&self) -> Corner {
        Corner(vec![0; self.questions()])
    }

    /// All `2^S` corners; bit `s` of the enumeration index selects `N(s)`.
    pub fn corners(&self) -> Vec<Corner> {
        let s = self.questions();
        (0..1usize << s)
            .map(|mask| {
                Corner(
                    (0..s)
                        .map(|q| if mask >> q & 1 == 1 { self.scales[q] } else { 0 })
                        .collect(),
                )
            })
            .collect()
    }

    /// Largest answer expressible in any corner system, `(N(1), ..., N(S))`.
    pub fn max_answer(&self) -> Vec<u32> {
        self.scales.clone()
    }

    pub fn check(&self, values: &[u32]) -> Result<()> {
        if values.len() != self.questions() {
            return Err(Error::DimensionMismatch {
                expected: self.questions(),
                found: values.len(),
            });
        }
        for (question, (&v, &max)) in values.iter().zip(&self.scales).enumerate() {
            if v > max {
                return Err(Error::OutOfRange { question, value: v as i64, max });
            }
        }
        Ok(())
    }

    pub fn contains(&self, answer: &Answer) -> bool {
        self.check(answer.values()).is_ok()
    }

    pub fn answer(&self, values: Vec<u32>) -> Result<Answer> {
        self.check(&values)?;
        Ok(Answer(values))
    }

    pub fn corner(&self, coords: Vec<u32>) -> Result<Corner> {
        if coords.len() != self.questions() {
            return Err(Error::DimensionMismatch {
                expected: self.questions(),
                found: coords.len(),
            });
        }
        if let Some(question) = coords
            .iter()
            .zip(&self.scales)
            .position(|(&c, &n)| c != 0 && c != n)
        {
            return Err(Error::NotACorner { question, coords });
        }
        Ok(Corner(coords))
    }

    /// Every grid point in lexicographic order (first question most significant).
    pub fn points(&self) -> GridPoints<'_> {
        GridPoints { space: self, next: Some(vec![0; self.questions()]) }
    }

    /// Position of `answer` in [`AnswerSpace::points`] order.
    pub fn index_of(&self, answer: &Answer) -> usize {
        answer
            .values()
            .iter()
            .zip(&self.scales)
            .fold(0, |acc, (&v, &n)| acc * (n as usize + 1) + v as usize)
    }

    /// Clamp a real point into the grid box and round to the nearest integer.
    pub fn round_clamped(&self, point: &[f64]) -> Answer {
        Answer(
            point
                .iter()
                .zip(&self.scales)
                .map(|(&x, &n)| x.clamp(0.0, n as f64).round() as u32)
                .collect(),
        )
    }
}

pub struct GridPoints<'a> {
    space: &'a AnswerSpace,
    next: Option<Vec<u32>>,
}

impl Iterator for GridPoints<'_> {
    type Item = Answer;

    fn next(&mut self) -> Option<Answer> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut s = succ.len();
        loop {
            if s == 0 {
                break;
            }
            s -= 1;
            if succ[s] < self.space.scales[s] {
                succ[s] += 1;
                self.next = Some(succ);
                break;
            }
            succ[s] = 0;
        }
        Some(Answer(current))
    }
}

impl Corner {
    pub fn coords(&self) -> &[u32] {
        &self.0
    }

    /// Whether question `s` starts at its maximum in this corner.
    pub fn is_high(&self, question: usize) -> bool {
        self.0[question] != 0
    }

    /// The corner `n_c` with `(n_c)_s = N(s) - c_s`.
    pub fn opposite(&self, space: &AnswerSpace) -> Corner {
        Corner(
            self.0
                .iter()
                .zip(space.scales())
                .map(|(&c, &n)| n - c)
                .collect(),
        )
    }

    /// The corner as an answer: the round's default.
    pub fn as_answer(&self) -> Answer {
        Answer(self.0.clone())
    }
}

impl Answer {
    pub fn values(&self) -> &[u32] {
        &self.0
    }

    pub fn into_values(self) -> Vec<u32> {
        self.0
    }
}

/// `q_c`: coordinates of `q` in the system whose origin is corner `c`.
pub fn to_corner_coords(q: &Answer, c: &Corner, space: &AnswerSpace) -> Result<Vec<u32>> {
    space.check(q.values())?;
    space.check(c.coords())?;
    Ok(corner_coords_unchecked(q.values(), c, space.scales()))
}

pub(crate) fn corner_coords_unchecked(q: &[u32], c: &Corner, scales: &[u32]) -> Vec<u32> {
    q.iter()
        .zip(c.coords())
        .zip(scales)
        .map(|((&v, &cs), &n)| if cs == 0 { v } else { n - v })
        .collect()
}

/// Real-valued corner transform, used for continuous demand.
pub fn to_corner_coords_f64(point: &[f64], c: &Corner, space: &AnswerSpace) -> Vec<f64> {
    point
        .iter()
        .zip(c.coords())
        .zip(space.scales())
        .map(|((&v, &cs), &n)| if cs == 0 { v } else { n as f64 - v })
        .collect()
}
