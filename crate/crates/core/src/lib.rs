//! Analysis toolkit for priced surveys.
//!
//! A priced survey asks the same questions over several rounds. Each
//! constrained round starts from a corner of the answer grid and charges
//! tokens for every step away from it. This crate models those budget sets,
//! tests answers for revealed-preference consistency across corner coordinate
//! systems, builds a single-peaked piecewise-linear utility rationalizing
//! consistent data, and estimates a smooth quadratic utility (ideal answer
//! plus question weights).
//!
//! Module map:
//!
//! - [`space`]: answer grids, corners and corner coordinates.
//! - [`dataset`]: budget sets, observations, the dataset document format.
//! - [`revealed`]: direct/indirect revealed preference and the GARP test.
//! - [`indices`]: efficiency-deflated GARP, CCEI and Bronars power.
//! - [`afriat`]: Afriat numbers, the rationalizing utility and peak search.
//! - [`quadratic`]: quadratic utility demand, simulation and estimation.
//! - [`session`]: round generation and answer enforcement for one respondent.

mod error;

pub mod afriat;
pub mod dataset;
pub mod indices;
pub mod quadratic;
pub mod rational;
pub mod revealed;
pub mod session;
pub mod space;

pub use error::{Error, Result};
pub use rational::Rational;
