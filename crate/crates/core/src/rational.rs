//! Exact token arithmetic.
//!
//! Prices and budgets are rationals so that revealed-preference comparisons
//! are exact. On the wire a rational is a `[numerator, denominator]` pair with
//! a positive denominator.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type Rational = BigRational;

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Panics on a zero denominator.
pub fn ratio(numer: i64, denom: i64) -> Rational {
    Rational::new(BigInt::from(numer), BigInt::from(denom))
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(if r.is_negative() { f64::NEG_INFINITY } else { f64::INFINITY })
}

/// Reduced `[numerator, denominator]` pair, if both fit in an `i64`.
pub fn to_pair(r: &Rational) -> Result<[i64; 2]> {
    let n = r.numer().to_i64();
    let d = r.denom().to_i64();
    match (n, d) {
        (Some(n), Some(d)) => Ok([n, d]),
        _ => Err(Error::Schema(format!("rational {r} does not fit a 64-bit pair"))),
    }
}

pub fn from_pair(pair: [i64; 2]) -> Result<Rational> {
    if pair[1] <= 0 {
        return Err(Error::Schema(format!(
            "rational [{}, {}] must have a positive denominator",
            pair[0], pair[1]
        )));
    }
    Ok(ratio(pair[0], pair[1]))
}

pub fn is_positive(r: &Rational) -> bool {
    r.is_positive()
}

pub fn zero() -> Rational {
    Rational::zero()
}

pub fn one() -> Rational {
    Rational::one()
}

/// Dot product of rational prices with integer coordinates.
pub fn dot(prices: &[Rational], coords: &[u32]) -> Rational {
    prices
        .iter()
        .zip(coords)
        .fold(Rational::zero(), |acc, (p, &c)| acc + p * BigInt::from(c))
}

/// Rational parsed from a decimal literal such as `0.7`; used by the CLI.
pub fn parse_decimal(text: &str) -> Option<Rational> {
    let text = text.trim();
    if let Some((n, d)) = text.split_once('/') {
        let n: i64 = n.trim().parse().ok()?;
        let d: i64 = d.trim().parse().ok()?;
        return (d > 0).then(|| ratio(n, d));
    }
    let (neg, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text),
    };
    let (whole, frac) = body.split_once('.').unwrap_or((body, ""));
    if whole.is_empty() && frac.is_empty() {
        return None;
    }
    let digits = format!("{whole}{frac}");
    let numer: BigInt = digits.parse().ok()?;
    let denom = BigInt::from(10u32).pow(frac.len() as u32);
    let r = Rational::new(numer, denom);
    Some(if neg { -r } else { r })
}

struct Wire(Rational);

impl Serialize for Wire {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        to_pair(&self.0)
            .map_err(serde::ser::Error::custom)?
            .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Wire {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let pair = <[i64; 2]>::deserialize(d)?;
        from_pair(pair).map(Wire).map_err(D::Error::custom)
    }
}

/// `#[serde(with = "pair")]` for a single rational.
pub mod pair {
    use super::*;

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
        Wire(r.clone()).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Rational, D::Error> {
        Wire::deserialize(d).map(|w| w.0)
    }
}

/// `#[serde(with = "pair_vec")]` for a vector of rationals.
pub mod pair_vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[Rational], s: S) -> std::result::Result<S::Ok, S::Error> {
        let wire: Vec<Wire> = v.iter().cloned().map(Wire).collect();
        wire.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Vec<Rational>, D::Error> {
        Ok(Vec::<Wire>::deserialize(d)?.into_iter().map(|w| w.0).collect())
    }
}

/// `#[serde(with = "pair_vec_vec")]` for a list of price vectors.
pub mod pair_vec_vec {
    use super::*;

    pub fn serialize<S: Serializer>(
        v: &[Vec<Rational>],
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        let wire: Vec<Vec<Wire>> = v
            .iter()
            .map(|row| row.iter().cloned().map(Wire).collect())
            .collect();
        wire.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Vec<Vec<Rational>>, D::Error> {
        Ok(Vec::<Vec<Wire>>::deserialize(d)?
            .into_iter()
            .map(|row| row.into_iter().map(|w| w.0).collect())
            .collect())
    }
}
