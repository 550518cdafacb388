use psm_core::afriat::{verify_single_peaked, Peak, PeakViolation, PiecewiseUtility};
use psm_core::dataset::Dataset;
use psm_core::rational::{self, Rational};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridValue {
    pub answer: Vec<u32>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AfriatReport {
    pub scales: Vec<u32>,
    #[serde(with = "rational::pair_vec")]
    pub u_levels: Vec<Rational>,
    #[serde(with = "rational::pair_vec")]
    pub multipliers: Vec<Rational>,
    pub peak: Peak,
    pub single_peaked: bool,
    pub single_peak_violation: Option<PeakViolation>,
    /// Every grid answer in enumeration order (last question fastest).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<GridValue>>,
}

/// Constructs the piecewise-linear utility and its peak; `eval_grid` adds the
/// value at every answer for external plotting.
pub fn afriat_report(d: &Dataset, eval_grid: bool) -> psm_core::Result<AfriatReport> {
    let u = PiecewiseUtility::from_dataset(d)?;
    let check = verify_single_peaked(d.space(), |q| u.evaluate_exact(q));
    let grid = eval_grid.then(|| {
        d.space()
            .points()
            .map(|q| GridValue { value: u.evaluate(&q), answer: q.into_values() })
            .collect()
    });
    Ok(AfriatReport {
        scales: d.space().scales().to_vec(),
        u_levels: u.solution().u_levels.clone(),
        multipliers: u.solution().multipliers.clone(),
        peak: u.find_peak(),
        single_peaked: check.single_peaked,
        single_peak_violation: check.violation,
        grid,
    })
}
