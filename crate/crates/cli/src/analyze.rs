//! Per-respondent rationality and preference analysis over dataset files.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::Context;
use psm_core::afriat::PiecewiseUtility;
use psm_core::dataset::{BudgetSet, Dataset};
use psm_core::indices::{bronars_power, ccei, BRONARS_SAMPLING};
use psm_core::quadratic::{fit, OUTLIER_LIMIT};
use psm_core::rational::{self, Rational};
use psm_core::revealed::{check_garp, StrictClause};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::stats::{summarize, Summary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Garp,
    Ccei,
    Bronars,
    Afriat,
    Fit,
}

impl Check {
    pub const ALL: [Check; 5] = [Check::Garp, Check::Ccei, Check::Bronars, Check::Afriat, Check::Fit];
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Check::Garp => "garp",
            Check::Ccei => "ccei",
            Check::Bronars => "bronars",
            Check::Afriat => "afriat",
            Check::Fit => "fit",
        };
        f.write_str(name)
    }
}

impl FromStr for Check {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Check::ALL
            .into_iter()
            .find(|c| c.to_string() == s.trim())
            .ok_or_else(|| format!("unknown check '{s}' (expected garp, ccei, bronars, afriat or fit)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOptions {
    /// Sorted, without duplicates.
    pub checks: Vec<Check>,
    pub bronars_trials: u64,
    /// Shared by every respondent's Bronars draw.
    pub seed: u64,
    pub ccei_tolerance: Rational,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            checks: Check::ALL.to_vec(),
            bronars_trials: 1000,
            seed: 0,
            ccei_tolerance: rational::ratio(1, 1_000_000),
        }
    }
}

impl AnalysisOptions {
    pub fn with_checks(mut self, checks: impl IntoIterator<Item = Check>) -> Self {
        let mut c: Vec<Check> = checks.into_iter().collect();
        c.sort();
        c.dedup();
        self.checks = c;
        self
    }

    fn runs(&self, check: Check) -> bool {
        self.checks.contains(&check)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub version: String,
    pub checks: Vec<Check>,
    pub seed: u64,
    pub bronars_trials: u64,
    pub bronars_sampling: String,
    #[serde(with = "rational::pair")]
    pub ccei_tolerance: Rational,
    pub garp_convention: StrictClause,
    pub outlier_limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub theta: f64,
    pub weights: Vec<f64>,
    pub ideal: Vec<f64>,
    pub rss: f64,
    pub rounds_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RespondentRow {
    pub id: String,
    pub file: String,
    pub rounds: usize,
    pub rounds_excluded: usize,
    pub garp_violations: Option<usize>,
    pub ccei: Option<f64>,
    /// Exact critical efficiency, `n/d`.
    pub ccei_exact: Option<String>,
    pub bronars_power: Option<f64>,
    pub afriat_peak: Option<Vec<u32>>,
    pub afriat_value: Option<f64>,
    pub fit: Option<FitRow>,
    pub outlier: Option<bool>,
    /// Checks that could not run on this respondent, with the reason.
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileFailure {
    pub file: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub metadata: RunMetadata,
    pub rows: Vec<RespondentRow>,
    pub failures: Vec<FileFailure>,
    /// Keyed by column name; a column appears when at least one row has it.
    pub summary: BTreeMap<String, Summary>,
}

impl AnalysisReport {
    pub fn to_json(&self) -> anyhow::Result<Vec<u8>> {
        let mut out = serde_json::to_vec_pretty(self)?;
        out.push(b'\n');
        Ok(out)
    }

    /// Flat per-respondent table.
    pub fn write_csv(&self, out: impl Write) -> anyhow::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "id",
            "file",
            "rounds",
            "rounds_excluded",
            "garp_violations",
            "ccei",
            "bronars_power",
            "afriat_peak",
            "afriat_value",
            "theta",
            "b1",
            "b2",
            "rss",
            "outlier",
        ])?;
        let opt = |v: Option<String>| v.unwrap_or_default();
        for r in &self.rows {
            let fit = r.fit.as_ref();
            w.write_record([
                r.id.clone(),
                r.file.clone(),
                r.rounds.to_string(),
                r.rounds_excluded.to_string(),
                opt(r.garp_violations.map(|v| v.to_string())),
                opt(r.ccei.map(|v| v.to_string())),
                opt(r.bronars_power.map(|v| v.to_string())),
                opt(r.afriat_peak.as_ref().map(|p| {
                    p.iter().map(u32::to_string).collect::<Vec<_>>().join(";")
                })),
                opt(r.afriat_value.map(|v| v.to_string())),
                opt(fit.map(|f| f.theta.to_string())),
                opt(fit.and_then(|f| f.ideal.first()).map(|v| v.to_string())),
                opt(fit.and_then(|f| f.ideal.get(1)).map(|v| v.to_string())),
                opt(fit.map(|f| f.rss.to_string())),
                opt(r.outlier.map(|v| v.to_string())),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn metadata(options: &AnalysisOptions) -> RunMetadata {
    RunMetadata {
        version: env!("CARGO_PKG_VERSION").to_string(),
        checks: options.checks.clone(),
        seed: options.seed,
        bronars_trials: options.bronars_trials,
        bronars_sampling: BRONARS_SAMPLING.to_string(),
        ccei_tolerance: options.ccei_tolerance.clone(),
        garp_convention: StrictClause::default(),
        outlier_limit: OUTLIER_LIMIT,
    }
}

/// Runs the selected checks on one respondent.
pub fn analyze_dataset(id: &str, file: &str, d: &Dataset, options: &AnalysisOptions) -> RespondentRow {
    let mut row = RespondentRow {
        id: id.to_string(),
        file: file.to_string(),
        rounds: d.len(),
        rounds_excluded: d.excluded().len(),
        garp_violations: None,
        ccei: None,
        ccei_exact: None,
        bronars_power: None,
        afriat_peak: None,
        afriat_value: None,
        fit: None,
        outlier: None,
        notes: Vec::new(),
    };
    if options.runs(Check::Garp) {
        row.garp_violations = Some(check_garp(d).count);
    }
    if options.runs(Check::Ccei) {
        match ccei(d, &options.ccei_tolerance) {
            Ok(r) => {
                row.ccei = Some(r.value());
                row.ccei_exact = Some(r.e_star.to_string());
            }
            Err(e) => row.notes.push(format!("ccei: {e}")),
        }
    }
    if options.runs(Check::Bronars) {
        let design: Vec<BudgetSet> = d.observations().iter().map(|o| o.set.clone()).collect();
        match bronars_power(&design, d.space(), options.bronars_trials, options.seed) {
            Ok(r) => row.bronars_power = Some(r.power),
            Err(e) => row.notes.push(format!("bronars: {e}")),
        }
    }
    if options.runs(Check::Afriat) {
        match PiecewiseUtility::from_dataset(d) {
            Ok(u) => {
                let peak = u.find_peak();
                row.afriat_peak = Some(peak.answer.into_values());
                row.afriat_value = Some(peak.value);
            }
            Err(e) => row.notes.push(format!("afriat: {e}")),
        }
    }
    if options.runs(Check::Fit) {
        match fit(d) {
            Ok(f) => {
                row.outlier = Some(f.outlier);
                row.fit = Some(FitRow {
                    theta: f.theta,
                    weights: f.params.weights,
                    ideal: f.params.ideal,
                    rss: f.rss,
                    rounds_used: f.rounds_used,
                });
            }
            Err(e) => row.notes.push(format!("fit: {e}")),
        }
    }
    row
}

fn respondent_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn load(path: &Path) -> anyhow::Result<Dataset> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(Dataset::from_reader(std::io::BufReader::new(file))?)
}

/// Analyzes every file in parallel; rows keep input order and unreadable
/// files are listed as failures.
pub fn analyze_files(paths: &[PathBuf], options: &AnalysisOptions) -> AnalysisReport {
    let results: Vec<Result<RespondentRow, FileFailure>> = paths
        .par_iter()
        .map(|path| {
            let file = path.display().to_string();
            match load(path) {
                Ok(d) => Ok(analyze_dataset(&respondent_id(path), &file, &d, options)),
                Err(e) => Err(FileFailure { file, error: format!("{e:#}") }),
            }
        })
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(row) => rows.push(row),
            Err(f) => failures.push(f),
        }
    }
    let summary = summarize_rows(&rows);
    AnalysisReport { metadata: metadata(options), rows, failures, summary }
}

pub fn summarize_rows(rows: &[RespondentRow]) -> BTreeMap<String, Summary> {
    type Column = fn(&RespondentRow) -> Option<f64>;
    let columns: [(&str, Column); 6] = [
        ("garp_violations", |r| r.garp_violations.map(|v| v as f64)),
        ("ccei", |r| r.ccei),
        ("bronars_power", |r| r.bronars_power),
        ("theta", |r| r.fit.as_ref().map(|f| f.theta)),
        ("b1", |r| r.fit.as_ref().and_then(|f| f.ideal.first().copied())),
        ("b2", |r| r.fit.as_ref().and_then(|f| f.ideal.get(1).copied())),
    ];
    columns
        .iter()
        .filter_map(|(name, get)| {
            let values: Vec<f64> = rows.iter().filter_map(get).filter(|v| v.is_finite()).collect();
            summarize(&values).map(|s| (name.to_string(), s))
        })
        .collect()
}

/// Expands glob patterns in order; plain paths pass through untouched so a
/// missing file is reported with the other per-file failures.
pub fn expand_inputs(inputs: &[String]) -> anyhow::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for input in inputs {
        if input.contains(['*', '?', '[']) {
            for entry in glob::glob(input).with_context(|| format!("bad pattern {input}"))? {
                out.push(entry?);
            }
        } else {
            out.push(PathBuf::from(input));
        }
    }
    Ok(out)
}
