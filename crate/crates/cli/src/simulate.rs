//! Synthetic cohorts of quadratic respondents.
//!
//! A cohort spec lists explicit agents, a random draw, or both:
//!
//! ```json
//! {"noise_sd": 0.5,
//!  "agents": [{"theta": 1.5, "ideal": [6, 3]}],
//!  "random": {"count": 20, "theta": [0.2, 5], "ideal": [[1.5, 8.5], [1.5, 8.5]]}}
//! ```
//!
//! Every draw comes from one ChaCha stream seeded by the run seed: first the
//! random agents' parameters, then a shuffle seed and a noise seed per agent
//! in output order. Output is byte-identical for a repeated seed.

use std::path::Path;

use anyhow::{bail, ensure, Context};
use psm_core::dataset::save_dataset;
use psm_core::quadratic::{simulate_agent, QuadraticParams};
use psm_core::session::{generate_rounds, SessionConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub theta: f64,
    pub ideal: [f64; 2],
    /// Overrides the cohort noise level.
    #[serde(default)]
    pub noise_sd: Option<f64>,
}

fn default_theta_range() -> [f64; 2] {
    [0.2, 5.0]
}

fn default_ideal_range() -> [[f64; 2]; 2] {
    [[1.5, 8.5], [1.5, 8.5]]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomCohort {
    pub count: usize,
    /// Log-uniform.
    #[serde(default = "default_theta_range")]
    pub theta: [f64; 2],
    /// Uniform per question.
    #[serde(default = "default_ideal_range")]
    pub ideal: [[f64; 2]; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortSpec {
    /// Session design; each agent gets its own shuffle seed.
    #[serde(default)]
    pub session: SessionConfig,
    #[serde(default)]
    pub noise_sd: f64,
    #[serde(default)]
    pub agents: Vec<AgentSpec>,
    #[serde(default)]
    pub random: Option<RandomCohort>,
}

impl CohortSpec {
    pub fn validate(&self) -> anyhow::Result<()> {
        self.session.validate()?;
        ensure!(self.session.space.questions() == 2, "simulation needs exactly two questions");
        ensure!(self.noise_sd >= 0.0 && self.noise_sd.is_finite(), "noise_sd must be non-negative");
        let count = self.agents.len() + self.random.as_ref().map_or(0, |r| r.count);
        ensure!(count > 0, "cohort has no agents");
        if let Some(r) = &self.random {
            let [lo, hi] = r.theta;
            ensure!(lo > 0.0 && lo <= hi && hi.is_finite(), "theta range must satisfy 0 < lo <= hi");
            for [lo, hi] in r.ideal {
                ensure!(lo <= hi && lo.is_finite() && hi.is_finite(), "ideal ranges must satisfy lo <= hi");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub file: String,
    pub theta: f64,
    pub ideal: Vec<f64>,
    pub weights: Vec<f64>,
    pub noise_sd: f64,
    pub shuffle_seed: u64,
    pub noise_seed: u64,
    pub rounds: usize,
    pub rounds_excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub spec: CohortSpec,
    pub agents: Vec<ManifestEntry>,
}

struct Draw {
    id: String,
    params: QuadraticParams,
    noise_sd: f64,
    shuffle_seed: u64,
    noise_seed: u64,
}

/// Simulated datasets in cohort order, with their manifest.
pub fn simulate_cohort(
    spec: &CohortSpec,
    seed: u64,
) -> anyhow::Result<(Manifest, Vec<psm_core::dataset::Dataset>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agents: Vec<(QuadraticParams, f64)> = Vec::new();
    for (i, a) in spec.agents.iter().enumerate() {
        let params = QuadraticParams::from_theta(a.theta, a.ideal).with_context(|| format!("agent {i}"))?;
        agents.push((params, a.noise_sd.unwrap_or(spec.noise_sd)));
    }
    if let Some(r) = &spec.random {
        for _ in 0..r.count {
            let theta = rng.random_range(r.theta[0].ln()..=r.theta[1].ln()).exp();
            let ideal = [
                rng.random_range(r.ideal[0][0]..=r.ideal[0][1]),
                rng.random_range(r.ideal[1][0]..=r.ideal[1][1]),
            ];
            agents.push((QuadraticParams::from_theta(theta, ideal)?, spec.noise_sd));
        }
    }
    let width = agents.len().to_string().len().max(3);
    let draws: Vec<Draw> = agents
        .into_iter()
        .enumerate()
        .map(|(i, (params, noise_sd))| Draw {
            id: format!("respondent_{:0width$}", i + 1),
            params,
            noise_sd,
            shuffle_seed: rng.random(),
            noise_seed: rng.random(),
        })
        .collect();

    let results: Vec<_> = draws
        .par_iter()
        .map(|draw| {
            let config = SessionConfig { shuffle_seed: draw.shuffle_seed, ..spec.session.clone() };
            let q0 = draw.params.round0(&config.space);
            let rounds = generate_rounds(&config, &q0)?;
            let d = simulate_agent(&draw.params, &rounds, &config.space, draw.noise_sd, draw.noise_seed)?;
            Ok::<_, psm_core::Error>(d)
        })
        .collect();

    let mut datasets = Vec::with_capacity(draws.len());
    let mut entries = Vec::with_capacity(draws.len());
    for (draw, result) in draws.into_iter().zip(results) {
        let d = match result {
            Ok(d) => d,
            Err(e) => bail!("{}: {e}", draw.id),
        };
        entries.push(ManifestEntry {
            file: format!("{}.json", draw.id),
            id: draw.id,
            theta: draw.params.theta(),
            ideal: draw.params.ideal.clone(),
            weights: draw.params.weights.clone(),
            noise_sd: draw.noise_sd,
            shuffle_seed: draw.shuffle_seed,
            noise_seed: draw.noise_seed,
            rounds: d.len(),
            rounds_excluded: d.excluded().len(),
        });
        datasets.push(d);
    }
    Ok((Manifest { seed, spec: spec.clone(), agents: entries }, datasets))
}

/// Writes one dataset file per agent plus `manifest.json` into `out_dir`.
pub fn write_cohort(spec: &CohortSpec, seed: u64, out_dir: &Path) -> anyhow::Result<Manifest> {
    let (manifest, datasets) = simulate_cohort(spec, seed)?;
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    for (entry, d) in manifest.agents.iter().zip(&datasets) {
        let path = out_dir.join(&entry.file);
        std::fs::write(&path, save_dataset(d)?).with_context(|| format!("writing {}", path.display()))?;
    }
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    std::fs::write(out_dir.join("manifest.json"), bytes)?;
    Ok(manifest)
}
