//! Noise sweeps: simulate and verify one run per `(sigma, seed)` cell, then
//! pool the labeled scores per sigma.
//!
//! Cell `j` of every sigma shares the seed `derive_seed(base_seed, j)`, so the
//! trajectories, candidate pairs and unit noise draws are common across
//! sigmas and only the noise magnitude changes.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evaluation::{classification_report, ClassificationReport, ScoredLabel};
use crate::simulator::{derive_seed, simulate, CandidateSpec, NoiseSpec, RunSpec, ScenarioSpec};
use crate::verifier::{verify_batch, VerdictRecord, VerifierConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub sigmas: Vec<f64>,
    pub seeds: usize,
    pub base_seed: u64,
    /// Shape and size of every run; its `seed` is replaced per cell.
    pub scenario: ScenarioSpec,
    /// Candidate counts and distances; measurement noise follows the cell sigma.
    pub candidates: CandidateSpec,
    pub rotation_ratio: f64,
    /// Scores do not depend on it; it only decides the `accepted` flags.
    pub verifier: VerifierConfig,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sigmas.is_empty() || self.seeds == 0 {
            return Err(Error::InvalidConfig("sweep needs at least one sigma and one seed".into()));
        }
        for &s in &self.sigmas {
            self.noise(s).validate()?;
        }
        self.scenario.validate()?;
        self.candidates.validate()?;
        self.verifier.validate()
    }

    fn noise(&self, sigma: f64) -> NoiseSpec {
        NoiseSpec {
            sigma,
            rotation_ratio: self.rotation_ratio,
        }
    }

    pub fn run_spec(&self, sigma: f64, seed_index: usize) -> RunSpec {
        let noise = self.noise(sigma);
        RunSpec {
            scenario: ScenarioSpec {
                seed: derive_seed(self.base_seed, seed_index as u64),
                ..self.scenario.clone()
            },
            odometry_noise: noise,
            candidates: CandidateSpec {
                measurement_noise: noise,
                ..self.candidates.clone()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellResult {
    pub sigma_index: usize,
    pub seed_index: usize,
    pub seed: u64,
    pub verdicts: Vec<VerdictRecord>,
}

impl CellResult {
    pub fn labels(&self) -> Vec<ScoredLabel> {
        self.verdicts.iter().filter_map(ScoredLabel::from_verdict).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SigmaSummary {
    pub sigma: f64,
    /// Curve, AP and MR over all seeds pooled.
    pub pooled: ClassificationReport,
    /// AP of each seed's run on its own, in seed order.
    pub per_seed_ap: Vec<f64>,
    pub mean_ap: f64,
    /// Standard error of `mean_ap`; zero with a single seed.
    pub stderr_ap: f64,
    /// Threshold that keeps pooled precision at 1 with the most recall,
    /// halfway to the next score; `None` when no true loop can be accepted.
    pub calibrated_tau: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub cells: Vec<CellResult>,
    pub summaries: Vec<SigmaSummary>,
}

pub fn run_cell(config: &SweepConfig, sigma_index: usize, seed_index: usize) -> Result<CellResult> {
    let spec = config.run_spec(config.sigmas[sigma_index], seed_index);
    let run = simulate(&spec)?;
    let verdicts = verify_batch(&run.odometry, &run.candidates, &config.verifier)?;
    Ok(CellResult {
        sigma_index,
        seed_index,
        seed: spec.scenario.seed,
        verdicts,
    })
}

/// Runs every cell on the current rayon pool. Results are ordered by
/// `(sigma_index, seed_index)` regardless of scheduling.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepResult> {
    config.validate()?;
    let keys: Vec<(usize, usize)> = (0..config.sigmas.len())
        .flat_map(|i| (0..config.seeds).map(move |j| (i, j)))
        .collect();
    let cells: Vec<CellResult> = keys
        .par_iter()
        .map(|&(i, j)| run_cell(config, i, j))
        .collect::<Result<_>>()?;
    let summaries = config
        .sigmas
        .iter()
        .enumerate()
        .map(|(i, &sigma)| summarize(sigma, cells.iter().filter(|c| c.sigma_index == i)))
        .collect::<Result<_>>()?;
    Ok(SweepResult { cells, summaries })
}

fn summarize<'a>(sigma: f64, cells: impl Iterator<Item = &'a CellResult>) -> Result<SigmaSummary> {
    let mut pooled = Vec::new();
    let mut per_seed_ap = Vec::new();
    for cell in cells {
        let labels = cell.labels();
        per_seed_ap.push(classification_report(&labels)?.average_precision);
        pooled.extend(labels);
    }
    let report = classification_report(&pooled)?;
    let n = per_seed_ap.len() as f64;
    let mean_ap = per_seed_ap.iter().sum::<f64>() / n;
    let stderr_ap = if per_seed_ap.len() > 1 {
        let var = per_seed_ap.iter().map(|a| (a - mean_ap).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(SigmaSummary {
        sigma,
        calibrated_tau: calibrate(&report),
        pooled: report,
        per_seed_ap,
        mean_ap,
        stderr_ap,
    })
}

fn calibrate(report: &ClassificationReport) -> Option<f64> {
    let curve = &report.curve;
    let best = (0..curve.len())
        .filter(|&k| curve[k].precision == 1.0)
        .max_by(|&a, &b| curve[a].recall.total_cmp(&curve[b].recall))?;
    let accepted = -curve[best].threshold;
    Some(match curve.get(best + 1) {
        Some(next) => 0.5 * (accepted + -next.threshold),
        None => accepted,
    })
}
