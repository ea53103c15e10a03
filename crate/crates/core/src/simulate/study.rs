// SPDX-License-Identifier: MIT OR Apache-2.0

//! Monte Carlo rejection frequencies over a grid of scenarios and decisions.

use std::io::Write;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate_sample, DgpConfig, Generated, Scenario, Scheme, ScoreLaw};
use crate::changepoint::{binary_segmentation, default_min_segment};
use crate::error::{Error, Result};
use crate::hypothesis::{
    changepoint_evidence, multi_changepoint_evidence, one_sample_evidence, two_sample_evidence, Evidence, SplineChoice,
};
use crate::pivotal::{NormalizerKind, PivotalConfig, PivotalTable, DEFAULT_PATHS, DEFAULT_SEED, DEFAULT_STEPS};

/// Default master seed of studies.
pub const DEFAULT_MASTER_SEED: u64 = 20_250_101;

/// Seed of replication `rep`: word `rep` of the ChaCha8 stream keyed by `master`.
///
/// Every scenario of a study uses the same seed for the same replication, so
/// cells differing only in effect size or decision rule share their noise.
pub fn replication_seed(master: u64, rep: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_word_pos(2 * rep as u128);
    rng.next_u64()
}

/// Where change-point tests take their locations from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Locations {
    /// CUSUM estimate (binary segmentation for several changes).
    #[default]
    Estimated,
    /// The simulated locations.
    True,
}

/// Pivotal table settings of a study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PivotalSettings {
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_pivotal_seed")]
    pub seed: u64,
}

fn default_paths() -> usize {
    DEFAULT_PATHS
}
fn default_steps() -> usize {
    DEFAULT_STEPS
}
fn default_pivotal_seed() -> u64 {
    DEFAULT_SEED
}

impl Default for PivotalSettings {
    fn default() -> Self {
        PivotalSettings { paths: DEFAULT_PATHS, steps: DEFAULT_STEPS, seed: DEFAULT_SEED }
    }
}

/// A rejection study: every scenario in `dgp` crossed with every
/// `(epsilon, kind, delta, alpha)`. Scenario seeds are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    #[serde(default = "default_master")]
    pub master_seed: u64,
    pub replications: usize,
    pub deltas: Vec<f64>,
    pub alphas: Vec<f64>,
    #[serde(default = "default_kinds")]
    pub kinds: Vec<NormalizerKind>,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub spline: SplineChoice,
    #[serde(default)]
    pub locations: Locations,
    #[serde(default)]
    pub pivotal: PivotalSettings,
    pub dgp: Vec<DgpConfig>,
}

fn default_master() -> u64 {
    DEFAULT_MASTER_SEED
}
fn default_kinds() -> Vec<NormalizerKind> {
    vec![NormalizerKind::Integral]
}
fn default_epsilons() -> Vec<f64> {
    vec![crate::hypothesis::DEFAULT_EPSILON]
}

impl StudyConfig {
    pub fn new(dgp: Vec<DgpConfig>, deltas: Vec<f64>, alphas: Vec<f64>, replications: usize) -> Self {
        StudyConfig {
            master_seed: DEFAULT_MASTER_SEED,
            replications,
            deltas,
            alphas,
            kinds: default_kinds(),
            epsilons: default_epsilons(),
            spline: SplineChoice::default(),
            locations: Locations::Estimated,
            pivotal: PivotalSettings::default(),
            dgp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::domain("a study needs at least one replication"));
        }
        if self.dgp.is_empty() || self.deltas.is_empty() || self.alphas.is_empty() {
            return Err(Error::domain("a study needs scenarios, deltas and alphas"));
        }
        if self.kinds.is_empty() || self.epsilons.is_empty() {
            return Err(Error::domain("a study needs normalizer kinds and epsilons"));
        }
        if let Some(d) = self.deltas.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
            return Err(Error::domain(format!("delta = {d} must be positive")));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(Error::domain(format!("alpha = {a} outside (0, 1)")));
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(**e > 0.0 && **e < 0.5)) {
            return Err(Error::domain(format!("epsilon = {e} outside (0, 1/2)")));
        }
        self.dgp.iter().try_for_each(|d| d.validate())
    }

    /// Pivotal configurations the study needs.
    pub fn pivotal_configs(&self) -> Vec<PivotalConfig> {
        let mut out = Vec::new();
        for &epsilon in &self.epsilons {
            for &kind in &self.kinds {
                out.push(PivotalConfig {
                    epsilon,
                    kind,
                    n_paths: self.pivotal.paths,
                    n_steps: self.pivotal.steps,
                    seed: self.pivotal.seed,
                });
            }
        }
        out
    }
}

/// One grid cell of a study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub scheme: Scheme,
    pub law: ScoreLaw,
    pub scenario: String,
    pub a: f64,
    pub delta: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub kind: NormalizerKind,
    pub n: usize,
    pub replications: usize,
    pub rejections: usize,
    /// Replications that ended in an error; they count neither way.
    pub failures: usize,
    /// `rejections / (replications - failures)`, 0 when every replication failed.
    pub reject_freq: f64,
    /// Median of the largest `|k_hat / n - frac|` over changes, when locations are estimated.
    pub median_location_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub rows: Vec<StudyRow>,
}

impl StudyResult {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

fn evidence_for(config: &StudyConfig, dgp: &DgpConfig, data: &Generated, epsilon: f64) -> Result<Evidence> {
    let spline = config.spline;
    match (&dgp.scenario, data) {
        (Scenario::OneSampleMean { .. }, Generated::One(s)) => one_sample_evidence(s, None, epsilon, spline),
        (Scenario::TwoSampleMeans { .. }, Generated::Two(a, b)) => two_sample_evidence(a, b, epsilon, spline),
        (Scenario::MultiJump { jumps }, Generated::One(s)) => {
            let locations = match config.locations {
                Locations::True => dgp.scenario.change_points(s.n()),
                Locations::Estimated => {
                    let spec = spline.resolve(s)?;
                    let seg = binary_segmentation(s, spec, jumps.len(), default_min_segment(spec, epsilon))?;
                    seg.locations
                }
            };
            multi_changepoint_evidence(s, &locations, epsilon, spline)
        }
        (_, Generated::One(s)) => {
            let k = match config.locations {
                Locations::True => Some(dgp.scenario.change_points(s.n())[0]),
                Locations::Estimated => None,
            };
            changepoint_evidence(s, k, epsilon, spline)
        }
        _ => Err(Error::domain("scenario and generated data disagree")),
    }
}

fn location_error(dgp: &DgpConfig, ev: &Evidence) -> Option<f64> {
    if !dgp.scenario.is_change_point() {
        return None;
    }
    let n = dgp.n;
    let truth = dgp.scenario.change_points(n);
    if truth.len() != ev.change_points.len() {
        return Some(f64::INFINITY);
    }
    Some(truth.iter().zip(&ev.change_points).map(|(t, k)| (*t as f64 - *k as f64).abs() / n as f64).fold(0.0, f64::max))
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

fn find_table(tables: &[PivotalTable], epsilon: f64, kind: NormalizerKind) -> Result<&PivotalTable> {
    let want = PivotalConfig::new(epsilon, kind);
    tables
        .iter()
        .find(|t| t.config().kind == kind && t.config().epsilon_key() == want.epsilon_key())
        .ok_or_else(|| Error::domain(format!("no pivotal table for kind {kind} and epsilon {epsilon}")))
}

/// Runs `config`, deciding with the matching table from `tables`.
///
/// Replications run in parallel; each one computes its evidence once per
/// epsilon and reuses it for every kind, delta and alpha, so the result is
/// bit-identical for a given master seed whatever the thread count.
pub fn rejection_study(config: &StudyConfig, tables: &[PivotalTable]) -> Result<StudyResult> {
    config.validate()?;
    // quantiles[e][k][a]
    let mut quantiles = Vec::new();
    for &eps in &config.epsilons {
        let mut per_kind = Vec::new();
        for &kind in &config.kinds {
            let table = find_table(tables, eps, kind)?;
            let qs = config.alphas.iter().map(|a| table.quantile(1.0 - a)).collect::<Result<Vec<_>>>()?;
            per_kind.push(qs);
        }
        quantiles.push(per_kind);
    }

    let reps = config.replications;
    let jobs: Vec<(usize, usize)> = (0..config.dgp.len()).flat_map(|g| (0..reps).map(move |r| (g, r))).collect();
    let outcomes: Vec<Vec<Result<Evidence>>> = jobs
        .par_iter()
        .map(|&(g, r)| {
            let mut dgp = config.dgp[g].clone();
            dgp.seed = replication_seed(config.master_seed, r as u64);
            match generate_sample(&dgp) {
                Ok(data) => config.epsilons.iter().map(|&eps| evidence_for(config, &dgp, &data, eps)).collect(),
                Err(e) => {
                    let msg = e.to_string();
                    config.epsilons.iter().map(|_| Err(Error::Domain(msg.clone()))).collect()
                }
            }
        })
        .collect();

    let mut rows = Vec::new();
    for (g, dgp) in config.dgp.iter().enumerate() {
        let block = &outcomes[g * reps..(g + 1) * reps];
        for (e, &eps) in config.epsilons.iter().enumerate() {
            let evidence: Vec<&Evidence> = block.iter().filter_map(|o| o[e].as_ref().ok()).collect();
            let failures = reps - evidence.len();
            let loc = if config.locations == Locations::Estimated {
                median(evidence.iter().filter_map(|ev| location_error(dgp, ev)).collect())
            } else {
                None
            };
            for (k, &kind) in config.kinds.iter().enumerate() {
                for &delta in &config.deltas {
                    for (a, &alpha) in config.alphas.iter().enumerate() {
                        let q = quantiles[e][k][a];
                        let rejections =
                            evidence.iter().filter(|ev| ev.decide_with_quantile(delta, alpha, kind, q).reject).count();
                        let done = reps - failures;
                        rows.push(StudyRow {
                            scheme: dgp.scheme,
                            law: dgp.score_law,
                            scenario: dgp.scenario.label().to_string(),
                            a: dgp.scenario.effect(),
                            delta,
                            alpha,
                            epsilon: eps,
                            kind,
                            n: dgp.n,
                            replications: reps,
                            rejections,
                            failures,
                            reject_freq: if done == 0 { 0.0 } else { rejections as f64 / done as f64 },
                            median_location_error: loc,
                        });
                    }
                }
            }
        }
    }
    Ok(StudyResult { rows })
}
