// SPDX-License-Identifier: MIT OR Apache-2.0

//! Karhunen–Loève data-generating process for functional time series and
//! Monte Carlo rejection studies built on it.
//!
//! Curve `t` is `Y_tj = m_t(X_tj) + sum_k sqrt(lambda_k) xi_tk psi_k(X_tj) + sigma eps_tj`
//! with four components, `lambda_k = 2^{1-k}`, `psi_{2k-1} = sqrt(2) sin(2 k pi x)`,
//! `psi_{2k} = sqrt(2) cos(2 k pi x)` and MA(1) scores
//! `xi_tk = 0.8 zeta_tk + 0.6 zeta_{t-1,k}`.

mod study;

pub use study::{rejection_study, replication_seed, StudyConfig, StudyResult, StudyRow};

use std::f64::consts::{PI, SQRT_2};
use std::ops::RangeInclusive;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sample::{floor_fraction, Curve, FunctionalSample};

/// Number of nonzero Karhunen–Loève components.
pub const COMPONENTS: usize = 4;
pub const MA_COEFFICIENTS: (f64, f64) = (0.8, 0.6);
/// Default change location as a fraction of the sample.
pub const DEFAULT_JUMP_FRACTION: f64 = 0.4;
/// Second sample size over the first in two-sample scenarios.
pub const SECOND_SAMPLE_RATIO: f64 = 1.2;

/// Law of the number of observations per curve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    /// Uniform on `{3, ..., 6}`.
    S1,
    /// Uniform on `{floor(2 n^{1/5}), ..., floor(4 n^{1/5})}`.
    S2,
    /// Uniform on `{floor(n^{1/2}), ..., floor(2 n^{1/2})}`.
    S3,
    /// Uniform on `{floor(n / 8), ..., floor(n / 4)}`.
    S4,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::S1, Scheme::S2, Scheme::S3, Scheme::S4];

    /// Support of `N_i` for `n` curves.
    pub fn support(&self, n: usize) -> Result<RangeInclusive<usize>> {
        let nf = n as f64;
        let fl = |v: f64| (v + 1e-9).floor().max(0.0) as usize;
        let (lo, hi) = match self {
            Scheme::S1 => (3, 6),
            Scheme::S2 => (fl(2.0 * nf.powf(0.2)), fl(4.0 * nf.powf(0.2))),
            Scheme::S3 => (fl(nf.sqrt()), fl(2.0 * nf.sqrt())),
            Scheme::S4 => (n / 8, n / 4),
        };
        if lo == 0 || lo > hi {
            return Err(Error::domain(format!("scheme {self} has an empty support {lo}..={hi} for n = {n}")));
        }
        Ok(lo..=hi)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::S1 => "S1",
            Scheme::S2 => "S2",
            Scheme::S3 => "S3",
            Scheme::S4 => "S4",
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "S1" | "1" => Ok(Scheme::S1),
            "S2" | "2" => Ok(Scheme::S2),
            "S3" | "3" => Ok(Scheme::S3),
            "S4" | "4" => Ok(Scheme::S4),
            _ => Err(Error::domain(format!("unknown sampling scheme {s:?}"))),
        }
    }
}

/// Innovation law of the scores, standardized to mean 0 and variance 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreLaw {
    Normal,
    /// Uniform on `(-sqrt 3, sqrt 3)`.
    Uniform,
    /// Density `2^{-1/2} exp(-sqrt(2) |x|)`.
    Laplace,
}

impl ScoreLaw {
    pub const ALL: [ScoreLaw; 3] = [ScoreLaw::Normal, ScoreLaw::Uniform, ScoreLaw::Laplace];

    pub fn as_str(&self) -> &'static str {
        match self {
            ScoreLaw::Normal => "normal",
            ScoreLaw::Uniform => "uniform",
            ScoreLaw::Laplace => "laplace",
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            ScoreLaw::Normal => rng.sample(StandardNormal),
            ScoreLaw::Uniform => 3f64.sqrt() * (2.0 * rng.random::<f64>() - 1.0),
            ScoreLaw::Laplace => {
                // inverse cdf with scale 1 / sqrt 2
                let u = rng.random::<f64>() - 0.5;
                let mag = -(1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln() / SQRT_2;
                if u < 0.0 {
                    -mag
                } else {
                    mag
                }
            }
        }
    }
}

impl std::fmt::Display for ScoreLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoreLaw {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "normal" => Ok(ScoreLaw::Normal),
            "uniform" => Ok(ScoreLaw::Uniform),
            "laplace" => Ok(ScoreLaw::Laplace),
            _ => Err(Error::domain(format!("unknown score law {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpShape {
    /// `sqrt(a)`.
    Constant,
    /// `4 sqrt(5 a) (x - 1/2)^2`.
    Quadratic,
}

impl JumpShape {
    /// Jump function with squared `L^2` norm `a`.
    pub fn eval(&self, a: f64, x: f64) -> f64 {
        match self {
            JumpShape::Constant => a.sqrt(),
            JumpShape::Quadratic => 4.0 * (5.0 * a).sqrt() * (x - 0.5) * (x - 0.5),
        }
    }
}

/// One mean shift after the first `floor(frac n)` curves.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub a: f64,
    pub frac: f64,
    pub shape: JumpShape,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Scenario {
    /// `m(x) = sqrt(a) c x sin(pi x)` with `||m||^2 = a`.
    OneSampleMean { a: f64 },
    /// `m1 = m2 + sqrt(3 a) x` with `m2(x) = c x sin(pi x)`; second sample of size `1.2 n`.
    TwoSampleMeans { a: f64 },
    JumpConstant {
        a: f64,
        #[serde(default = "default_frac")]
        frac: f64,
    },
    JumpQuadratic {
        a: f64,
        #[serde(default = "default_frac")]
        frac: f64,
    },
    /// Several jumps, each added to every later curve.
    MultiJump { jumps: Vec<Jump> },
}

fn default_frac() -> f64 {
    DEFAULT_JUMP_FRACTION
}

impl Scenario {
    pub fn label(&self) -> &'static str {
        match self {
            Scenario::OneSampleMean { .. } => "one_sample_mean",
            Scenario::TwoSampleMeans { .. } => "two_sample_means",
            Scenario::JumpConstant { .. } => "jump_constant",
            Scenario::JumpQuadratic { .. } => "jump_quadratic",
            Scenario::MultiJump { .. } => "multi_jump",
        }
    }

    /// Squared `L^2` size of the tested effect (total over jumps).
    pub fn effect(&self) -> f64 {
        match self {
            Scenario::OneSampleMean { a }
            | Scenario::TwoSampleMeans { a }
            | Scenario::JumpConstant { a, .. }
            | Scenario::JumpQuadratic { a, .. } => *a,
            Scenario::MultiJump { jumps } => jumps.iter().map(|j| j.a).sum(),
        }
    }

    fn jumps(&self) -> Vec<Jump> {
        match self {
            Scenario::JumpConstant { a, frac } => vec![Jump { a: *a, frac: *frac, shape: JumpShape::Constant }],
            Scenario::JumpQuadratic { a, frac } => vec![Jump { a: *a, frac: *frac, shape: JumpShape::Quadratic }],
            Scenario::MultiJump { jumps } => jumps.clone(),
            _ => Vec::new(),
        }
    }

    /// Change locations (curves before each change) for `n` curves.
    pub fn change_points(&self, n: usize) -> Vec<usize> {
        self.jumps().iter().map(|j| floor_fraction(n, j.frac)).collect()
    }

    pub fn is_change_point(&self) -> bool {
        matches!(self, Scenario::JumpConstant { .. } | Scenario::JumpQuadratic { .. } | Scenario::MultiJump { .. })
    }

    fn validate(&self) -> Result<()> {
        let jumps = self.jumps();
        if self.effect() < 0.0 || jumps.iter().any(|j| !(j.a >= 0.0)) || !self.effect().is_finite() {
            return Err(Error::domain("effect size a must be nonnegative"));
        }
        if let Scenario::MultiJump { jumps } = self {
            if jumps.is_empty() {
                return Err(Error::domain("multi_jump needs at least one jump"));
            }
        }
        if let Some(j) = jumps.iter().find(|j| !(j.frac > 0.0 && j.frac < 1.0)) {
            return Err(Error::domain(format!("jump fraction {} outside (0, 1)", j.frac)));
        }
        if jumps.windows(2).any(|w| !(w[0].frac < w[1].frac)) {
            return Err(Error::domain("jump fractions must be strictly increasing"));
        }
        Ok(())
    }
}

/// One simulation scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub n: usize,
    pub scheme: Scheme,
    pub score_law: ScoreLaw,
    pub scenario: Scenario,
    /// Constant noise standard deviation.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default)]
    pub seed: u64,
    /// Switches off scores and noise, leaving the mean functions.
    #[serde(default)]
    pub diagnostics: bool,
}

fn default_sigma() -> f64 {
    1.0
}

impl DgpConfig {
    pub fn new(n: usize, scheme: Scheme, score_law: ScoreLaw, scenario: Scenario, seed: u64) -> Self {
        DgpConfig { n, scheme, score_law, scenario, sigma: 1.0, seed, diagnostics: false }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::domain(format!("n = {} curves is too few", self.n)));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::domain(format!("sigma = {} must be nonnegative", self.sigma)));
        }
        self.scenario.validate()?;
        self.scheme.support(self.n)?;
        if let Scenario::TwoSampleMeans { .. } = self.scenario {
            self.scheme.support(self.second_n())?;
        }
        Ok(())
    }

    /// Size of the second sample in two-sample scenarios.
    pub fn second_n(&self) -> usize {
        (self.n as f64 * SECOND_SAMPLE_RATIO).round() as usize
    }
}

/// Simulated data: one sample, or two independent ones.
#[derive(Clone, Debug, PartialEq)]
pub enum Generated {
    One(FunctionalSample),
    Two(FunctionalSample, FunctionalSample),
}

impl Generated {
    pub fn samples(&self) -> Vec<&FunctionalSample> {
        match self {
            Generated::One(s) => vec![s],
            Generated::Two(a, b) => vec![a, b],
        }
    }
}

/// `2 sqrt(3) pi / sqrt(2 pi^2 - 3)`, making `c x sin(pi x)` unit norm.
pub fn mean_constant() -> f64 {
    2.0 * 3f64.sqrt() * PI / (2.0 * PI * PI - 3.0).sqrt()
}

/// Unit-norm shape `c x sin(pi x)`.
pub fn base_mean(x: f64) -> f64 {
    mean_constant() * x * (PI * x).sin()
}

/// `sqrt(lambda_k) psi_k(x)` for the four components.
fn components(x: f64) -> [f64; COMPONENTS] {
    let mut out = [0.0; COMPONENTS];
    for (i, o) in out.iter_mut().enumerate() {
        let freq = 2.0 * ((i / 2 + 1) as f64) * PI * x;
        let psi = if i % 2 == 0 { freq.sin() } else { freq.cos() };
        *o = 2f64.powi(-(i as i32)).sqrt() * SQRT_2 * psi;
    }
    out
}

/// MA(1) scores for `n` consecutive curves; one pre-sample innovation makes
/// the first row stationary.
pub fn ma1_scores<R: Rng + ?Sized>(law: ScoreLaw, n: usize, rng: &mut R) -> Vec<[f64; COMPONENTS]> {
    let (c0, c1) = MA_COEFFICIENTS;
    let mut prev = [0.0; COMPONENTS];
    prev.iter_mut().for_each(|z| *z = law.draw(rng));
    (0..n)
        .map(|_| {
            let mut xi = [0.0; COMPONENTS];
            for (k, x) in xi.iter_mut().enumerate() {
                let z = law.draw(rng);
                *x = c0 * z + c1 * prev[k];
                prev[k] = z;
            }
            xi
        })
        .collect()
}

fn draw_sample<R: Rng + ?Sized>(
    config: &DgpConfig,
    n: usize,
    mean: &dyn Fn(usize, f64) -> f64,
    rng: &mut R,
) -> Result<FunctionalSample> {
    let support = config.scheme.support(n)?;
    let scores = ma1_scores(config.score_law, n, rng);
    let mut curves = Vec::with_capacity(n);
    for (i, xi) in scores.iter().enumerate() {
        let m = rng.random_range(support.clone());
        let mut xs = Vec::with_capacity(m);
        let mut ys = Vec::with_capacity(m);
        for _ in 0..m {
            let x: f64 = rng.random();
            let noise: f64 = rng.sample(StandardNormal);
            let mut y = mean(i, x);
            if !config.diagnostics {
                let phi = components(x);
                y += phi.iter().zip(xi).map(|(p, s)| p * s).sum::<f64>() + config.sigma * noise;
            }
            xs.push(x);
            ys.push(y);
        }
        curves.push(Curve::new(xs, ys)?);
    }
    FunctionalSample::new(curves)
}

/// Draws the data of `config`; deterministic in `config.seed`.
pub fn generate_sample(config: &DgpConfig) -> Result<Generated> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.n;
    match &config.scenario {
        Scenario::OneSampleMean { a } => {
            let s = a.sqrt();
            let f = move |_: usize, x: f64| s * base_mean(x);
            Ok(Generated::One(draw_sample(config, n, &f, &mut rng)?))
        }
        Scenario::TwoSampleMeans { a } => {
            let s = (3.0 * a).sqrt();
            let f1 = move |_: usize, x: f64| base_mean(x) + s * x;
            let f2 = |_: usize, x: f64| base_mean(x);
            let first = draw_sample(config, n, &f1, &mut rng)?;
            let second = draw_sample(config, config.second_n(), &f2, &mut rng)?;
            Ok(Generated::Two(first, second))
        }
        scenario => {
            let jumps = scenario.jumps();
            let at = scenario.change_points(n);
            let f = move |i: usize, x: f64| {
                base_mean(x)
                    + jumps.iter().zip(&at).filter(|(_, k)| i >= **k).map(|(j, _)| j.shape.eval(j.a, x)).sum::<f64>()
            };
            Ok(Generated::One(draw_sample(config, n, &f, &mut rng)?))
        }
    }
}
