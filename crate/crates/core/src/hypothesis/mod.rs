// SPDX-License-Identifier: MIT OR Apache-2.0

//! Self-normalized tests of relevant hypotheses.
//!
//! Each procedure first computes its [`Evidence`]: the statistic and the
//! three self-normalizers, which do not depend on `delta`, `alpha` or the
//! normalizer kind. [`Evidence::decide`] then applies the rejection rule
//! `statistic > delta + Q_{1-alpha} * normalizer`, so sweeps over `delta`
//! and `alpha` reuse one set of fits.

mod path;

pub use path::{discrepancy_path, short_group, DiscrepancyPath, Group, Piece, ShortGroup};

use serde::{Deserialize, Serialize};

use crate::changepoint::estimate_single;
use crate::error::{Error, Result};
use crate::pivotal::{NormalizerKind, PivotalTable};
use crate::sample::{floor_fraction, FunctionalSample};
use crate::spline::{select_knots_bic, select_knots_bic_segmented, SplineSpec};

/// Default trimming fraction.
pub const DEFAULT_EPSILON: f64 = 0.1;
/// Default spline order (cubic).
pub const DEFAULT_ORDER: usize = 4;

/// Normalizers at or below this fraction of `|statistic|` count as zero.
pub const DEGENERATE_REL_TOL: f64 = 1e-10;
/// Normalizers at or below this fraction of the fitted functions' squared
/// norm count as zero (rounding noise of exactly fitted data).
pub const DEGENERATE_SCALE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KnotChoice {
    /// Interior knot count chosen by BIC.
    Auto,
    Fixed(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplineChoice {
    pub order: usize,
    pub knots: KnotChoice,
}

impl Default for SplineChoice {
    fn default() -> Self {
        SplineChoice { order: DEFAULT_ORDER, knots: KnotChoice::Auto }
    }
}

impl SplineChoice {
    pub fn fixed(spec: SplineSpec) -> Self {
        SplineChoice { order: spec.order(), knots: KnotChoice::Fixed(spec.interior_knots()) }
    }

    /// Spline space for `sample`, running BIC when knots are automatic.
    pub fn resolve(&self, sample: &FunctionalSample) -> Result<SplineSpec> {
        match self.knots {
            KnotChoice::Fixed(j) => SplineSpec::new(self.order, j),
            KnotChoice::Auto => SplineSpec::new(self.order, select_knots_bic(sample, self.order, None)?),
        }
    }

    fn resolve_segmented(&self, sample: &FunctionalSample, bounds: &[usize]) -> Result<SplineSpec> {
        match self.knots {
            KnotChoice::Fixed(j) => SplineSpec::new(self.order, j),
            KnotChoice::Auto => {
                let segs: Vec<_> = bounds.windows(2).map(|w| w[0]..w[1]).collect();
                SplineSpec::new(self.order, select_knots_bic_segmented(sample, self.order, &segs, None)?)
            }
        }
    }
}

/// Test configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestSpec {
    /// Relevance threshold in squared `L^2` units.
    pub delta: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub kind: NormalizerKind,
    pub spline: SplineChoice,
}

impl TestSpec {
    pub fn new(delta: f64, alpha: f64) -> Self {
        TestSpec {
            delta,
            alpha,
            epsilon: DEFAULT_EPSILON,
            kind: NormalizerKind::Integral,
            spline: SplineChoice::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_decision_args(self.delta, self.alpha)?;
        check_epsilon(self.epsilon)
    }
}

fn check_decision_args(delta: f64, alpha: f64) -> Result<()> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::domain(format!("delta = {delta} must be positive")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha = {alpha} outside (0, 1)")));
    }
    Ok(())
}

fn check_epsilon(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::domain(format!("epsilon = {eps} outside (0, 1)")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFamily {
    OneSample,
    TwoSample,
    ChangePoint,
    MultiChangePoint,
}

/// Statistic and normalizers of one data set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub family: TestFamily,
    pub epsilon: f64,
    pub statistic: f64,
    /// Largest squared norm of the full-sample group fits.
    pub fit_scale: f64,
    /// Normalizers indexed like [`NormalizerKind::ALL`].
    pub normalizers: [f64; 3],
    /// Curves per sample (one entry, or two for the two-sample test).
    pub sample_sizes: Vec<usize>,
    /// Spline space of every fitted group.
    pub splines: Vec<SplineSpec>,
    /// Change-point locations (curves before each change).
    pub change_points: Vec<usize>,
    /// Number of constant pieces of the partial-sample discrepancy.
    pub pieces: usize,
}

/// Outcome of a test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub family: TestFamily,
    pub statistic: f64,
    pub normalizer: f64,
    pub quantile: f64,
    pub threshold: f64,
    pub reject: bool,
    pub degenerate_normalizer: bool,
    pub delta: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub kind: NormalizerKind,
    pub sample_sizes: Vec<usize>,
    pub splines: Vec<SplineSpec>,
    pub change_points: Vec<usize>,
    pub pieces: usize,
}

fn kind_index(kind: NormalizerKind) -> usize {
    NormalizerKind::ALL.iter().position(|k| *k == kind).expect("closed enum")
}

impl Evidence {
    fn from_path(
        family: TestFamily,
        epsilon: f64,
        path: &DiscrepancyPath,
        sample_sizes: Vec<usize>,
        splines: Vec<SplineSpec>,
        change_points: Vec<usize>,
    ) -> Self {
        Evidence {
            family,
            epsilon,
            statistic: path.statistic,
            fit_scale: path.scale,
            normalizers: NormalizerKind::ALL.map(|k| path.normalizer(k)),
            sample_sizes,
            splines,
            change_points,
            pieces: path.pieces.len(),
        }
    }

    pub fn normalizer(&self, kind: NormalizerKind) -> f64 {
        self.normalizers[kind_index(kind)]
    }

    /// Whether the normalizer of `kind` is numerically zero.
    pub fn is_degenerate(&self, kind: NormalizerKind) -> bool {
        let v = self.normalizer(kind);
        v == 0.0 || v <= DEGENERATE_REL_TOL * self.statistic.abs() || v <= DEGENERATE_SCALE_TOL * self.fit_scale
    }

    /// Applies the rejection rule with the `1 - alpha` quantile of `table`.
    pub fn decide(&self, delta: f64, alpha: f64, kind: NormalizerKind, table: &PivotalTable) -> Result<TestReport> {
        check_decision_args(delta, alpha)?;
        let cfg = table.config();
        if cfg.kind != kind {
            return Err(Error::domain(format!("pivotal table is for the {} normalizer, test uses {kind}", cfg.kind)));
        }
        if (cfg.epsilon * 1e6).round() != (self.epsilon * 1e6).round() {
            return Err(Error::domain(format!(
                "pivotal table is for epsilon = {}, test uses {}",
                cfg.epsilon, self.epsilon
            )));
        }
        let quantile = table.quantile(1.0 - alpha)?;
        Ok(self.decide_with_quantile(delta, alpha, kind, quantile))
    }

    /// Rejection rule with an explicit critical value.
    pub fn decide_with_quantile(&self, delta: f64, alpha: f64, kind: NormalizerKind, quantile: f64) -> TestReport {
        let normalizer = self.normalizer(kind);
        let degenerate = self.is_degenerate(kind);
        let threshold = if degenerate { delta } else { delta + quantile * normalizer };
        // With a zero normalizer the statistic of exactly fitted data carries
        // rounding at the last bits; equality with delta is not a rejection.
        let reject = if degenerate {
            self.statistic - delta > DEGENERATE_REL_TOL * self.statistic.abs().max(delta)
        } else {
            self.statistic > threshold
        };
        TestReport {
            family: self.family,
            statistic: self.statistic,
            normalizer,
            quantile,
            threshold,
            reject,
            degenerate_normalizer: degenerate,
            delta,
            alpha,
            epsilon: self.epsilon,
            kind,
            sample_sizes: self.sample_sizes.clone(),
            splines: self.splines.clone(),
            change_points: self.change_points.clone(),
            pieces: self.pieces,
        }
    }
}

fn prefix_error(s: ShortGroup) -> Error {
    Error::InsufficientPrefix { curves: s.curves, observations: s.observations, needed: s.needed }
}

fn segment_error(s: ShortGroup) -> Error {
    Error::InsufficientSegment {
        segment: s.group + 1,
        reason: format!(
            "{} curves with {} observations at the smallest fraction, need {} observations",
            s.curves, s.observations, s.needed
        ),
    }
}

/// One-sample evidence for `H0: ||m - m0||^2 <= delta`; `m0` defaults to zero.
pub fn one_sample_evidence(
    sample: &FunctionalSample,
    m0: Option<&dyn Fn(f64) -> f64>,
    epsilon: f64,
    spline: SplineChoice,
) -> Result<Evidence> {
    check_epsilon(epsilon)?;
    let owned;
    let sample = match m0 {
        Some(f) => {
            owned = sample.recentered(f);
            &owned
        }
        None => sample,
    };
    let spec = spline.resolve(sample)?;
    let groups = [Group { curves: sample.curves(), spec }];
    if let Some(s) = short_group(&groups, epsilon) {
        return Err(prefix_error(s));
    }
    let path = discrepancy_path(&groups, epsilon)?;
    Ok(Evidence::from_path(TestFamily::OneSample, epsilon, &path, vec![sample.n()], vec![spec], Vec::new()))
}

pub fn one_sample_test(
    sample: &FunctionalSample,
    m0: Option<&dyn Fn(f64) -> f64>,
    spec: &TestSpec,
    table: &PivotalTable,
) -> Result<TestReport> {
    spec.validate()?;
    one_sample_evidence(sample, m0, spec.epsilon, spec.spline)?.decide(spec.delta, spec.alpha, spec.kind, table)
}

/// Two-sample evidence for `H0: ||m1 - m2||^2 <= delta`. Knots are resolved per sample.
pub fn two_sample_evidence(
    first: &FunctionalSample,
    second: &FunctionalSample,
    epsilon: f64,
    spline: SplineChoice,
) -> Result<Evidence> {
    check_epsilon(epsilon)?;
    let specs = [spline.resolve(first)?, spline.resolve(second)?];
    let groups = [Group { curves: first.curves(), spec: specs[0] }, Group { curves: second.curves(), spec: specs[1] }];
    if let Some(s) = short_group(&groups, epsilon) {
        return Err(prefix_error(s));
    }
    let path = discrepancy_path(&groups, epsilon)?;
    Ok(Evidence::from_path(
        TestFamily::TwoSample,
        epsilon,
        &path,
        vec![first.n(), second.n()],
        specs.to_vec(),
        Vec::new(),
    ))
}

pub fn two_sample_test(
    first: &FunctionalSample,
    second: &FunctionalSample,
    spec: &TestSpec,
    table: &PivotalTable,
) -> Result<TestReport> {
    spec.validate()?;
    two_sample_evidence(first, second, spec.epsilon, spec.spline)?.decide(spec.delta, spec.alpha, spec.kind, table)
}

/// Admissible change-point locations `ceil(eps n) ..= floor((1 - eps) n)`.
pub fn trimmed_range(n: usize, epsilon: f64) -> std::ops::RangeInclusive<usize> {
    let lo = ((n as f64 * epsilon) - 1e-9).ceil().max(0.0) as usize;
    lo..=floor_fraction(n, 1.0 - epsilon)
}

fn segment_evidence(
    family: TestFamily,
    sample: &FunctionalSample,
    bounds: &[usize],
    epsilon: f64,
    spec: SplineSpec,
) -> Result<Evidence> {
    let curves = sample.curves();
    let groups: Vec<Group<'_>> = bounds.windows(2).map(|w| Group { curves: &curves[w[0]..w[1]], spec }).collect();
    if let Some(s) = short_group(&groups, epsilon) {
        return Err(segment_error(s));
    }
    let path = discrepancy_path(&groups, epsilon)?;
    Ok(Evidence::from_path(
        family,
        epsilon,
        &path,
        vec![sample.n()],
        vec![spec; groups.len()],
        bounds[1..bounds.len() - 1].to_vec(),
    ))
}

/// Single change-point evidence for `H0: ||mu_1 - mu_2||^2 <= delta`.
///
/// `k_hat` is the number of curves before the change; when absent it is
/// estimated by [`estimate_single`]. With automatic knots the estimate uses a
/// full-sample BIC choice and the test a BIC choice over the two segments.
pub fn changepoint_evidence(
    sample: &FunctionalSample,
    k_hat: Option<usize>,
    epsilon: f64,
    spline: SplineChoice,
) -> Result<Evidence> {
    check_epsilon(epsilon)?;
    let n = sample.n();
    let k = match k_hat {
        Some(k) => k,
        None => estimate_single(sample, spline.resolve(sample)?, epsilon)?.k_hat,
    };
    let range = trimmed_range(n, epsilon);
    if !range.contains(&k) || k == 0 || k >= n {
        return Err(Error::domain(format!(
            "change point {k} outside the trimmed range {}..={} for n = {n}",
            range.start(),
            range.end()
        )));
    }
    let bounds = [0, k, n];
    let spec = spline.resolve_segmented(sample, &bounds)?;
    segment_evidence(TestFamily::ChangePoint, sample, &bounds, epsilon, spec)
}

pub fn changepoint_test(
    sample: &FunctionalSample,
    k_hat: Option<usize>,
    spec: &TestSpec,
    table: &PivotalTable,
) -> Result<TestReport> {
    spec.validate()?;
    changepoint_evidence(sample, k_hat, spec.epsilon, spec.spline)?.decide(spec.delta, spec.alpha, spec.kind, table)
}

/// Change-point locations `floor(n theta_k)` for strictly increasing `thetas` in `(0, 1)`.
pub fn locations_from_fractions(n: usize, thetas: &[f64]) -> Result<Vec<usize>> {
    if thetas.is_empty() {
        return Err(Error::domain("at least one change-point fraction is required"));
    }
    if let Some(t) = thetas.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
        return Err(Error::domain(format!("change-point fraction {t} outside (0, 1)")));
    }
    if thetas.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::domain("change-point fractions must be strictly increasing"));
    }
    Ok(thetas.iter().map(|t| floor_fraction(n, *t)).collect())
}

/// Multiple change-point evidence for `H0: sum_k ||mu_{k+1} - mu_k||^2 <= delta`
/// with changes after the curves in `locations` (strictly increasing, in `1..n`).
pub fn multi_changepoint_evidence(
    sample: &FunctionalSample,
    locations: &[usize],
    epsilon: f64,
    spline: SplineChoice,
) -> Result<Evidence> {
    check_epsilon(epsilon)?;
    let n = sample.n();
    if locations.is_empty() {
        return Err(Error::domain("at least one change point is required"));
    }
    if locations.windows(2).any(|w| w[0] >= w[1]) || locations[0] == 0 || locations[locations.len() - 1] >= n {
        return Err(Error::domain(format!("change points {locations:?} must be strictly increasing within 1..{n}")));
    }
    let mut bounds = Vec::with_capacity(locations.len() + 2);
    bounds.push(0);
    bounds.extend_from_slice(locations);
    bounds.push(n);
    for (s, w) in bounds.windows(2).enumerate() {
        if w[0] >= w[1] {
            return Err(Error::InsufficientSegment {
                segment: s + 1,
                reason: format!("empty segment between curves {} and {}", w[0], w[1]),
            });
        }
    }
    let spec = spline.resolve_segmented(sample, &bounds)?;
    segment_evidence(TestFamily::MultiChangePoint, sample, &bounds, epsilon, spec)
}

pub fn multi_changepoint_test(
    sample: &FunctionalSample,
    thetas: &[f64],
    spec: &TestSpec,
    table: &PivotalTable,
) -> Result<TestReport> {
    spec.validate()?;
    let locations = locations_from_fractions(sample.n(), thetas)?;
    multi_changepoint_evidence(sample, &locations, spec.epsilon, spec.spline)?
        .decide(spec.delta, spec.alpha, spec.kind, table)
}

#[cfg(test)]
mod tests;
