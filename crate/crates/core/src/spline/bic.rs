// SPDX-License-Identifier: MIT OR Apache-2.0

use std::ops::Range;

use super::{NormalEquations, SplineSpec};
use crate::error::{Error, Result};
use crate::sample::{Curve, FunctionalSample};

/// Inclusive range of candidate interior-knot counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KnotRange {
    pub lo: usize,
    pub hi: usize,
}

impl KnotRange {
    pub fn new(lo: usize, hi: usize) -> Result<Self> {
        if lo > hi {
            return Err(Error::domain(format!("empty knot range {lo}..={hi}")));
        }
        Ok(KnotRange { lo, hi })
    }
}

/// Default search range driven by `n` and the harmonic mean `N` of the curve sizes:
/// `[min{0.5 (nN)^{1/9} (log n)^{2/9}, 0.5 n^{1/8} (log n)^{1/4}},
///   min{n^{1/4} N^{5/8}, 2 n^{3/10}}]`, rounded outward.
pub fn default_knot_range(n: usize, harmonic_mean_obs: f64) -> Result<KnotRange> {
    if n < 2 {
        return Err(Error::domain("BIC knot selection needs at least two curves"));
    }
    let nf = n as f64;
    let ln = nf.ln();
    let lower = f64::min(
        0.5 * (nf * harmonic_mean_obs).powf(1.0 / 9.0) * ln.powf(2.0 / 9.0),
        0.5 * nf.powf(0.125) * ln.powf(0.25),
    );
    let upper = f64::min(nf.powf(0.25) * harmonic_mean_obs.powf(0.625), 2.0 * nf.powf(0.3));
    KnotRange::new(lower.floor().max(0.0) as usize, upper.ceil().max(0.0) as usize)
}

// Relative floor on the residual mean square: fits exact to machine precision
// all score the same and the penalty decides.
const RSS_REL_FLOOR: f64 = 1e-26;

fn weighted_sq(curves: &[Curve]) -> f64 {
    curves.iter().map(|c| c.ys().iter().map(|y| y * y).sum::<f64>() / c.len() as f64).sum()
}

fn segment_rss(curves: &[Curve], spec: SplineSpec) -> Result<f64> {
    let mut ne = NormalEquations::new(spec);
    curves.iter().for_each(|c| ne.add_curve(c));
    let coef = ne.solve()?;
    Ok(curves
        .iter()
        .map(|c| {
            c.points()
                .map(|(x, y)| {
                    let r = y - spec.evaluate(&coef, x);
                    r * r
                })
                .sum::<f64>()
                / c.len() as f64
        })
        .sum())
}

fn bic_for_segments(sample: &FunctionalSample, spec: SplineSpec, segments: &[Range<usize>]) -> Result<f64> {
    let n = sample.n() as f64;
    let mut rss = 0.0;
    for seg in segments {
        rss += segment_rss(&sample.curves()[seg.clone()], spec)?;
    }
    let rss = rss / n;
    let floor = RSS_REL_FLOOR * (weighted_sq(sample.curves()) / n).max(f64::MIN_POSITIVE);
    let params = (segments.len() * spec.dim()) as f64;
    Ok(rss.max(floor).ln() + params * n.ln() / n)
}

/// `BIC(J) = log((1/n) sum_i N_i^{-1} sum_j {Y_ij - m_J(X_ij)}^2) + (J + p) log(n) / n`.
pub fn bic_value(sample: &FunctionalSample, spec: SplineSpec) -> Result<f64> {
    bic_for_segments(sample, spec, std::slice::from_ref(&(0..sample.n())))
}

/// BIC over `range`; candidates whose design is ill-conditioned map to `None`.
pub fn bic_profile(sample: &FunctionalSample, order: usize, range: KnotRange) -> Result<Vec<(usize, Option<f64>)>> {
    (range.lo..=range.hi)
        .map(|j| {
            let spec = SplineSpec::new(order, j)?;
            match bic_value(sample, spec) {
                Ok(v) => Ok((j, Some(v))),
                Err(Error::IllConditioned { .. }) => Ok((j, None)),
                Err(e) => Err(e),
            }
        })
        .collect()
}

fn argmin(profile: impl Iterator<Item = (usize, Option<f64>)>) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, v) in profile {
        if let Some(v) = v {
            // strict: ties keep the smaller knot count
            if best.map_or(true, |(_, b)| v < b) {
                best = Some((j, v));
            }
        }
    }
    best.map(|(j, _)| j).ok_or_else(|| Error::domain("no candidate knot count gives a well-conditioned fit"))
}

/// Knot count minimizing BIC; `range` defaults to [`default_knot_range`].
pub fn select_knots_bic(sample: &FunctionalSample, order: usize, range: Option<KnotRange>) -> Result<usize> {
    let range = match range {
        Some(r) => r,
        None => default_knot_range(sample.n(), sample.harmonic_mean_obs())?,
    };
    argmin(bic_profile(sample, order, range)?.into_iter())
}

/// BIC with one mean per curve segment; the penalty counts `segments * (J + p)` parameters.
pub fn select_knots_bic_segmented(
    sample: &FunctionalSample,
    order: usize,
    segments: &[Range<usize>],
    range: Option<KnotRange>,
) -> Result<usize> {
    let range = match range {
        Some(r) => r,
        None => default_knot_range(sample.n(), sample.harmonic_mean_obs())?,
    };
    let mut profile = Vec::new();
    for j in range.lo..=range.hi {
        let spec = SplineSpec::new(order, j)?;
        match bic_for_segments(sample, spec, segments) {
            Ok(v) => profile.push((j, Some(v))),
            Err(Error::IllConditioned { .. }) => profile.push((j, None)),
            Err(e) => return Err(e),
        }
    }
    argmin(profile.into_iter())
}
