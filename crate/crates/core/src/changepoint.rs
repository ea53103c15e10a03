// SPDX-License-Identifier: MIT OR Apache-2.0

//! `L^2` CUSUM change-point localization and binary segmentation.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypothesis::trimmed_range;
use crate::sample::{Curve, FunctionalSample};
use crate::spline::{inner_product_matrix, BandedSpd, NormalEquations, SplineSpec};

/// Objectives at or below this value count as "no change".
pub const OBJECTIVE_FLOOR: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangePointEstimate {
    /// Number of curves before the change.
    pub k_hat: usize,
    pub objective: f64,
    /// First scanned location; `profile[i]` belongs to `first_k + i`.
    pub first_k: usize,
    pub profile: Vec<f64>,
}

/// CUSUM pieces of a curve window: prefix cross-products and the Gram factor.
struct Cusum {
    /// `r_k = sum_{i <= k} N_i^{-1} sum_j B(X_ij) Y_ij` for `k = 0..=len`.
    prefix: Vec<Vec<f64>>,
    gram: BandedSpd,
    inner: BandedSpd,
}

impl Cusum {
    fn new(curves: &[Curve], spec: SplineSpec) -> Cusum {
        let mut ne = NormalEquations::new(spec);
        let mut prefix = Vec::with_capacity(curves.len() + 1);
        prefix.push(vec![0.0; spec.dim()]);
        for c in curves {
            ne.add_curve(c);
            prefix.push(ne.rhs().to_vec());
        }
        Cusum { prefix, gram: ne.banded_gram().clone(), inner: inner_product_matrix(spec) }
    }

    fn len(&self) -> usize {
        self.prefix.len() - 1
    }

    /// `|| B' Qhat^{-1} (r_k - (k/n) r_n) ||^2` for every `k` in `ks`, with
    /// `Qhat` the window Gram normalized by its curve count, and the rounding
    /// noise level `1e-24 n^2 ||m_hat||^2` of these values.
    fn profile(&self, ks: impl Iterator<Item = usize>) -> Result<(Vec<f64>, f64)> {
        let n = self.len();
        let chol = self.gram.cholesky()?;
        let full = chol.solve(&self.prefix[n]);
        let noise = 1e-24 * (n * n) as f64 * self.inner.quadratic_form(&full);
        let total = &self.prefix[n];
        let nf = n as f64;
        let mut out = Vec::new();
        let mut v = vec![0.0; total.len()];
        for k in ks {
            let frac = k as f64 / nf;
            for ((vi, rk), rn) in v.iter_mut().zip(&self.prefix[k]).zip(total) {
                *vi = rk - frac * rn;
            }
            chol.solve_in_place(&mut v);
            v.iter_mut().for_each(|x| *x *= nf);
            out.push(self.inner.quadratic_form(&v));
        }
        Ok((out, noise))
    }
}

/// First index attaining the maximum, where values within `1e-12` of the
/// maximum (relative) or within `noise` of it count as ties.
fn argmax_first(values: &[f64], noise: f64) -> usize {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-12 * max.abs() + noise;
    values.iter().position(|v| *v >= max - tol).unwrap_or(0)
}

/// Maximizer of the `L^2` CUSUM over `ceil(eps n) ..= floor((1 - eps) n)`;
/// ties go to the smallest location.
pub fn estimate_single(sample: &FunctionalSample, spline: SplineSpec, epsilon: f64) -> Result<ChangePointEstimate> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::domain(format!("epsilon = {epsilon} outside (0, 1/2)")));
    }
    let n = sample.n();
    if (n as f64) * epsilon < 2.0 - 1e-9 {
        return Err(Error::domain(format!("n = {n} too small for epsilon = {epsilon} (need n >= 2 / epsilon)")));
    }
    let range = trimmed_range(n, epsilon);
    let (lo, hi) = (*range.start(), *range.end());
    if lo > hi {
        return Err(Error::domain("empty trimmed range"));
    }
    let cusum = Cusum::new(sample.curves(), spline);
    let (profile, noise) = cusum.profile(lo..=hi)?;
    let i = argmax_first(&profile, noise);
    Ok(ChangePointEstimate { k_hat: lo + i, objective: profile[i], first_k: lo, profile })
}

/// The untrimmed CUSUM objective at location `k` in `0..=n`.
pub fn cusum_objective(sample: &FunctionalSample, spline: SplineSpec, k: usize) -> Result<f64> {
    if k > sample.n() {
        return Err(Error::domain(format!("location {k} beyond n = {}", sample.n())));
    }
    Ok(Cusum::new(sample.curves(), spline).profile(std::iter::once(k))?.0[0])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    /// Sorted change-point locations (curves before each change).
    pub locations: Vec<usize>,
    /// Objective of each split, in the order the splits were made.
    pub objectives: Vec<f64>,
    /// Fewer than the requested number of changes were found.
    pub shortfall: bool,
}

/// Default minimum segment length `ceil(2 (J + p) / eps)`.
pub fn default_min_segment(spline: SplineSpec, epsilon: f64) -> usize {
    ((2 * spline.dim()) as f64 / epsilon - 1e-9).ceil() as usize
}

/// Location and scaled objective of a split.
type Split = (usize, f64);

/// Best split of a window: scaled CUSUM `n / (k (n - k))` times the objective,
/// over locations leaving `min_segment` curves on both sides.
fn best_split(curves: &[Curve], spline: SplineSpec, min_segment: usize) -> Option<Split> {
    let n = curves.len();
    if n < 2 * min_segment || min_segment == 0 {
        return None;
    }
    let cusum = Cusum::new(curves, spline);
    let ks = min_segment..=n - min_segment;
    let (raw, noise) = cusum.profile(ks.clone()).ok()?;
    let nf = n as f64;
    let scaled: Vec<f64> = ks.zip(&raw).map(|(k, v)| v * nf / (k as f64 * (nf - k as f64))).collect();
    let i = argmax_first(&scaled, noise * 4.0 / nf);
    Some((min_segment + i, scaled[i]))
}

/// Greedy binary segmentation: repeatedly splits the window whose best split
/// has the largest scaled CUSUM, until `k` changes are found or no split
/// exceeds [`OBJECTIVE_FLOOR`].
pub fn binary_segmentation(
    sample: &FunctionalSample,
    spline: SplineSpec,
    k: usize,
    min_segment: usize,
) -> Result<Segmentation> {
    let n = sample.n();
    if k == 0 {
        return Err(Error::domain("number of change points must be at least 1"));
    }
    if min_segment == 0 || k.saturating_mul(min_segment) >= n {
        return Err(Error::domain(format!("{k} changes with minimum segment {min_segment} do not fit in n = {n}")));
    }
    let curves = sample.curves();
    let split_of =
        |r: &Range<usize>| best_split(&curves[r.clone()], spline, min_segment).map(|(s, v)| (r.start + s, v));
    // each window with its best split, if any
    let mut windows: Vec<(Range<usize>, Option<Split>)> = vec![(0..n, split_of(&(0..n)))];
    let mut locations = Vec::new();
    let mut objectives = Vec::new();
    while locations.len() < k {
        let best = windows.iter().enumerate().filter_map(|(i, (_, c))| c.map(|(s, v)| (i, s, v))).fold(
            None,
            |acc: Option<(usize, usize, f64)>, x| match acc {
                Some(a) if a.2 >= x.2 => Some(a),
                _ => Some(x),
            },
        );
        let Some((i, at, value)) = best else { break };
        if value <= OBJECTIVE_FLOOR {
            break;
        }
        let (range, _) = windows.swap_remove(i);
        locations.push(at);
        objectives.push(value);
        for r in [range.start..at, at..range.end] {
            let c = split_of(&r);
            windows.push((r, c));
        }
    }
    let shortfall = locations.len() < k;
    locations.sort_unstable();
    Ok(Segmentation { locations, objectives, shortfall })
}
