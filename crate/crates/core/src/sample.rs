// SPDX-License-Identifier: MIT OR Apache-2.0

//! Discretely observed curves and time-ordered samples of them.

use crate::error::{Error, Result};

/// One curve: noisy values observed at design points in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Curve {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::domain(format!("curve has {} design points but {} values", xs.len(), ys.len())));
        }
        if xs.is_empty() {
            return Err(Error::domain("curve must hold at least one observation"));
        }
        if let Some(x) = xs.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::domain(format!("design point {x} outside [0, 1]")));
        }
        if ys.iter().any(|y| !y.is_finite()) {
            return Err(Error::domain("curve values must be finite"));
        }
        Ok(Curve { xs, ys })
    }

    pub fn from_points(points: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let (xs, ys) = points.into_iter().unzip();
        Curve::new(xs, ys)
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    /// Number of observations `N_i`.
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.ys.iter().copied())
    }

    /// Returns a copy with `y - f(x)` in place of every `y`.
    pub fn recentered(&self, f: impl Fn(f64) -> f64) -> Curve {
        Curve { xs: self.xs.clone(), ys: self.points().map(|(x, y)| y - f(x)).collect() }
    }

    pub fn scaled(&self, c: f64) -> Curve {
        Curve { xs: self.xs.clone(), ys: self.ys.iter().map(|y| c * y).collect() }
    }
}

/// Time-ordered sample of curves; curve `i` (1-based in the model) sits at index `i - 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionalSample {
    curves: Vec<Curve>,
}

impl FunctionalSample {
    pub fn new(curves: Vec<Curve>) -> Result<Self> {
        if curves.is_empty() {
            return Err(Error::domain("a functional sample needs at least one curve"));
        }
        Ok(FunctionalSample { curves })
    }

    pub fn curves(&self) -> &[Curve] {
        &self.curves
    }

    pub fn n(&self) -> usize {
        self.curves.len()
    }

    pub fn total_observations(&self) -> usize {
        self.curves.iter().map(Curve::len).sum()
    }

    /// Harmonic mean of the per-curve observation counts.
    pub fn harmonic_mean_obs(&self) -> f64 {
        let inv: f64 = self.curves.iter().map(|c| 1.0 / c.len() as f64).sum();
        self.n() as f64 / inv
    }

    pub fn recentered(&self, f: impl Fn(f64) -> f64) -> FunctionalSample {
        FunctionalSample { curves: self.curves.iter().map(|c| c.recentered(&f)).collect() }
    }

    pub fn scaled(&self, c: f64) -> FunctionalSample {
        FunctionalSample { curves: self.curves.iter().map(|cv| cv.scaled(c)).collect() }
    }

    pub fn reversed(&self) -> FunctionalSample {
        FunctionalSample { curves: self.curves.iter().rev().cloned().collect() }
    }

    /// Curves `range` as a new sample.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<FunctionalSample> {
        if range.start >= range.end || range.end > self.n() {
            return Err(Error::domain(format!(
                "curve window {}..{} invalid for n = {}",
                range.start,
                range.end,
                self.n()
            )));
        }
        FunctionalSample::new(self.curves[range].to_vec())
    }
}

/// `floor(count * t)` with a small tolerance so that decimal fractions such as
/// `0.3 * 200` land on the intended integer.
pub fn floor_fraction(count: usize, t: f64) -> usize {
    let v = (count as f64 * t + 1e-9).floor();
    if v <= 0.0 {
        0
    } else {
        v as usize
    }
}
