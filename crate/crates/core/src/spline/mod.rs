// SPDX-License-Identifier: MIT OR Apache-2.0

//! Equally spaced B-spline spaces on `[0, 1]`, weighted least-squares mean
//! fits over curve prefixes, exact quadrature and BIC knot selection.
//!
//! Knots are clamped: the boundary knots 0 and 1 are repeated `order` times,
//! so the space contains every polynomial of degree below `order`.

mod banded;
mod bic;
mod fit;
mod quadrature;

pub use banded::{BandedCholesky, BandedSpd, RCOND_THRESHOLD};
pub use bic::{bic_profile, bic_value, default_knot_range, select_knots_bic, select_knots_bic_segmented, KnotRange};
pub use fit::{fit_partial_mean, gram, prefix_coefficients, GramMatrix, NormalEquations};
pub use quadrature::{gauss_legendre, inner_product_matrix, integrate_sq_diff, NodeBasis, QuadGrid};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Largest supported spline order.
pub const MAX_ORDER: usize = 12;

/// Spline space of order `p` (degree `p - 1`) with `J` equally spaced interior
/// knots `l / (J + 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SplineSpec {
    order: usize,
    interior_knots: usize,
}

impl SplineSpec {
    pub fn new(order: usize, interior_knots: usize) -> Result<Self> {
        if order == 0 || order > MAX_ORDER {
            return Err(Error::domain(format!("spline order must lie in 1..={MAX_ORDER}, got {order}")));
        }
        Ok(SplineSpec { order, interior_knots })
    }

    /// Cubic splines.
    pub fn cubic(interior_knots: usize) -> Self {
        SplineSpec { order: 4, interior_knots }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn interior_knots(&self) -> usize {
        self.interior_knots
    }

    /// `J + p`.
    pub fn dim(&self) -> usize {
        self.interior_knots + self.order
    }

    pub fn subintervals(&self) -> usize {
        self.interior_knots + 1
    }

    /// Distinct knots `0 = t_0 < ... < t_{J+1} = 1`.
    pub fn breakpoints(&self) -> Vec<f64> {
        let m = self.subintervals();
        (0..=m).map(|l| l as f64 / m as f64).collect()
    }

    /// Entry `i` of the clamped knot vector of length `J + 2p`.
    fn knot(&self, i: usize) -> f64 {
        let p = self.order;
        if i < p {
            0.0
        } else if i >= self.interior_knots + p {
            1.0
        } else {
            (i + 1 - p) as f64 / self.subintervals() as f64
        }
    }

    /// Subinterval index `l` with `x` in `I_l`; the last interval is closed.
    pub fn interval(&self, x: f64) -> usize {
        let l = (x * self.subintervals() as f64).floor();
        if l <= 0.0 {
            0
        } else {
            (l as usize).min(self.interior_knots)
        }
    }

    /// The `p` possibly nonzero basis values at `x`, written into `out[..p]`.
    /// Returns the index of the first of them.
    pub fn nonzero_basis(&self, x: f64, out: &mut [f64]) -> usize {
        let p = self.order;
        let s = self.interval(x);
        let mu = s + p - 1;
        let mut left = [0.0; MAX_ORDER];
        let mut right = [0.0; MAX_ORDER];
        out[0] = 1.0;
        for j in 1..p {
            left[j] = x - self.knot(mu + 1 - j);
            right[j] = self.knot(mu + j) - x;
            let mut saved = 0.0;
            for r in 0..j {
                let tmp = out[r] / (right[r + 1] + left[j - r]);
                out[r] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            out[j] = saved;
        }
        s
    }

    /// Full basis vector `(B_1(x), ..., B_{J+p}(x))`.
    pub fn basis_eval(&self, x: f64) -> Result<Vec<f64>> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::domain(format!("x = {x} outside [0, 1]")));
        }
        let mut vals = [0.0; MAX_ORDER];
        let start = self.nonzero_basis(x, &mut vals);
        let mut out = vec![0.0; self.dim()];
        out[start..start + self.order].copy_from_slice(&vals[..self.order]);
        Ok(out)
    }

    /// `B(x)^T coefficients`.
    pub fn evaluate(&self, coefficients: &[f64], x: f64) -> f64 {
        let mut vals = [0.0; MAX_ORDER];
        let start = self.nonzero_basis(x, &mut vals);
        vals[..self.order].iter().zip(&coefficients[start..start + self.order]).map(|(b, c)| b * c).sum()
    }
}

/// An estimated mean function in a spline space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplineFit {
    pub spec: SplineSpec,
    pub coefficients: Vec<f64>,
    /// Fraction `t` of the curve window the fit was computed from.
    pub fraction: f64,
}

impl SplineFit {
    pub fn new(spec: SplineSpec, coefficients: Vec<f64>, fraction: f64) -> Result<Self> {
        if coefficients.len() != spec.dim() {
            return Err(Error::SpecMismatch(format!(
                "{} coefficients for a space of dimension {}",
                coefficients.len(),
                spec.dim()
            )));
        }
        Ok(SplineFit { spec, coefficients, fraction })
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.spec.evaluate(&self.coefficients, x)
    }
}
