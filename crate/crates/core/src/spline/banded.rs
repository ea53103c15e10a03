// SPDX-License-Identifier: MIT OR Apache-2.0

use crate::error::{Error, Result};

/// Factorizations whose reciprocal condition estimate falls below this are rejected.
pub const RCOND_THRESHOLD: f64 = 1e-12;

/// Symmetric banded matrix holding its lower band: `A[i][i - k]` for `k < bandwidth`.
#[derive(Clone, Debug, PartialEq)]
pub struct BandedSpd {
    dim: usize,
    bandwidth: usize,
    data: Vec<f64>,
}

impl BandedSpd {
    /// `bandwidth` counts the diagonal, so a tridiagonal matrix has bandwidth 2.
    pub fn zeros(dim: usize, bandwidth: usize) -> Self {
        BandedSpd { dim, bandwidth, data: vec![0.0; dim * bandwidth] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    /// Entry `(i, j)`; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let k = i - j;
        if k >= self.bandwidth {
            0.0
        } else {
            self.data[i * self.bandwidth + k]
        }
    }

    /// Adds `weight * v v^T` where `v` is supported on `start..start + v.len()`.
    #[inline]
    pub fn add_outer(&mut self, start: usize, v: &[f64], weight: f64) {
        debug_assert!(v.len() <= self.bandwidth);
        for (a, va) in v.iter().enumerate() {
            let row = (start + a) * self.bandwidth;
            let wa = weight * va;
            for (b, vb) in v[..=a].iter().enumerate() {
                self.data[row + a - b] += wa * vb;
            }
        }
    }

    pub fn add_assign(&mut self, other: &BandedSpd) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|v| *v *= c);
    }

    pub fn mat_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        for i in 0..self.dim {
            for k in 0..self.bandwidth.min(i + 1) {
                let a = self.data[i * self.bandwidth + k];
                let j = i - k;
                y[i] += a * x[j];
                if k > 0 {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }

    /// `x^T A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.mat_vec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Banded Cholesky factorization `A = L L^T`.
    pub fn cholesky(&self) -> Result<BandedCholesky> {
        let bw = self.bandwidth;
        let n = self.dim;
        let mut l = vec![0.0; n * bw];
        let mut dmin = f64::INFINITY;
        let mut dmax = 0.0f64;
        for j in 0..n {
            let lo = j.saturating_sub(bw - 1);
            let mut s = self.data[j * bw];
            for k in lo..j {
                let v = l[j * bw + (j - k)];
                s -= v * v;
            }
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::IllConditioned { rcond: 0.0, threshold: RCOND_THRESHOLD });
            }
            let d = s.sqrt();
            l[j * bw] = d;
            dmin = dmin.min(d);
            dmax = dmax.max(d);
            for i in j + 1..(j + bw).min(n) {
                let lo_i = i.saturating_sub(bw - 1).max(lo);
                let mut s = self.data[i * bw + (i - j)];
                for k in lo_i..j {
                    s -= l[i * bw + (i - k)] * l[j * bw + (j - k)];
                }
                l[i * bw + (i - j)] = s / d;
            }
        }
        let rcond = if n == 0 { 1.0 } else { (dmin / dmax).powi(2) };
        if rcond < RCOND_THRESHOLD {
            return Err(Error::IllConditioned { rcond, threshold: RCOND_THRESHOLD });
        }
        Ok(BandedCholesky { dim: n, bandwidth: bw, l, rcond })
    }
}

/// Lower banded Cholesky factor.
#[derive(Clone, Debug)]
pub struct BandedCholesky {
    dim: usize,
    bandwidth: usize,
    l: Vec<f64>,
    rcond: f64,
}

impl BandedCholesky {
    /// Squared ratio of the smallest to the largest diagonal entry of `L`.
    pub fn rcond_estimate(&self) -> f64 {
        self.rcond
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let bw = self.bandwidth;
        let n = self.dim;
        for i in 0..n {
            let mut s = x[i];
            for k in 1..bw.min(i + 1) {
                s -= self.l[i * bw + k] * x[i - k];
            }
            x[i] = s / self.l[i * bw];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in 1..bw.min(n - i) {
                s -= self.l[(i + k) * bw + k] * x[i + k];
            }
            x[i] = s / self.l[i * bw];
        }
    }
}
