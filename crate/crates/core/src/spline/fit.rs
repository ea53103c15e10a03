// SPDX-License-Identifier: MIT OR Apache-2.0

use std::ops::Range;

use super::{BandedSpd, SplineFit, SplineSpec, MAX_ORDER};
use crate::error::{Error, Result};
use crate::sample::{floor_fraction, Curve, FunctionalSample};

/// Running normal equations of the `1/N_i`-weighted least-squares mean fit.
///
/// Sums are kept unnormalized; the `1/m` factor cancels in the solution.
#[derive(Clone, Debug)]
pub struct NormalEquations {
    spec: SplineSpec,
    gram: BandedSpd,
    rhs: Vec<f64>,
    curves: usize,
    observations: usize,
}

impl NormalEquations {
    pub fn new(spec: SplineSpec) -> Self {
        NormalEquations {
            spec,
            gram: BandedSpd::zeros(spec.dim(), spec.order()),
            rhs: vec![0.0; spec.dim()],
            curves: 0,
            observations: 0,
        }
    }

    pub fn spec(&self) -> SplineSpec {
        self.spec
    }

    pub fn curves(&self) -> usize {
        self.curves
    }

    pub fn observations(&self) -> usize {
        self.observations
    }

    pub fn add_curve(&mut self, curve: &Curve) {
        let p = self.spec.order();
        let w = 1.0 / curve.len() as f64;
        let mut vals = [0.0; MAX_ORDER];
        for (x, y) in curve.points() {
            let start = self.spec.nonzero_basis(x, &mut vals);
            self.gram.add_outer(start, &vals[..p], w);
            let wy = w * y;
            for (r, b) in self.rhs[start..start + p].iter_mut().zip(&vals[..p]) {
                *r += wy * b;
            }
        }
        self.curves += 1;
        self.observations += curve.len();
    }

    /// Unnormalized weighted cross-product `sum_i N_i^{-1} sum_j B(X_ij) Y_ij`.
    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn banded_gram(&self) -> &BandedSpd {
        &self.gram
    }

    pub fn solve(&self) -> Result<Vec<f64>> {
        if self.curves == 0 {
            return Err(Error::domain("cannot fit a mean from zero curves"));
        }
        let chol = self.gram.cholesky()?;
        Ok(chol.solve(&self.rhs))
    }

    /// The normalized Gram matrix `(1/m) sum_i N_i^{-1} sum_j B B^T`.
    pub fn gram_matrix(&self) -> GramMatrix {
        let dim = self.spec.dim();
        let scale = if self.curves == 0 { 0.0 } else { 1.0 / self.curves as f64 };
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                entries[i * dim + j] = self.gram.get(i, j) * scale;
            }
        }
        GramMatrix { dim, entries }
    }
}

/// Dense symmetric Gram matrix `Q_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl GramMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.entries.chunks(self.dim)
    }
}

fn window(sample: &FunctionalSample, range: Option<Range<usize>>) -> Result<&[Curve]> {
    let range = range.unwrap_or(0..sample.n());
    if range.start >= range.end || range.end > sample.n() {
        return Err(Error::domain(format!(
            "curve window {}..{} invalid for n = {}",
            range.start,
            range.end,
            sample.n()
        )));
    }
    Ok(&sample.curves()[range])
}

fn prefix_len(len: usize, t: f64) -> Result<usize> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::domain(format!("fraction t = {t} outside (0, 1]")));
    }
    let m = floor_fraction(len, t);
    if m == 0 {
        return Err(Error::domain(format!("prefix floor({len} * {t}) is empty")));
    }
    Ok(m)
}

/// Mean fit from the first `floor(len * t)` curves of `range` (0-based, defaults to all curves).
pub fn fit_partial_mean(
    sample: &FunctionalSample,
    spec: SplineSpec,
    t: f64,
    range: Option<Range<usize>>,
) -> Result<SplineFit> {
    let curves = window(sample, range)?;
    let m = prefix_len(curves.len(), t)?;
    let mut ne = NormalEquations::new(spec);
    curves[..m].iter().for_each(|c| ne.add_curve(c));
    SplineFit::new(spec, ne.solve()?, t)
}

/// Normalized Gram matrix over the same prefix [`fit_partial_mean`] uses.
pub fn gram(sample: &FunctionalSample, spec: SplineSpec, t: f64, range: Option<Range<usize>>) -> Result<GramMatrix> {
    let curves = window(sample, range)?;
    let m = prefix_len(curves.len(), t)?;
    let mut ne = NormalEquations::new(spec);
    curves[..m].iter().for_each(|c| ne.add_curve(c));
    Ok(ne.gram_matrix())
}

/// Coefficients of the prefix fits on `curves[..m]` for every `m` in `counts`
/// (ascending, each in `1..=curves.len()`), accumulated in one pass.
pub fn prefix_coefficients(curves: &[Curve], spec: SplineSpec, counts: &[usize]) -> Result<Vec<Vec<f64>>> {
    if counts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::domain("prefix counts must be strictly increasing"));
    }
    if let Some(&last) = counts.last() {
        if counts[0] == 0 || last > curves.len() {
            return Err(Error::domain(format!("prefix counts must lie in 1..={}", curves.len())));
        }
    }
    let mut ne = NormalEquations::new(spec);
    let mut out = Vec::with_capacity(counts.len());
    let mut next = 0;
    for &m in counts {
        while next < m {
            ne.add_curve(&curves[next]);
            next += 1;
        }
        out.push(ne.solve()?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sample(n: usize, seed: u64, f: impl Fn(f64) -> f64) -> FunctionalSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let curves = (0..n)
            .map(|_| {
                let k = rng.random_range(3..=8);
                let xs: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
                let ys = xs.iter().map(|&x| f(x) + rng.random::<f64>() - 0.5).collect();
                Curve::new(xs, ys).unwrap()
            })
            .collect();
        FunctionalSample::new(curves).unwrap()
    }

    /// Dense weighted least squares via explicit normal equations and Gaussian elimination.
    fn dense_oracle(curves: &[Curve], spec: SplineSpec) -> Vec<f64> {
        let d = spec.dim();
        let mut a = vec![vec![0.0; d + 1]; d];
        for c in curves {
            let w = 1.0 / c.len() as f64;
            for (x, y) in c.points() {
                let b = spec.basis_eval(x).unwrap();
                for i in 0..d {
                    for j in 0..d {
                        a[i][j] += w * b[i] * b[j];
                    }
                    a[i][d] += w * b[i] * y;
                }
            }
        }
        for c in 0..d {
            let p = (c..d).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            a.swap(c, p);
            for r in c + 1..d {
                let f = a[r][c] / a[c][c];
                for k in c..=d {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
        let mut x = vec![0.0; d];
        for r in (0..d).rev() {
            let s: f64 = (r + 1..d).map(|k| a[r][k] * x[k]).sum();
            x[r] = (a[r][d] - s) / a[r][r];
        }
        x
    }

    #[test]
    fn constant_data_fits_constant() {
        let curves = (0..10)
            .map(|i| {
                let xs: Vec<f64> = (0..7).map(|j| ((i * 7 + j) as f64 * 0.137) % 1.0).collect();
                Curve::new(xs, vec![5.0; 7]).unwrap()
            })
            .collect();
        let s = FunctionalSample::new(curves).unwrap();
        let fit = fit_partial_mean(&s, SplineSpec::cubic(3), 1.0, None).unwrap();
        for k in 0..=20 {
            assert!((fit.eval(k as f64 / 20.0) - 5.0).abs() < 1e-10);
        }
    }

    #[test]
    fn in_span_data_recovered() {
        let spec = SplineSpec::cubic(4);
        let truth: Vec<f64> = (0..spec.dim()).map(|i| (i as f64 * 0.7).sin()).collect();
        let s = random_sample(40, 3, |_| 0.0);
        let s = FunctionalSample::new(
            s.curves()
                .iter()
                .map(|c| {
                    let ys = c.xs().iter().map(|&x| spec.evaluate(&truth, x)).collect();
                    Curve::new(c.xs().to_vec(), ys).unwrap()
                })
                .collect(),
        )
        .unwrap();
        let fit = fit_partial_mean(&s, spec, 1.0, None).unwrap();
        for (a, b) in fit.coefficients.iter().zip(&truth) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn partial_fits_match_dense_oracle() {
        let s = random_sample(50, 11, |x| (3.0 * x).sin());
        let spec = SplineSpec::cubic(3);
        let half = fit_partial_mean(&s, spec, 0.5, None).unwrap();
        let full = fit_partial_mean(&s, spec, 1.0, None).unwrap();
        assert_ne!(half.coefficients, full.coefficients);
        for (fit, m) in [(&half, 25), (&full, 50)] {
            let oracle = dense_oracle(&s.curves()[..m], spec);
            for (a, b) in fit.coefficients.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn windowed_prefix() {
        let s = random_sample(30, 5, |x| x);
        let spec = SplineSpec::cubic(1);
        let fit = fit_partial_mean(&s, spec, 0.5, Some(10..30)).unwrap();
        let oracle = dense_oracle(&s.curves()[10..20], spec);
        for (a, b) in fit.coefficients.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn prefix_path_matches_single_fits() {
        let s = random_sample(40, 8, |x| x * x);
        let spec = SplineSpec::cubic(2);
        let counts = [10, 17, 40];
        let path = prefix_coefficients(s.curves(), spec, &counts).unwrap();
        for (c, m) in path.iter().zip(counts) {
            let single = fit_partial_mean(&s, spec, m as f64 / 40.0, None).unwrap();
            assert_eq!(c, &single.coefficients);
        }
    }

    #[test]
    fn prefix_ignores_later_curves() {
        let s = random_sample(40, 9, |x| x);
        let spec = SplineSpec::cubic(2);
        let mut curves = s.curves().to_vec();
        curves[20..].reverse();
        let permuted = FunctionalSample::new(curves).unwrap();
        let a = fit_partial_mean(&s, spec, 0.5, None).unwrap();
        let b = fit_partial_mean(&permuted, spec, 0.5, None).unwrap();
        assert_eq!(a.coefficients, b.coefficients);
    }

    #[test]
    fn gram_scalar_and_band() {
        let s = random_sample(20, 1, |x| x);
        let g = gram(&s, SplineSpec::new(1, 0).unwrap(), 1.0, None).unwrap();
        assert_eq!(g.get(0, 0), 1.0);
        let spec = SplineSpec::cubic(6);
        let g = gram(&s, spec, 1.0, None).unwrap();
        for i in 0..spec.dim() {
            for j in 0..spec.dim() {
                assert_eq!(g.get(i, j), g.get(j, i));
                if i.abs_diff(j) >= spec.order() {
                    assert_eq!(g.get(i, j), 0.0);
                }
            }
        }
    }

    #[test]
    fn empty_prefix_and_sparse_design_errors() {
        let s = random_sample(5, 2, |x| x);
        assert!(matches!(fit_partial_mean(&s, SplineSpec::cubic(1), 0.1, None), Err(Error::Domain(_))));
        // One curve with three points cannot determine a 24-dimensional fit.
        let one = FunctionalSample::new(vec![Curve::new(vec![0.1, 0.2, 0.3], vec![1.0; 3]).unwrap()]).unwrap();
        assert!(matches!(fit_partial_mean(&one, SplineSpec::cubic(20), 1.0, None), Err(Error::IllConditioned { .. })));
    }
}
