// SPDX-License-Identifier: MIT OR Apache-2.0

use super::{BandedSpd, SplineFit, SplineSpec, MAX_ORDER};
use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights on `[-1, 1]`, exact for polynomials of degree `2n - 1`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "at least one node");
    if n == 1 {
        return (vec![0.0], vec![2.0]);
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            // P_n(x) and P_{n-1}(x) by the three-term recurrence.
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Composite Gauss–Legendre rule on the union of the knot grids of several
/// spline spaces, with `max order` nodes per piece: exact for products of two
/// splines from any of them.
#[derive(Clone, Debug)]
pub struct QuadGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadGrid {
    pub fn for_specs(specs: &[SplineSpec]) -> QuadGrid {
        let order = specs.iter().map(|s| s.order()).max().unwrap_or(1);
        let mut breaks: Vec<f64> = specs.iter().flat_map(|s| s.breakpoints()).collect();
        if breaks.is_empty() {
            breaks = vec![0.0, 1.0];
        }
        breaks.sort_by(f64::total_cmp);
        breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        let (gx, gw) = gauss_legendre(order);
        let mut nodes = Vec::with_capacity((breaks.len() - 1) * order);
        let mut weights = Vec::with_capacity(nodes.capacity());
        for w in breaks.windows(2) {
            let half = 0.5 * (w[1] - w[0]);
            let mid = 0.5 * (w[1] + w[0]);
            for (x, g) in gx.iter().zip(&gw) {
                nodes.push(mid + half * x);
                weights.push(half * g);
            }
        }
        QuadGrid { nodes, weights }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Basis values of `spec` at every node, for repeated evaluation.
    pub fn basis_table(&self, spec: SplineSpec) -> NodeBasis {
        let p = spec.order();
        let mut starts = Vec::with_capacity(self.nodes.len());
        let mut vals = Vec::with_capacity(self.nodes.len() * p);
        let mut buf = [0.0; MAX_ORDER];
        for &x in &self.nodes {
            starts.push(spec.nonzero_basis(x, &mut buf));
            vals.extend_from_slice(&buf[..p]);
        }
        NodeBasis { spec, starts, vals }
    }

    /// `sum_k w_k v_k^2`.
    pub fn integrate_sq(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v * v).sum()
    }

    /// `sum_k w_k (a_k - b_k)^2`.
    pub fn integrate_sq_diff(&self, a: &[f64], b: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(a.iter().zip(b))
            .map(|(w, (x, y))| {
                let d = x - y;
                w * d * d
            })
            .sum()
    }
}

/// Basis values of one spline space at the nodes of a [`QuadGrid`].
#[derive(Clone, Debug)]
pub struct NodeBasis {
    spec: SplineSpec,
    starts: Vec<usize>,
    vals: Vec<f64>,
}

impl NodeBasis {
    pub fn spec(&self) -> SplineSpec {
        self.spec
    }

    /// Values of the spline with `coefficients` at every node.
    pub fn evaluate_into(&self, coefficients: &[f64], out: &mut Vec<f64>) {
        let p = self.spec.order();
        out.clear();
        out.extend(self.starts.iter().enumerate().map(|(k, &s)| {
            self.vals[k * p..(k + 1) * p].iter().zip(&coefficients[s..s + p]).map(|(b, c)| b * c).sum::<f64>()
        }));
    }

    pub fn evaluate(&self, coefficients: &[f64]) -> Vec<f64> {
        let mut out = Vec::new();
        self.evaluate_into(coefficients, &mut out);
        out
    }
}

/// Exact inner-product matrix `M = int_0^1 B(x) B(x)^T dx` (banded).
pub fn inner_product_matrix(spec: SplineSpec) -> BandedSpd {
    let grid = QuadGrid::for_specs(&[spec]);
    let p = spec.order();
    let mut m = BandedSpd::zeros(spec.dim(), p);
    let mut buf = [0.0; MAX_ORDER];
    for (&x, &w) in grid.nodes.iter().zip(&grid.weights) {
        let s = spec.nonzero_basis(x, &mut buf);
        m.add_outer(s, &buf[..p], w);
    }
    m
}

/// `int_0^1 {f_A(x) - f_B(x)}^2 dx`, exact for splines of any two equally spaced spaces.
pub fn integrate_sq_diff(a: &SplineFit, b: &SplineFit) -> Result<f64> {
    for f in [a, b] {
        if f.coefficients.len() != f.spec.dim() {
            return Err(Error::SpecMismatch(format!(
                "fit carries {} coefficients for dimension {}",
                f.coefficients.len(),
                f.spec.dim()
            )));
        }
    }
    let grid = QuadGrid::for_specs(&[a.spec, b.spec]);
    let va = grid.basis_table(a.spec).evaluate(&a.coefficients);
    let vb = grid.basis_table(b.spec).evaluate(&b.coefficients);
    Ok(grid.integrate_sq_diff(&va, &vb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn legendre_rules_integrate_monomials() {
        for n in 1..=8 {
            let (x, w) = gauss_legendre(n);
            for deg in 0..2 * n {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-14, "n={n} deg={deg}: {q} vs {exact}");
            }
        }
    }

    #[test]
    fn identical_and_constant_fits() {
        let spec = SplineSpec::cubic(5);
        let c: Vec<f64> = (0..spec.dim()).map(|i| i as f64).collect();
        let f = SplineFit::new(spec, c, 1.0).unwrap();
        assert_eq!(integrate_sq_diff(&f, &f).unwrap(), 0.0);
        let three = SplineFit::new(spec, vec![3.0; spec.dim()], 1.0).unwrap();
        let one = SplineFit::new(spec, vec![1.0; spec.dim()], 1.0).unwrap();
        assert!((integrate_sq_diff(&three, &one).unwrap() - 4.0).abs() < 1e-13);
    }

    fn riemann(a: &SplineFit, b: &SplineFit, cells: usize) -> f64 {
        let h = 1.0 / cells as f64;
        (0..cells)
            .map(|k| {
                let x = (k as f64 + 0.5) * h;
                let d = a.eval(x) - b.eval(x);
                d * d
            })
            .sum::<f64>()
            * h
    }

    #[test]
    fn mixed_spaces_match_riemann() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sa = SplineSpec::cubic(3);
        let sb = SplineSpec::new(3, 4).unwrap();
        let a = SplineFit::new(sa, (0..sa.dim()).map(|_| rng.random::<f64>() * 2.0).collect(), 1.0).unwrap();
        let b = SplineFit::new(sb, (0..sb.dim()).map(|_| rng.random::<f64>() * 2.0).collect(), 1.0).unwrap();
        let q = integrate_sq_diff(&a, &b).unwrap();
        assert!((q - riemann(&a, &b, 200_000)).abs() < 1e-8);
    }

    #[test]
    fn inner_products_agree_across_rules() {
        // Same exactness from a higher-order rule on the same pieces.
        let spec = SplineSpec::cubic(6);
        let m = inner_product_matrix(spec);
        let breaks = spec.breakpoints();
        let (gx, gw) = gauss_legendre(9);
        for i in 0..spec.dim() {
            for j in 0..spec.dim() {
                let mut s = 0.0;
                for w in breaks.windows(2) {
                    let (h, c) = (0.5 * (w[1] - w[0]), 0.5 * (w[1] + w[0]));
                    for (x, g) in gx.iter().zip(&gw) {
                        let b = spec.basis_eval(c + h * x).unwrap();
                        s += h * g * b[i] * b[j];
                    }
                }
                assert!((m.get(i, j) - s).abs() < 1e-12);
            }
        }
    }
}
