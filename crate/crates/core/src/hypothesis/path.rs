// SPDX-License-Identifier: MIT OR Apache-2.0

//! The partial-sample discrepancy `t -> D(t)` shared by all procedures.
//!
//! A procedure is described by ordered groups of curves, each fitted in its
//! own spline space. For `t` in `[eps, 1]` group `g` contributes the fit on
//! its first `floor(L_g t)` curves; the discrepancy is `int f_1(t)^2` for a
//! single group and `sum_k int {f_{k+1}(t) - f_k(t)}^2` otherwise. `D(t)` is
//! that discrepancy minus its value at `t = 1` and is a step function whose
//! jumps are the points `i / L_g`.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::pivotal::NormalizerKind;
use crate::sample::{floor_fraction, Curve};
use crate::spline::{NodeBasis, NormalEquations, QuadGrid, SplineSpec};

/// One group of curves with its spline space.
#[derive(Clone, Copy, Debug)]
pub struct Group<'a> {
    pub curves: &'a [Curve],
    pub spec: SplineSpec,
}

/// `D` is constant on `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Piece {
    pub start: f64,
    pub end: f64,
    pub value: f64,
}

#[derive(Clone, Debug)]
pub struct DiscrepancyPath {
    /// Discrepancy of the full-sample fits.
    pub statistic: f64,
    /// Largest `int f^2` over the full-sample group fits; sets the size of rounding noise.
    pub scale: f64,
    pub pieces: Vec<Piece>,
}

/// Why a group cannot be fitted at the smallest fraction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ShortGroup {
    pub group: usize,
    pub curves: usize,
    pub observations: usize,
    pub needed: usize,
}

/// A jump point `num / den` of the floor counts.
#[derive(Clone, Copy, Debug)]
struct Jump {
    num: u64,
    den: u64,
    group: usize,
}

fn cmp_frac(a: (u64, u64), b: (u64, u64)) -> Ordering {
    (a.0 as u128 * b.1 as u128).cmp(&(b.0 as u128 * a.1 as u128))
}

/// Checks that every group has enough data at `t = eps`; `Ok(None)` when fine.
pub fn short_group(groups: &[Group<'_>], eps: f64) -> Option<ShortGroup> {
    for (g, grp) in groups.iter().enumerate() {
        let m = floor_fraction(grp.curves.len(), eps);
        let obs: usize = grp.curves[..m].iter().map(|c| c.len()).sum();
        let needed = grp.spec.dim();
        if m == 0 || obs < needed {
            return Some(ShortGroup { group: g, curves: m, observations: obs, needed });
        }
    }
    None
}

struct GroupState<'a> {
    group: Group<'a>,
    ne: NormalEquations,
    basis: NodeBasis,
    values: Vec<f64>,
}

impl GroupState<'_> {
    fn refresh(&mut self) -> Result<()> {
        let coef = self.ne.solve()?;
        self.basis.evaluate_into(&coef, &mut self.values);
        Ok(())
    }
}

fn discrepancy(grid: &QuadGrid, states: &[GroupState<'_>]) -> f64 {
    if states.len() == 1 {
        return grid.integrate_sq(&states[0].values);
    }
    states.windows(2).map(|w| grid.integrate_sq_diff(&w[1].values, &w[0].values)).sum()
}

/// Builds the step function `D` on `[eps, 1]`.
///
/// The caller is expected to have checked [`short_group`]; a singular design
/// still surfaces as [`Error::IllConditioned`].
pub fn discrepancy_path(groups: &[Group<'_>], eps: f64) -> Result<DiscrepancyPath> {
    if groups.is_empty() {
        return Err(Error::domain("no curve groups"));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::domain(format!("epsilon = {eps} outside (0, 1)")));
    }
    let specs: Vec<SplineSpec> = groups.iter().map(|g| g.spec).collect();
    let grid = QuadGrid::for_specs(&specs);
    let mut states: Vec<GroupState<'_>> = groups
        .iter()
        .map(|&group| GroupState {
            group,
            ne: NormalEquations::new(group.spec),
            basis: grid.basis_table(group.spec),
            values: Vec::new(),
        })
        .collect();

    let mut jumps = Vec::new();
    for (g, st) in states.iter_mut().enumerate() {
        let len = st.group.curves.len();
        let m0 = floor_fraction(len, eps);
        if m0 == 0 {
            return Err(Error::domain(format!("group {g} has an empty prefix at t = {eps}")));
        }
        for c in &st.group.curves[..m0] {
            st.ne.add_curve(c);
        }
        st.refresh()?;
        jumps.extend((m0 + 1..=len).map(|i| Jump { num: i as u64, den: len as u64, group: g }));
    }
    jumps.sort_by(|a, b| cmp_frac((a.num, a.den), (b.num, b.den)).then(a.group.cmp(&b.group)));

    // discrepancy values before each distinct jump point, then at t = 1
    let mut raw: Vec<(f64, f64)> = Vec::with_capacity(jumps.len() + 1);
    let mut start = eps;
    let mut current = discrepancy(&grid, &states);
    let mut i = 0;
    while i < jumps.len() {
        let head = jumps[i];
        let at = head.num as f64 / head.den as f64;
        raw.push((start, current));
        // apply every group jumping at this exact fraction
        let mut j = i;
        while j < jumps.len() && cmp_frac((jumps[j].num, jumps[j].den), (head.num, head.den)) == Ordering::Equal {
            let st = &mut states[jumps[j].group];
            let idx = jumps[j].num as usize - 1;
            st.ne.add_curve(&st.group.curves[idx]);
            j += 1;
        }
        for g in jumps[i..j].iter().map(|jp| jp.group) {
            states[g].refresh()?;
        }
        current = discrepancy(&grid, &states);
        start = at;
        i = j;
    }
    // `current` is now the full-sample discrepancy; `start` is 1 unless no jumps
    let statistic = current;
    let scale = states.iter().map(|st| grid.integrate_sq(&st.values)).fold(0.0, f64::max);
    let mut pieces = Vec::with_capacity(raw.len());
    for (k, &(a, v)) in raw.iter().enumerate() {
        let b = raw.get(k + 1).map_or(1.0, |r| r.0);
        if b > a {
            pieces.push(Piece { start: a, end: b, value: v - statistic });
        }
    }
    Ok(DiscrepancyPath { statistic, scale, pieces })
}

impl DiscrepancyPath {
    /// Self-normalizer of the given kind:
    /// integral `[int t^4 D^2]^{1/2}`, sup `sup t^2 |D|`, range `sup t^2 D - inf t^2 D`,
    /// all over `[eps, 1]` with the `t` factors integrated in closed form per piece.
    pub fn normalizer(&self, kind: NormalizerKind) -> f64 {
        match kind {
            NormalizerKind::Integral => self
                .pieces
                .iter()
                .map(|p| p.value * p.value * (p.end.powi(5) - p.start.powi(5)) / 5.0)
                .sum::<f64>()
                .sqrt(),
            NormalizerKind::Sup => self.pieces.iter().map(|p| p.end * p.end * p.value.abs()).fold(0.0, f64::max),
            NormalizerKind::Range => {
                // D(1) = 0 belongs to the range
                let (mut hi, mut lo) = (0.0f64, 0.0f64);
                for p in &self.pieces {
                    let a = p.start * p.start * p.value;
                    let b = p.end * p.end * p.value;
                    hi = hi.max(a.max(b));
                    lo = lo.min(a.min(b));
                }
                hi - lo
            }
        }
    }

    /// `D(t)`, with `D(1) = 0`.
    pub fn value_at(&self, t: f64) -> Option<f64> {
        if t == 1.0 {
            return Some(0.0);
        }
        self.pieces.iter().find(|p| p.start <= t && t < p.end).map(|p| p.value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::{fit_partial_mean, integrate_sq_diff, SplineFit};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noisy_curves(n: usize, seed: u64) -> Vec<Curve> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let m = rng.random_range(3..7);
                let xs: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
                let ys = xs.iter().map(|x| (6.0 * x).sin() + rng.random::<f64>() - 0.5).collect();
                Curve::new(xs, ys).unwrap()
            })
            .collect()
    }

    #[test]
    fn single_group_matches_direct_refits() {
        let curves = noisy_curves(37, 1);
        let sample = crate::sample::FunctionalSample::new(curves.clone()).unwrap();
        let spec = SplineSpec::cubic(2);
        let path = discrepancy_path(&[Group { curves: &curves, spec }], 0.2).unwrap();
        let full = fit_partial_mean(&sample, spec, 1.0, None).unwrap();
        let zero = SplineFit::new(spec, vec![0.0; spec.dim()], 1.0).unwrap();
        let t_full = integrate_sq_diff(&full, &zero).unwrap();
        assert!((path.statistic - t_full).abs() < 1e-12 * t_full.max(1.0));
        // pieces cover [0.2, 1) with jumps at i/37
        assert_eq!(path.pieces[0].start, 0.2);
        assert_eq!(path.pieces.last().unwrap().end, 1.0);
        assert_eq!(path.pieces.len(), 37 - 7);
        for p in &path.pieces {
            let t = 0.5 * (p.start + p.end);
            let f = fit_partial_mean(&sample, spec, t, None).unwrap();
            let v = integrate_sq_diff(&f, &zero).unwrap() - t_full;
            assert!((p.value - v).abs() < 1e-10, "{} vs {v}", p.value);
        }
    }

    #[test]
    fn unequal_groups_use_union_of_jumps() {
        let a = noisy_curves(10, 2);
        let b = noisy_curves(15, 3);
        let path = discrepancy_path(
            &[Group { curves: &a, spec: SplineSpec::cubic(1) }, Group { curves: &b, spec: SplineSpec::cubic(0) }],
            0.4,
        )
        .unwrap();
        // jumps of a: 5/10..10/10, of b: 7/15..15/15, shared 6/10 = 9/15, 8/10 = 12/15, 1
        let starts: Vec<f64> = path.pieces.iter().map(|p| p.start).collect();
        assert_eq!(starts.len(), 6 + 9 - 3);
        assert!(starts.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn short_groups_are_reported() {
        let a = noisy_curves(10, 4);
        let g = [Group { curves: &a, spec: SplineSpec::cubic(8) }];
        let s = short_group(&g, 0.1).unwrap();
        assert_eq!(s.curves, 1);
        assert_eq!(s.needed, 12);
        assert!(short_group(&[Group { curves: &a, spec: SplineSpec::cubic(0) }], 0.5).is_none());
    }

    #[test]
    fn closed_form_normalizers_on_a_known_step() {
        let path = DiscrepancyPath {
            statistic: 1.0,
            scale: 1.0,
            pieces: vec![Piece { start: 0.5, end: 0.75, value: 2.0 }, Piece { start: 0.75, end: 1.0, value: -1.0 }],
        };
        let int = ((4.0 * (0.75f64.powi(5) - 0.5f64.powi(5)) + (1.0 - 0.75f64.powi(5))) / 5.0).sqrt();
        assert!((path.normalizer(NormalizerKind::Integral) - int).abs() < 1e-15);
        assert_eq!(path.normalizer(NormalizerKind::Sup), 1.125);
        assert_eq!(path.normalizer(NormalizerKind::Range), 0.5625 * 2.0 + 1.0);
        assert_eq!(path.value_at(0.6), Some(2.0));
        assert_eq!(path.value_at(1.0), Some(0.0));
        assert_eq!(path.value_at(0.1), None);
    }
}
