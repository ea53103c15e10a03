// SPDX-License-Identifier: MIT OR Apache-2.0

use super::*;
use crate::pivotal::{simulate_ratio_samples, PivotalConfig};
use crate::sample::Curve;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn table(kind: NormalizerKind, eps: f64) -> PivotalTable {
    simulate_ratio_samples(PivotalConfig { epsilon: eps, kind, n_paths: 2000, n_steps: 200, seed: 1 }).unwrap()
}

fn constant_sample(n: usize, level: impl Fn(usize) -> f64, seed: u64) -> FunctionalSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FunctionalSample::new(
        (0..n)
            .map(|i| {
                let m = rng.random_range(3..=6);
                let xs: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
                Curve::new(xs, vec![level(i); m]).unwrap()
            })
            .collect(),
    )
    .unwrap()
}

fn noisy_sample(n: usize, mean: impl Fn(usize, f64) -> f64, seed: u64) -> FunctionalSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FunctionalSample::new(
        (0..n)
            .map(|i| {
                let m = rng.random_range(3..=6);
                let xs: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
                let ys = xs.iter().map(|&x| mean(i, x) + rng.random::<f64>() * 2.0 - 1.0).collect();
                Curve::new(xs, ys).unwrap()
            })
            .collect(),
    )
    .unwrap()
}

fn fixed(j: usize) -> SplineChoice {
    SplineChoice { order: 4, knots: KnotChoice::Fixed(j) }
}

fn spec_with(delta: f64, spline: SplineChoice) -> TestSpec {
    TestSpec { spline, ..TestSpec::new(delta, 0.05) }
}

#[test]
fn zero_data_never_rejects() {
    let s = constant_sample(60, |_| 0.0, 1);
    let t = table(NormalizerKind::Integral, 0.1);
    for delta in [1e-6, 0.5, 3.0] {
        let r = one_sample_test(&s, None, &spec_with(delta, fixed(2)), &t).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.normalizer, 0.0);
        assert!(r.degenerate_normalizer);
        assert!(!r.reject);
    }
}

#[test]
fn constant_data_reject_iff_square_exceeds_delta() {
    let t = table(NormalizerKind::Integral, 0.1);
    for c in [0.5, 2.0, -3.0] {
        let s = constant_sample(80, |_| c, 2);
        for delta in [0.1, 1.0, 4.5, 10.0] {
            let r = one_sample_test(&s, None, &spec_with(delta, fixed(3)), &t).unwrap();
            assert!((r.statistic - c * c).abs() < 1e-10);
            assert!(r.degenerate_normalizer);
            assert_eq!(r.threshold, delta);
            assert_eq!(r.reject, c * c > delta);
        }
    }
}

#[test]
fn recentering_by_baseline() {
    let s = constant_sample(40, |_| 2.0, 3);
    let t = table(NormalizerKind::Integral, 0.1);
    let m0 = |_x: f64| 2.0;
    let r = one_sample_test(&s, Some(&m0), &spec_with(0.5, fixed(1)), &t).unwrap();
    assert!(r.statistic < 1e-20);
    assert!(!r.reject);
}

#[test]
fn two_sample_copy_and_constants() {
    let t = table(NormalizerKind::Integral, 0.1);
    let s = noisy_sample(50, |_, x| x, 4);
    let r = two_sample_test(&s, &s.clone(), &spec_with(0.1, SplineChoice::default()), &t).unwrap();
    assert_eq!(r.statistic, 0.0);
    assert_eq!(r.normalizer, 0.0);
    assert!(!r.reject);
    let a = constant_sample(50, |_| 1.0, 5);
    let b = constant_sample(60, |_| 3.5, 6);
    for delta in [1.0, 6.0, 6.3] {
        let r = two_sample_test(&a, &b, &spec_with(delta, fixed(2)), &t).unwrap();
        assert!((r.statistic - 6.25).abs() < 1e-10);
        assert!(r.degenerate_normalizer);
        assert_eq!(r.reject, 6.25 > delta);
    }
}

#[test]
fn changepoint_constant_and_step() {
    let t = table(NormalizerKind::Integral, 0.1);
    let flat = constant_sample(100, |_| 1.5, 7);
    let r = changepoint_test(&flat, Some(50), &spec_with(0.2, fixed(2)), &t).unwrap();
    assert!(r.statistic < 1e-20);
    assert!(r.degenerate_normalizer);
    assert!(!r.reject);
    let h = 1.5;
    let step = constant_sample(100, |i| if i >= 40 { h } else { 0.0 }, 8);
    for delta in [1.0, 2.0, 3.0] {
        let r = changepoint_test(&step, Some(40), &spec_with(delta, fixed(2)), &t).unwrap();
        assert!((r.statistic - h * h).abs() < 1e-10);
        assert_eq!(r.reject, h * h > delta);
        assert_eq!(r.change_points, vec![40]);
    }
    let auto = changepoint_test(&step, None, &spec_with(1.0, fixed(2)), &t).unwrap();
    assert_eq!(auto.change_points, vec![40]);
    assert!(matches!(changepoint_test(&step, Some(5), &spec_with(1.0, fixed(2)), &t), Err(Error::Domain(_))));
}

#[test]
fn single_change_is_multi_with_one_change() {
    let s = noisy_sample(120, |i, x| if i >= 50 { x * x } else { 0.0 }, 9);
    for spline in [fixed(2), SplineChoice::default()] {
        let single = changepoint_evidence(&s, Some(50), 0.1, spline).unwrap();
        let multi = multi_changepoint_evidence(&s, &[50], 0.1, spline).unwrap();
        assert_eq!(single.statistic.to_bits(), multi.statistic.to_bits());
        for k in 0..3 {
            assert_eq!(single.normalizers[k].to_bits(), multi.normalizers[k].to_bits());
        }
        let via_theta = locations_from_fractions(120, &[50.0 / 120.0]).unwrap();
        assert_eq!(via_theta, vec![50]);
    }
}

#[test]
fn staircase_statistic() {
    let h = 1.2;
    let s = constant_sample(
        150,
        |i| {
            if i >= 100 {
                2.0 * h
            } else if i >= 50 {
                h
            } else {
                0.0
            }
        },
        10,
    );
    let t = table(NormalizerKind::Integral, 0.1);
    let r = multi_changepoint_test(&s, &[1.0 / 3.0, 2.0 / 3.0], &spec_with(1.0, fixed(1)), &t).unwrap();
    assert_eq!(r.change_points, vec![50, 100]);
    assert!((r.statistic - 2.0 * h * h).abs() < 1e-10);
    assert_eq!(r.reject, 2.0 * h * h > 1.0);
}

#[test]
fn multi_argument_errors() {
    let s = constant_sample(100, |_| 0.0, 11);
    let t = table(NormalizerKind::Integral, 0.1);
    let sp = spec_with(1.0, fixed(1));
    for bad in [&[0.0][..], &[0.5, 1.0], &[0.6, 0.4], &[-0.1], &[]] {
        assert!(matches!(multi_changepoint_test(&s, bad, &sp, &t), Err(Error::Domain(_))), "{bad:?}");
    }
    assert!(matches!(
        multi_changepoint_test(&s, &[0.02, 0.5], &sp, &t),
        Err(Error::InsufficientSegment { segment: 1, .. })
    ));
}

#[test]
fn insufficient_prefix() {
    let s = constant_sample(30, |_| 1.0, 12);
    let t = table(NormalizerKind::Integral, 0.1);
    assert!(matches!(
        one_sample_test(&s, None, &spec_with(1.0, fixed(10)), &t),
        Err(Error::InsufficientPrefix { curves: 3, needed: 14, .. })
    ));
}

#[test]
fn table_must_match() {
    let s = noisy_sample(40, |_, x| x, 13);
    let t = table(NormalizerKind::Sup, 0.1);
    assert!(one_sample_test(&s, None, &spec_with(1.0, fixed(1)), &t).is_err());
    let mut sp = spec_with(1.0, fixed(1));
    sp.kind = NormalizerKind::Sup;
    sp.epsilon = 0.2;
    assert!(one_sample_test(&s, None, &sp, &t).is_err());
    sp.epsilon = 0.1;
    assert!(one_sample_test(&s, None, &sp, &t).is_ok());
    sp.delta = 0.0;
    assert!(matches!(one_sample_test(&s, None, &sp, &t), Err(Error::Domain(_))));
}

/// Midpoint Riemann sum in `t` of `t^4 D(t)^2` over `[0.1, 1]` on about
/// `target` cells of width `1 / (10 n m)`, so every jump `i / n` is a cell edge.
fn riemann_t_integral(path: &DiscrepancyPath, n: usize, target: usize) -> f64 {
    let eps = 0.1;
    let m = (target as f64 / (9 * n) as f64).round().max(1.0) as usize;
    let cells = 9 * n * m;
    let h = 1.0 / (10 * n * m) as f64;
    let mut acc = 0.0;
    let mut piece = 0;
    for i in 0..cells {
        let t = eps + (i as f64 + 0.5) * h;
        while path.pieces[piece].end <= t {
            piece += 1;
        }
        let d = path.pieces[piece].value;
        acc += t.powi(4) * d * d * h;
    }
    acc
}

#[test]
fn exact_t_integration_matches_riemann() {
    for seed in 0..50 {
        let n = 30 + (seed as usize % 7) * 5;
        let s = noisy_sample(n, |_, x| (3.0 * x).cos(), 100 + seed);
        let spec = SplineSpec::cubic(1 + seed as usize % 3);
        let path = discrepancy_path(&[Group { curves: s.curves(), spec }], 0.1).unwrap();
        let exact = path.normalizer(NormalizerKind::Integral).powi(2);
        let oracle = riemann_t_integral(&path, n, 1_000_000);
        assert!((exact - oracle).abs() < 1e-8, "seed {seed}: {exact} vs {oracle}");
        // sup and range by dense evaluation of t^2 D(t)
        let mut hi = 0.0f64;
        let mut lo = 0.0f64;
        for p in &path.pieces {
            for t in [p.start, p.end - 1e-12] {
                hi = hi.max(t * t * p.value);
                lo = lo.min(t * t * p.value);
            }
        }
        assert!((path.normalizer(NormalizerKind::Range) - (hi - lo)).abs() < 1e-9);
        assert!(path.normalizer(NormalizerKind::Range) >= path.normalizer(NormalizerKind::Sup));
    }
}

#[test]
fn statistic_and_normalizer_scale_quadratically() {
    let s = noisy_sample(60, |_, x| x.sin(), 14);
    for c in [0.3, 2.0, 7.5] {
        let a = one_sample_evidence(&s, None, 0.1, fixed(2)).unwrap();
        let b = one_sample_evidence(&s.scaled(c), None, 0.1, fixed(2)).unwrap();
        assert!((b.statistic - c * c * a.statistic).abs() < 1e-9 * b.statistic);
        for k in 0..3 {
            assert!((b.normalizers[k] - c * c * a.normalizers[k]).abs() < 1e-9 * b.normalizers[k]);
        }
    }
}

#[test]
fn report_serializes() {
    let s = noisy_sample(40, |_, x| x, 15);
    let t = table(NormalizerKind::Integral, 0.1);
    let r = one_sample_test(&s, None, &spec_with(1.0, fixed(1)), &t).unwrap();
    let json = serde_json::to_string(&r).unwrap();
    let back: TestReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, r);
    assert!(json.contains("\"family\":\"one_sample\""));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn decision_identity(seed in 0u64..10_000, delta in 0.01f64..3.0, alpha in 0.01f64..0.5) {
        let s = noisy_sample(40, |_, x| 1.5 * x, seed);
        let t = table(NormalizerKind::Integral, 0.1);
        let e = one_sample_evidence(&s, None, 0.1, fixed(1)).unwrap();
        let r = e.decide(delta, alpha, NormalizerKind::Integral, &t).unwrap();
        prop_assert!(r.normalizer >= 0.0);
        prop_assert!(!r.degenerate_normalizer);
        prop_assert_eq!(r.reject, r.statistic > delta + r.quantile * r.normalizer);
        prop_assert_eq!(r.threshold, delta + r.quantile * r.normalizer);
        for k in 0..3 {
            prop_assert!(e.normalizers[k] >= 0.0);
        }
    }

    #[test]
    fn decisions_monotone_in_delta(seed in 0u64..10_000) {
        let s = noisy_sample(40, |_, x| x, seed);
        let t = table(NormalizerKind::Integral, 0.1);
        let e = one_sample_evidence(&s, None, 0.1, fixed(1)).unwrap();
        let decisions: Vec<bool> = (1..40)
            .map(|i| e.decide(i as f64 * 0.05, 0.05, NormalizerKind::Integral, &t).unwrap().reject)
            .collect();
        prop_assert!(decisions.windows(2).all(|w| w[0] || !w[1]));
    }
}
