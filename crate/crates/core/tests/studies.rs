// SPDX-License-Identifier: MIT OR Apache-2.0

//! Monte Carlo properties of the tests on the Karhunen-Loeve design.

mod common;

use relfts_core::{rejection_study, DgpConfig, NormalizerKind, Scenario, Scheme, ScoreLaw, StudyConfig};

const REPS: usize = 500;
const ALPHA: f64 = 0.05;

fn one_sample(a: f64, scheme: Scheme, law: ScoreLaw) -> DgpConfig {
    DgpConfig::new(400, scheme, law, Scenario::OneSampleMean { a }, 0)
}

#[test]
fn power_is_monotone_in_effect_size() {
    let grid = [0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 2.5];
    let dgp = grid.iter().map(|&a| one_sample(a, Scheme::S2, ScoreLaw::Normal)).collect();
    let cfg = StudyConfig::new(dgp, vec![1.0], vec![ALPHA], REPS);
    let res = rejection_study(&cfg, &common::tables(0.1)).unwrap();
    let freqs: Vec<f64> = res.rows.iter().map(|r| r.reject_freq).collect();
    println!("a grid {grid:?} -> {freqs:?}");
    assert!(res.rows.iter().all(|r| r.failures == 0));
    let mut inversions = 0;
    for w in freqs.windows(2) {
        if w[1] < w[0] {
            assert!(w[0] - w[1] <= 0.02, "drop of {} in {freqs:?}", w[0] - w[1]);
            inversions += 1;
        }
    }
    assert!(inversions <= 1, "{freqs:?}");
}

#[test]
fn boundary_size_holds_for_every_scheme_and_law() {
    let mut dgp = Vec::new();
    for scheme in Scheme::ALL {
        for law in ScoreLaw::ALL {
            dgp.push(one_sample(1.0, scheme, law));
        }
    }
    let cfg = StudyConfig::new(dgp, vec![1.0], vec![ALPHA], REPS);
    let res = rejection_study(&cfg, &common::tables(0.1)).unwrap();
    let band = 3.0 * (ALPHA * (1.0 - ALPHA) / REPS as f64).sqrt();
    let mut bad = Vec::new();
    for r in &res.rows {
        println!("{} {} size {:.3}", r.scheme, r.law.as_str(), r.reject_freq);
        if (r.reject_freq - ALPHA).abs() > band || r.failures > 0 {
            bad.push(format!("{} {}: {} ({} failures)", r.scheme, r.law.as_str(), r.reject_freq, r.failures));
        }
    }
    assert!(bad.is_empty(), "outside {ALPHA} +- {band:.4}: {bad:?}");
}

#[test]
fn normalizers_share_evidence_within_a_study() {
    let mut cfg = StudyConfig::new(
        vec![one_sample(1.0, Scheme::S1, ScoreLaw::Uniform)],
        vec![0.5, 1.0, 2.0],
        vec![0.01, 0.05, 0.1],
        60,
    );
    cfg.kinds = NormalizerKind::ALL.to_vec();
    let tables = common::tables(0.1);
    let res = rejection_study(&cfg, &tables).unwrap();
    assert_eq!(res.rows.len(), 27);
    // larger delta or smaller alpha never rejects more often
    for kind in NormalizerKind::ALL {
        let cell = |d: f64, a: f64| {
            res.rows.iter().find(|r| r.kind == kind && r.delta == d && r.alpha == a).unwrap().rejections
        };
        for a in [0.01, 0.05, 0.1] {
            assert!(cell(0.5, a) >= cell(1.0, a) && cell(1.0, a) >= cell(2.0, a));
        }
        for d in [0.5, 1.0, 2.0] {
            assert!(cell(d, 0.1) >= cell(d, 0.05) && cell(d, 0.05) >= cell(d, 0.01));
        }
    }
}
