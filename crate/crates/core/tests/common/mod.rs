// SPDX-License-Identifier: MIT OR Apache-2.0

#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relfts_core::{Curve, FunctionalSample, NormalizerKind, PivotalCache, PivotalConfig, PivotalTable};

/// Serializes table construction so concurrent tests never write the same file twice.
static BUILD: Mutex<()> = Mutex::new(());

pub fn cache_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("pivotal")
}

/// Default-resolution table, built once and shared by every test binary.
pub fn table(epsilon: f64, kind: NormalizerKind) -> PivotalTable {
    let _guard = BUILD.lock().unwrap_or_else(|e| e.into_inner());
    PivotalCache::new(cache_dir()).get_or_build(&PivotalConfig::new(epsilon, kind)).expect("pivotal table")
}

pub fn tables(epsilon: f64) -> Vec<PivotalTable> {
    NormalizerKind::ALL.iter().map(|&k| table(epsilon, k)).collect()
}

/// `n` curves of 5 to 9 uniform design points with mean `m(i, x)` and `N(0, 0.3^2)`-ish noise.
pub fn noisy_sample(n: usize, m: impl Fn(usize, f64) -> f64, seed: u64) -> FunctionalSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let curves = (0..n)
        .map(|i| {
            let len = rng.random_range(5..10);
            let pts: Vec<(f64, f64)> = (0..len)
                .map(|_| {
                    let x: f64 = rng.random();
                    let e: f64 = rng.random::<f64>() + rng.random::<f64>() + rng.random::<f64>() - 1.5;
                    (x, m(i, x) + 0.6 * e)
                })
                .collect();
            Curve::from_points(pts).unwrap()
        })
        .collect();
    FunctionalSample::new(curves).unwrap()
}

/// Noiseless curves on a fixed 7-point design with values `m(i, x)`.
pub fn exact_sample(n: usize, m: impl Fn(usize, f64) -> f64) -> FunctionalSample {
    let xs = [0.0, 0.13, 0.29, 0.5, 0.64, 0.81, 1.0];
    let curves = (0..n).map(|i| Curve::from_points(xs.iter().map(|&x| (x, m(i, x)))).unwrap()).collect();
    FunctionalSample::new(curves).unwrap()
}
