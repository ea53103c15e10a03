// SPDX-License-Identifier: MIT OR Apache-2.0

#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Mutex;

use relfts_core::{NormalizerKind, PivotalCache, PivotalConfig, PivotalTable};

static BUILD: Mutex<()> = Mutex::new(());

/// Pivotal cache shared with the core test binaries.
pub fn cache_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("pivotal")
}

/// Builds (once) the default-resolution tables for `epsilon`.
pub fn warm(epsilon: f64) -> Vec<PivotalTable> {
    let _guard = BUILD.lock().unwrap_or_else(|e| e.into_inner());
    let cache = PivotalCache::new(cache_dir());
    NormalizerKind::ALL
        .iter()
        .map(|&k| cache.get_or_build(&PivotalConfig::new(epsilon, k)).expect("pivotal table"))
        .collect()
}

pub fn relfts(args: &[&str]) -> Output {
    warm(0.1);
    Command::new(env!("CARGO_BIN_EXE_relfts"))
        .args(args)
        .env("RELFTS_CACHE_DIR", cache_dir())
        .output()
        .expect("spawn relfts")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

pub fn report(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("report is not JSON ({e}): {}{}", stdout(out), stderr(out)))
}

/// Curve CSV with `n` curves on a fixed 6-point design and values `y(i, x)`.
pub fn write_csv(path: &Path, n: usize, y: impl Fn(usize, f64) -> f64) {
    let mut s = String::from("curve_id,x,y\n");
    for i in 0..n {
        for x in [0.0, 0.2, 0.35, 0.6, 0.8, 1.0] {
            writeln!(s, "c{i},{x},{:?}", y(i, x)).unwrap();
        }
    }
    std::fs::write(path, s).unwrap();
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}
