// SPDX-License-Identifier: MIT OR Apache-2.0

//! On-disk pivotal tables.
//!
//! Layout (all integers and floats little endian):
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 8    | magic `RFTPIVOT`                        |
//! | 8      | 4    | u32 format version (1)                  |
//! | 12     | 1    | u8 kind: 0 integral, 1 sup, 2 range     |
//! | 13     | 3    | zero padding                            |
//! | 16     | 8    | f64 epsilon                             |
//! | 24     | 8    | u64 n_paths                             |
//! | 32     | 8    | u64 n_steps                             |
//! | 40     | 8    | u64 seed                                |
//! | 48     | 8    | u64 resampled paths                     |
//! | 56     | 8    | u64 sample count `s`                    |
//! | 64     | 8    | u64 denominator count `d` (0 or `s`)    |
//! | 72     | 8s   | f64 sorted ratio samples                |
//! | 72+8s  | 8d   | f64 sorted denominators                 |
//! | 72+8s+8d | 8d | f64 weights paired with the denominators |

use std::fs;
use std::path::{Path, PathBuf};

use super::{simulate_all_kinds, NormalizerKind, PivotalConfig, PivotalTable};
use crate::error::{Error, Result};

pub const CACHE_MAGIC: &[u8; 8] = b"RFTPIVOT";
pub const CACHE_VERSION: u32 = 1;
const HEADER_LEN: usize = 72;

fn kind_code(kind: NormalizerKind) -> u8 {
    match kind {
        NormalizerKind::Integral => 0,
        NormalizerKind::Sup => 1,
        NormalizerKind::Range => 2,
    }
}

fn encode(table: &PivotalTable) -> Vec<u8> {
    let c = table.config();
    let s = table.sorted_samples();
    let d = table.denominators();
    let w = table.weights();
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * (s.len() + 2 * d.len()));
    buf.extend_from_slice(CACHE_MAGIC);
    buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    buf.push(kind_code(c.kind));
    buf.extend_from_slice(&[0u8; 3]);
    buf.extend_from_slice(&c.epsilon.to_le_bytes());
    for v in [c.n_paths as u64, c.n_steps as u64, c.seed, table.resampled() as u64, s.len() as u64, d.len() as u64] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for v in s.iter().chain(d).chain(w) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

fn u64_at(bytes: &[u8], off: usize) -> u64 {
    u64::from_le_bytes(bytes[off..off + 8].try_into().expect("8 bytes"))
}

fn f64_at(bytes: &[u8], off: usize) -> f64 {
    f64::from_le_bytes(bytes[off..off + 8].try_into().expect("8 bytes"))
}

fn decode(bytes: &[u8]) -> Result<PivotalTable> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::CorruptTable(format!("{} bytes, header needs {HEADER_LEN}", bytes.len())));
    }
    if &bytes[..8] != CACHE_MAGIC {
        return Err(Error::CorruptTable("bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CACHE_VERSION {
        return Err(Error::CorruptTable(format!("unsupported version {version}")));
    }
    let kind = match bytes[12] {
        0 => NormalizerKind::Integral,
        1 => NormalizerKind::Sup,
        2 => NormalizerKind::Range,
        k => return Err(Error::CorruptTable(format!("unknown kind code {k}"))),
    };
    let config = PivotalConfig {
        epsilon: f64_at(bytes, 16),
        kind,
        n_paths: u64_at(bytes, 24) as usize,
        n_steps: u64_at(bytes, 32) as usize,
        seed: u64_at(bytes, 40),
    };
    config.validate().map_err(|e| Error::CorruptTable(format!("stored config invalid: {e}")))?;
    let resampled = u64_at(bytes, 48) as usize;
    let ns = u64_at(bytes, 56) as usize;
    let nd = u64_at(bytes, 64) as usize;
    let expected = nd
        .checked_mul(2)
        .and_then(|k| k.checked_add(ns))
        .and_then(|k| k.checked_mul(8))
        .and_then(|k| k.checked_add(HEADER_LEN));
    if expected != Some(bytes.len()) {
        return Err(Error::CorruptTable(format!(
            "length {} does not match {ns} samples and {nd} denominators",
            bytes.len()
        )));
    }
    if ns != config.n_paths {
        return Err(Error::CorruptTable(format!("{ns} samples for n_paths = {}", config.n_paths)));
    }
    let read = |start: usize, count: usize| -> Vec<f64> { (0..count).map(|i| f64_at(bytes, start + 8 * i)).collect() };
    let samples = read(HEADER_LEN, ns);
    let denoms = read(HEADER_LEN + 8 * ns, nd);
    let weights = read(HEADER_LEN + 8 * (ns + nd), nd);
    if denoms.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::CorruptTable("denominators not sorted".into()));
    }
    PivotalTable::from_parts(config, samples, denoms, weights, resampled)
}

/// Writes `table` atomically (temporary file then rename).
pub fn save_table(table: &PivotalTable, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    fs::write(&tmp, encode(table))?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_table(path: &Path) -> Result<PivotalTable> {
    decode(&fs::read(path)?)
}

/// Loads a table and checks it was built for `requested`.
pub fn load_table_matching(path: &Path, requested: &PivotalConfig) -> Result<PivotalTable> {
    let table = load_table(path)?;
    if !table.config().same_key(requested) {
        return Err(Error::CacheMiss(format!(
            "{} holds {:?}, requested {:?}",
            path.display(),
            table.config(),
            requested
        )));
    }
    Ok(table)
}

/// Directory of cached tables, one file per configuration.
#[derive(Clone, Debug)]
pub struct PivotalCache {
    dir: PathBuf,
    regenerate: bool,
}

impl PivotalCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        PivotalCache { dir: dir.into(), regenerate: false }
    }

    /// Ignore existing files and overwrite them.
    pub fn regenerating(mut self) -> Self {
        self.regenerate = true;
        self
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, config: &PivotalConfig) -> PathBuf {
        self.dir.join(format!(
            "pivotal-{}-eps{}-p{}-s{}-seed{}.bin",
            config.kind,
            config.epsilon_key(),
            config.n_paths,
            config.n_steps,
            config.seed
        ))
    }

    /// Returns the cached table for `config`, simulating and storing it (and
    /// its two sibling kinds, which share the paths) when absent or unusable.
    pub fn get_or_build(&self, config: &PivotalConfig) -> Result<PivotalTable> {
        config.validate()?;
        let path = self.path_for(config);
        if !self.regenerate && path.exists() {
            match load_table_matching(&path, config) {
                Ok(t) => return Ok(t),
                Err(Error::CacheMiss(_)) | Err(Error::CorruptTable(_)) => {}
                Err(e) => return Err(e),
            }
        }
        let tables = simulate_all_kinds(config.epsilon, config.n_paths, config.n_steps, config.seed)?;
        let mut wanted = None;
        for t in tables {
            save_table(&t, &self.path_for(t.config()))?;
            if t.config().kind == config.kind {
                wanted = Some(t);
            }
        }
        Ok(wanted.expect("all kinds simulated"))
    }
}
