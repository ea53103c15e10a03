// SPDX-License-Identifier: MIT OR Apache-2.0

//! Monte Carlo tabulation of the pivotal law `W(1) / D`, where `D` is a
//! functional of `t -> t {W(t) - t W(1)}` on `[eps, 1]` and `W` is standard
//! Brownian motion.
//!
//! Paths are simulated in blocks of [`BLOCK_PATHS`]; block `b` draws from the
//! ChaCha8 stream `b` of the configured seed, so tables do not depend on the
//! number of worker threads. Every path yields all three functionals, so the
//! tables of different kinds built from one seed share their paths.
//!
//! Two refinements over a plain grid evaluation:
//! * sup and inf are taken over the continuous path: between grid points the
//!   process is interpolated by a Brownian bridge and the extremes are drawn
//!   from their exact conditional law, which removes the `O(n_steps^{-1/2})`
//!   downward bias of grid extremes;
//! * quantiles use the conditional law of `W(1)` given the bridge (the two are
//!   independent, also on the grid), `P(W(1)/D <= q) = sum_i w_i Phi(q D_i)`,
//!   where `w_i` are regression control-variate weights built from quadratic
//!   forms of the bridge whose moments are known exactly on the grid.
//!
//! The ranked ratios stay available through [`PivotalTable::empirical_quantile`].

mod cache;

pub use cache::{load_table, load_table_matching, save_table, PivotalCache, CACHE_MAGIC, CACHE_VERSION};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_PATHS: usize = 200_000;
pub const DEFAULT_STEPS: usize = 2_000;
pub const DEFAULT_SEED: u64 = 20_240_105;
pub const BLOCK_PATHS: usize = 1024;

/// Which functional of the weighted bridge normalizes the statistic.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizerKind {
    /// `[int_eps^1 t^2 {W(t) - t W(1)}^2 dt]^{1/2}`
    Integral,
    /// `sup |t {W(t) - t W(1)}|`
    Sup,
    /// `sup t {W(t) - t W(1)} - inf t {W(t) - t W(1)}`
    Range,
}

impl NormalizerKind {
    pub const ALL: [NormalizerKind; 3] = [NormalizerKind::Integral, NormalizerKind::Sup, NormalizerKind::Range];

    pub fn as_str(&self) -> &'static str {
        match self {
            NormalizerKind::Integral => "integral",
            NormalizerKind::Sup => "sup",
            NormalizerKind::Range => "range",
        }
    }

    fn index(&self) -> usize {
        match self {
            NormalizerKind::Integral => 0,
            NormalizerKind::Sup => 1,
            NormalizerKind::Range => 2,
        }
    }
}

impl std::fmt::Display for NormalizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for NormalizerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "integral" => Ok(NormalizerKind::Integral),
            "sup" => Ok(NormalizerKind::Sup),
            "range" => Ok(NormalizerKind::Range),
            other => Err(Error::domain(format!("unknown normalizer kind '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PivotalConfig {
    pub epsilon: f64,
    pub kind: NormalizerKind,
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
}

impl PivotalConfig {
    pub fn new(epsilon: f64, kind: NormalizerKind) -> Self {
        PivotalConfig { epsilon, kind, n_paths: DEFAULT_PATHS, n_steps: DEFAULT_STEPS, seed: DEFAULT_SEED }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::domain(format!("epsilon = {} outside (0, 1)", self.epsilon)));
        }
        if self.n_paths == 0 {
            return Err(Error::domain("n_paths must be at least 1"));
        }
        if self.n_steps < 2 || (self.n_steps as f64) * self.epsilon < 2.0 - 1e-9 {
            return Err(Error::domain(format!(
                "n_steps = {} too coarse for epsilon = {} (need n_steps * epsilon >= 2)",
                self.n_steps, self.epsilon
            )));
        }
        Ok(())
    }

    /// Key used to match cached tables: epsilon is compared at 1e-6 resolution.
    pub fn epsilon_key(&self) -> i64 {
        (self.epsilon * 1e6).round() as i64
    }

    pub fn same_key(&self, other: &PivotalConfig) -> bool {
        self.kind == other.kind
            && self.epsilon_key() == other.epsilon_key()
            && self.n_paths == other.n_paths
            && self.n_steps == other.n_steps
            && self.seed == other.seed
    }
}

/// Simulated pivotal law for one configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct PivotalTable {
    config: PivotalConfig,
    sorted_samples: Vec<f64>,
    denominators: Vec<f64>,
    weights: Vec<f64>,
    resampled: usize,
}

impl PivotalTable {
    /// Table from raw ratio samples only; quantiles fall back to nearest rank.
    pub fn from_samples(config: PivotalConfig, mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() || samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("pivotal samples must be finite and nonempty"));
        }
        samples.sort_by(f64::total_cmp);
        Ok(PivotalTable {
            config,
            sorted_samples: samples,
            denominators: Vec::new(),
            weights: Vec::new(),
            resampled: 0,
        })
    }

    pub(crate) fn from_parts(
        config: PivotalConfig,
        sorted_samples: Vec<f64>,
        denominators: Vec<f64>,
        weights: Vec<f64>,
        resampled: usize,
    ) -> Result<Self> {
        if sorted_samples.is_empty() {
            return Err(Error::CorruptTable("no samples".into()));
        }
        if sorted_samples.windows(2).any(|w| !(w[0] <= w[1])) || sorted_samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::CorruptTable("samples not sorted or not finite".into()));
        }
        if denominators.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::CorruptTable("nonpositive denominator".into()));
        }
        if !denominators.is_empty() && denominators.len() != sorted_samples.len() {
            return Err(Error::CorruptTable("sample and denominator counts differ".into()));
        }
        if weights.len() != denominators.len() || weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::CorruptTable("weights do not match denominators".into()));
        }
        if !weights.is_empty() && (weights.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
            return Err(Error::CorruptTable("weights do not sum to one".into()));
        }
        Ok(PivotalTable { config, sorted_samples, denominators, weights, resampled })
    }

    pub fn config(&self) -> &PivotalConfig {
        &self.config
    }

    pub fn sorted_samples(&self) -> &[f64] {
        &self.sorted_samples
    }

    /// Simulated normalizer values `D_i` (empty for tables built from samples).
    pub fn denominators(&self) -> &[f64] {
        &self.denominators
    }

    /// Control-variate weights paired with [`Self::denominators`].
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Paths redrawn because their normalizer vanished.
    pub fn resampled(&self) -> usize {
        self.resampled
    }

    /// Nearest-rank empirical quantile of the simulated ratios.
    pub fn empirical_quantile(&self, level: f64) -> Result<f64> {
        check_level(level)?;
        let n = self.sorted_samples.len();
        let rank = ((level * n as f64) - 1e-9).ceil().max(1.0) as usize;
        Ok(self.sorted_samples[rank.min(n) - 1])
    }

    /// Quantile of the pivotal law at `level`.
    ///
    /// Uses the conditional-Gaussian estimator when the table carries its
    /// denominators, otherwise the nearest-rank rule.
    pub fn quantile(&self, level: f64) -> Result<f64> {
        check_level(level)?;
        if self.denominators.is_empty() {
            return self.empirical_quantile(level);
        }
        Ok(mixture_quantile(&self.denominators, &self.weights, level))
    }

    /// `P(W(1) / D <= q)` under the conditional estimator.
    pub fn cdf(&self, q: f64) -> f64 {
        if self.denominators.is_empty() {
            let k = self.sorted_samples.partition_point(|v| *v <= q);
            return k as f64 / self.sorted_samples.len() as f64;
        }
        mixture_cdf(&self.denominators, &self.weights, q).0
    }
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::domain(format!("quantile level {level} outside (0, 1)")));
    }
    Ok(())
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// `sum_i w_i Phi(q d_i)` and its derivative in `q`.
fn mixture_cdf(denoms: &[f64], weights: &[f64], q: f64) -> (f64, f64) {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    let (mut f, mut df) = (0.0, 0.0);
    for (&d, &w) in denoms.iter().zip(weights) {
        let z = q * d;
        f += w * std_normal_cdf(z);
        df += w * d * INV_SQRT_2PI * (-0.5 * z * z).exp();
    }
    (f, df)
}

/// Solves `sum_i w_i Phi(q d_i) = level` by safeguarded Newton iteration.
fn mixture_quantile(denoms: &[f64], weights: &[f64], level: f64) -> f64 {
    if level == 0.5 {
        return 0.0;
    }
    // The law is symmetric; solve in the upper half.
    let (target, sign) = if level > 0.5 { (level, 1.0) } else { (1.0 - level, -1.0) };
    let mut lo = 0.0;
    let mut hi = 1.0;
    while mixture_cdf(denoms, weights, hi).0 < target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            break;
        }
    }
    let mut q = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (f, df) = mixture_cdf(denoms, weights, q);
        let g = f - target;
        if g < 0.0 {
            lo = q;
        } else {
            hi = q;
        }
        let newton = q - g / df;
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - q).abs() <= 1e-13 * q.abs().max(1.0) || hi - lo <= 1e-13 * hi.abs().max(1.0) {
            q = next;
            break;
        }
        q = next;
    }
    sign * q
}

/// Number of control variates recorded per path.
pub(crate) const N_CONTROLS: usize = 4;

/// The three normalizers of one path, plus quadratic functionals of the
/// bridge whose expectations are known exactly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct PathFunctionals {
    pub w1: f64,
    pub d: [f64; 3],
    pub controls: [f64; N_CONTROLS],
}

#[derive(Default)]
pub(crate) struct PathScratch {
    values: Vec<f64>,
    rates: Vec<f64>,
    cands: Vec<(f64, f64, f64)>,
    control_weights: Vec<[f64; N_CONTROLS]>,
    control_key: (usize, usize),
}

/// Per-point weights `omega_j(t_k)` of the controls `sum_k omega_j(t_k) v_k^2`
/// on the grid points `k0..=n` (trapezoid weights times `t^-2`, `1`, `t^2`,
/// and `1` restricted to `t <= 1/2`).
fn control_point_weights(n: usize, k0: usize, out: &mut Vec<[f64; N_CONTROLS]>) {
    let h = 1.0 / n as f64;
    out.clear();
    for idx in k0..=n {
        let t = idx as f64 * h;
        let tau = if idx == k0 || idx == n { 0.5 * h } else { h };
        let half = if 2 * idx <= n { tau } else { 0.0 };
        out.push([tau / (t * t), tau, tau * t * t, half]);
    }
}

/// Scales `theta * E[Q]` of the exponential features `exp(-theta Q)` built
/// on the integral form.
const EXP_SCALES: [f64; 3] = [1.0, 4.0, 16.0];

/// Number of regression features: the forms, their pairwise products and
/// exponentials of the integral form.
const N_FEATURES: usize = N_CONTROLS + N_CONTROLS * (N_CONTROLS + 1) / 2 + EXP_SCALES.len();

fn features(c: &[f64; N_CONTROLS], thetas: &[f64; EXP_SCALES.len()]) -> [f64; N_FEATURES] {
    let mut f = [0.0; N_FEATURES];
    f[..N_CONTROLS].copy_from_slice(c);
    let mut k = N_CONTROLS;
    for i in 0..N_CONTROLS {
        for j in 0..=i {
            f[k] = c[i] * c[j];
            k += 1;
        }
    }
    for th in thetas {
        f[k] = (-th * c[1]).exp();
        k += 1;
    }
    f
}

/// `ln det` of a symmetric tridiagonal matrix (positive definite).
fn tridiagonal_log_det(diag: &[f64], off: &[f64]) -> f64 {
    let mut acc = 0.0;
    let mut prev = 1.0;
    for (i, &d) in diag.iter().enumerate() {
        let piv = if i == 0 { d } else { d - off[i - 1] * off[i - 1] / prev };
        acc += piv.ln();
        prev = piv;
    }
    acc
}

/// `E exp(-theta sum_k a_k B_k^2)` for the Brownian bridge `B` observed at the
/// increasing times `ts` in `(0, 1)`. The bridge precision is tridiagonal, so
/// the Gaussian integral `det(I + 2 theta Sigma A)^{-1/2}` costs `O(len)`.
fn bridge_exp_form_mean(ts: &[f64], a: &[f64], theta: f64) -> f64 {
    let m = ts.len();
    let mut diag = vec![0.0; m];
    let mut off = vec![0.0; m.saturating_sub(1)];
    for i in 0..m {
        let left = if i == 0 { ts[0] } else { ts[i] - ts[i - 1] };
        let right = if i + 1 == m { 1.0 - ts[i] } else { ts[i + 1] - ts[i] };
        diag[i] = 1.0 / left + 1.0 / right;
        if i + 1 < m {
            off[i] = -1.0 / right;
        }
    }
    let base = tridiagonal_log_det(&diag, &off);
    for i in 0..m {
        diag[i] += 2.0 * theta * a[i];
    }
    (-0.5 * (tridiagonal_log_det(&diag, &off) - base)).exp()
}

/// Rates `theta` of the exponential features for this grid.
fn exp_thetas(mean_integral_form: f64) -> [f64; EXP_SCALES.len()] {
    EXP_SCALES.map(|c| c / mean_integral_form)
}

/// Exact expectations of the features. The grid values `v_k = t_k (W_k - t_k W_n)`
/// are centred Gaussian with `cov(v_k, v_l) = t_k t_l (min(t_k, t_l) - t_k t_l)`,
/// so for diagonal forms `E[Q_a Q_b] = E Q_a E Q_b + 2 sum_kl a_k b_l cov_kl^2`.
/// Also returns the mean of the integral form, which fixes the exponential rates.
pub(crate) fn feature_means(n: usize, eps: f64) -> ([f64; N_FEATURES], f64) {
    let k0 = first_index(n, eps);
    let mut w = Vec::new();
    control_point_weights(n, k0, &mut w);
    let ts: Vec<f64> = (k0..=n).map(|i| i as f64 / n as f64).collect();
    let mut lin = [0.0; N_CONTROLS];
    for (cw, &t) in w.iter().zip(&ts) {
        let var = t * t * t * (1.0 - t);
        for j in 0..N_CONTROLS {
            lin[j] += cw[j] * var;
        }
    }
    // cross[i][j] = sum_kl a_ik a_jl cov_kl^2
    let mut cross = [[0.0; N_CONTROLS]; N_CONTROLS];
    for (k, &tk) in ts.iter().enumerate() {
        let mut row = [0.0; N_CONTROLS];
        for (l, &tl) in ts.iter().enumerate() {
            let c = tk * tl * (tk.min(tl) - tk * tl);
            let c2 = c * c;
            for j in 0..N_CONTROLS {
                row[j] += w[l][j] * c2;
            }
        }
        for i in 0..N_CONTROLS {
            for j in 0..N_CONTROLS {
                cross[i][j] += w[k][i] * row[j];
            }
        }
    }
    let mut m = [0.0; N_FEATURES];
    m[..N_CONTROLS].copy_from_slice(&lin);
    let mut k = N_CONTROLS;
    for i in 0..N_CONTROLS {
        for j in 0..=i {
            m[k] = lin[i] * lin[j] + 2.0 * cross[i][j];
            k += 1;
        }
    }
    // integral form in bridge coordinates, dropping t = 1 where B vanishes
    let interior = ts.len() - 1;
    let a: Vec<f64> = (0..interior).map(|i| w[i][1] * ts[i] * ts[i]).collect();
    for th in exp_thetas(lin[1]) {
        m[k] = bridge_exp_form_mean(&ts[..interior], &a, th);
        k += 1;
    }
    (m, lin[1])
}

/// First grid index with `k / n_steps >= eps`.
fn first_index(n_steps: usize, eps: f64) -> usize {
    ((n_steps as f64 * eps) - 1e-9).ceil().max(0.0) as usize
}

/// Inverse of the law of the maximum of a Brownian bridge from `a` to `b`
/// with total variance `s`, at probability `v`.
fn single_bridge_max(a: f64, b: f64, s: f64, v: f64) -> f64 {
    0.5 * (a + b + ((a - b) * (a - b) - 2.0 * s * (-v).ln_1p()).sqrt())
}

/// Continuous maximum of the Brownian-bridge interpolation of `values`
/// (grid spacing `h`, local variance rate `rate[k]` on interval `k`), drawn by
/// inverting the law of the largest interval maximum at `u`.
fn bridge_maximum(values: &[f64], rates: &[f64], h: f64, u: f64, cands: &mut Vec<(f64, f64, f64)>) -> f64 {
    let g = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // intervals with exp(-c) below 1e-13 are ignored
    const CUTOFF: f64 = 30.0;
    cands.clear();
    for k in 0..values.len() - 1 {
        let (a, b) = (values[k], values[k + 1]);
        let s = rates[k] * h;
        if 2.0 * (g - a) * (g - b) < CUTOFF * s {
            cands.push((a, b, s));
        }
    }
    if cands.len() == 1 {
        let (a, b, s) = cands[0];
        return single_bridge_max(a, b, s, u);
    }
    // The joint law is the product of the interval laws, so the root lies
    // between the largest single-interval quantiles at u and at u^(1/K).
    let v_hi = (u.ln() / cands.len() as f64).exp();
    let mut lo = g;
    let mut hi = g;
    for &(a, b, s) in cands.iter() {
        lo = lo.max(single_bridge_max(a, b, s, u));
        hi = hi.max(single_bridge_max(a, b, s, v_hi));
    }
    // drop intervals that cannot matter above the lower bracket
    cands.retain(|&(a, b, s)| 2.0 * (lo - a) * (lo - b) < CUTOFF * s);
    if cands.len() <= 1 {
        return lo;
    }
    let ln_u = u.ln();
    // log of the joint cdf minus ln u, and its derivative
    let eval = |y: f64| -> (f64, f64) {
        let (mut f, mut df) = (-ln_u, 0.0);
        for &(a, b, s) in cands.iter() {
            let c = 2.0 * (y - a) * (y - b) / s;
            if c <= 0.0 {
                return (f64::NEG_INFINITY, f64::INFINITY);
            }
            let e = (-c).exp();
            f += (-e).ln_1p();
            df += 2.0 * (2.0 * y - a - b) / s * e / (1.0 - e);
        }
        (f, df)
    };
    let mut y = 0.5 * (lo + hi);
    for _ in 0..100 {
        let (f, df) = eval(y);
        if f < 0.0 {
            lo = y;
        } else {
            hi = y;
        }
        let newton = y - f / df;
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - y).abs() <= 4.0 * f64::EPSILON * y.abs().max(f64::MIN_POSITIVE) || hi <= lo {
            return next;
        }
        y = next;
    }
    y
}

/// Functionals of the path with the given Gaussian increments (each `N(0, 1/n_steps)`)
/// and uniforms for the continuous maximum and minimum.
pub(crate) fn path_functionals(
    increments: &[f64],
    eps: f64,
    u_max: f64,
    u_min: f64,
    ws: &mut PathScratch,
) -> PathFunctionals {
    let n = increments.len();
    let h = 1.0 / n as f64;
    let w1: f64 = increments.iter().sum();
    let k0 = first_index(n, eps);
    if ws.control_key != (n, k0) || ws.control_weights.is_empty() {
        control_point_weights(n, k0, &mut ws.control_weights);
        ws.control_key = (n, k0);
    }
    let PathScratch { values: scratch, rates, cands, control_weights, .. } = ws;
    scratch.clear();
    rates.clear();
    let mut w = 0.0;
    for (k, inc) in increments.iter().enumerate() {
        w += inc;
        let idx = k + 1;
        if idx >= k0 {
            let t = idx as f64 * h;
            scratch.push(t * (w - t * w1));
        }
    }
    if k0 == 0 {
        scratch.insert(0, 0.0);
    }
    let first_t = k0 as f64 * h;
    // the path ends at t = 1 where the bridge vanishes
    let last = scratch.len() - 1;
    scratch[last] = 0.0;
    let mut integral = 0.0;
    for k in 0..last {
        integral += 0.5 * (scratch[k] * scratch[k] + scratch[k + 1] * scratch[k + 1]);
        let tm = first_t + (k as f64 + 0.5) * h;
        rates.push(tm * tm);
    }
    let integral = (integral * h).sqrt();
    let mut controls = [0.0; N_CONTROLS];
    for (v, cw) in scratch.iter().zip(control_weights.iter()) {
        let v2 = v * v;
        for j in 0..N_CONTROLS {
            controls[j] += cw[j] * v2;
        }
    }
    let vmax = bridge_maximum(scratch, rates, h, u_max, cands);
    scratch.iter_mut().for_each(|v| *v = -*v);
    let vmin = -bridge_maximum(scratch, rates, h, u_min, cands);
    PathFunctionals { w1, d: [integral, vmax.max(-vmin), vmax - vmin], controls }
}

fn unit_open(rng: &mut ChaCha8Rng) -> f64 {
    // (0, 1), never 0 so that ln(u) is finite
    ((rng.random::<u64>() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Simulates `n_paths` paths and returns their functionals plus per-kind resample counts.
pub(crate) fn simulate_functionals(
    eps: f64,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> (Vec<PathFunctionals>, [usize; 3]) {
    let blocks = n_paths.div_ceil(BLOCK_PATHS);
    let sd = (1.0 / n_steps as f64).sqrt();
    let per_block: Vec<(Vec<PathFunctionals>, [usize; 3])> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let count = BLOCK_PATHS.min(n_paths - b * BLOCK_PATHS);
            let mut incs = vec![0.0; n_steps];
            let mut ws = PathScratch::default();
            let mut out = Vec::with_capacity(count);
            let mut redraws = [0usize; 3];
            while out.len() < count {
                for v in incs.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *v = z * sd;
                }
                let (u1, u2) = (unit_open(&mut rng), unit_open(&mut rng));
                let f = path_functionals(&incs, eps, u1, u2, &mut ws);
                let mut degenerate = false;
                for (k, d) in f.d.iter().enumerate() {
                    if !(*d > 0.0) {
                        redraws[k] += 1;
                        degenerate = true;
                    }
                }
                if !degenerate {
                    out.push(f);
                }
            }
            (out, redraws)
        })
        .collect();
    let mut redraws = [0usize; 3];
    let mut all = Vec::with_capacity(n_paths);
    for (paths, r) in per_block {
        all.extend(paths);
        for k in 0..3 {
            redraws[k] += r[k];
        }
    }
    (all, redraws)
}

/// Regression-estimator weights: `w_i = (1 - (f_i - fbar)' S^{-1} (fbar - mu)) / n`
/// for features `f_i` with known means `mu`, so that `sum_i w_i f_i = mu` and
/// `sum_i w_i = 1`.
fn control_variate_weights(paths: &[PathFunctionals], n_steps: usize, eps: f64) -> Vec<f64> {
    let (mu, mean_integral) = feature_means(n_steps, eps);
    let thetas = exp_thetas(mean_integral);
    let n = paths.len();
    let nf = n as f64;
    let feats: Vec<[f64; N_FEATURES]> = paths.iter().map(|p| features(&p.controls, &thetas)).collect();
    let mut mean = [0.0; N_FEATURES];
    for f in &feats {
        for j in 0..N_FEATURES {
            mean[j] += f[j] / nf;
        }
    }
    let mut cov = vec![[0.0; N_FEATURES]; N_FEATURES];
    for f in &feats {
        let mut d = [0.0; N_FEATURES];
        for j in 0..N_FEATURES {
            d[j] = f[j] - mean[j];
        }
        for i in 0..N_FEATURES {
            for j in 0..=i {
                cov[i][j] += d[i] * d[j] / nf;
            }
        }
    }
    // work in correlation units so the tolerance is scale free
    let sd: Vec<f64> = (0..N_FEATURES).map(|i| cov[i][i].sqrt()).collect();
    if sd.iter().any(|v| !(*v > 0.0)) {
        return vec![1.0 / nf; n];
    }
    for i in 0..N_FEATURES {
        for j in 0..=i {
            cov[i][j] /= sd[i] * sd[j];
        }
    }
    let gap: Vec<f64> = (0..N_FEATURES).map(|j| (mean[j] - mu[j]) / sd[j]).collect();
    let Some(beta) = spd_solve(cov, gap) else {
        return vec![1.0 / nf; n];
    };
    feats
        .iter()
        .map(|f| {
            let adj: f64 = (0..N_FEATURES).map(|j| (f[j] - mean[j]) / sd[j] * beta[j]).sum();
            (1.0 - adj) / nf
        })
        .collect()
}

/// Cholesky solve of a small SPD system given by its lower triangle; `None`
/// when the matrix is numerically singular.
fn spd_solve(mut a: Vec<[f64; N_FEATURES]>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let m = b.len();
    for j in 0..m {
        let mut d = a[j][j];
        for k in 0..j {
            d -= a[j][k] * a[j][k];
        }
        if !(d > 1e-12) {
            return None;
        }
        let d = d.sqrt();
        a[j][j] = d;
        for i in j + 1..m {
            let mut v = a[i][j];
            for k in 0..j {
                v -= a[i][k] * a[j][k];
            }
            a[i][j] = v / d;
        }
    }
    for i in 0..m {
        for k in 0..i {
            b[i] -= a[i][k] * b[k];
        }
        b[i] /= a[i][i];
    }
    for i in (0..m).rev() {
        for k in i + 1..m {
            b[i] -= a[k][i] * b[k];
        }
        b[i] /= a[i][i];
    }
    Some(b)
}

fn table_from_functionals(
    config: PivotalConfig,
    paths: &[PathFunctionals],
    weights: &[f64],
    resampled: usize,
) -> PivotalTable {
    let k = config.kind.index();
    let mut ratios: Vec<f64> = paths.iter().map(|p| p.w1 / p.d[k]).collect();
    ratios.sort_by(f64::total_cmp);
    let mut pairs: Vec<(f64, f64)> = paths.iter().map(|p| p.d[k]).zip(weights.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let (denominators, weights) = pairs.into_iter().unzip();
    PivotalTable { config, sorted_samples: ratios, denominators, weights, resampled }
}

/// Simulates the pivotal law for one configuration.
pub fn simulate_ratio_samples(config: PivotalConfig) -> Result<PivotalTable> {
    config.validate()?;
    let (paths, redraws) = simulate_functionals(config.epsilon, config.n_paths, config.n_steps, config.seed);
    let weights = control_variate_weights(&paths, config.n_steps, config.epsilon);
    Ok(table_from_functionals(config, &paths, &weights, redraws[config.kind.index()]))
}

/// Tables of all three kinds from one path ensemble; identical to three
/// separate [`simulate_ratio_samples`] calls with the same seed.
pub fn simulate_all_kinds(epsilon: f64, n_paths: usize, n_steps: usize, seed: u64) -> Result<[PivotalTable; 3]> {
    let base = PivotalConfig { epsilon, kind: NormalizerKind::Integral, n_paths, n_steps, seed };
    base.validate()?;
    let (paths, redraws) = simulate_functionals(epsilon, n_paths, n_steps, seed);
    let weights = control_variate_weights(&paths, n_steps, epsilon);
    Ok(NormalizerKind::ALL
        .map(|kind| table_from_functionals(PivotalConfig { kind, ..base }, &paths, &weights, redraws[kind.index()])))
}
