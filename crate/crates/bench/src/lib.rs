// SPDX-License-Identifier: MIT OR Apache-2.0

//! Inputs shared by the benchmarks under `benches/`.

use relfts_core::{generate_sample, DgpConfig, FunctionalSample, Generated, Scenario, Scheme, ScoreLaw};

/// One simulated sample of `n` curves from the change-point design.
pub fn jump_sample(n: usize, scheme: Scheme) -> FunctionalSample {
    let cfg = DgpConfig::new(n, scheme, ScoreLaw::Normal, Scenario::JumpConstant { a: 1.0, frac: 0.4 }, 1);
    match generate_sample(&cfg).expect("valid design") {
        Generated::One(s) => s,
        Generated::Two(s, _) => s,
    }
}
