// SPDX-License-Identifier: MIT OR Apache-2.0

//! Self-normalized tests of relevant hypotheses for functional time series
//! observed discretely with noise.
//!
//! Curves are smoothed by pooled B-spline least squares; partial-sample fits
//! over growing prefixes feed a self-normalizer, and the decision compares
//! the statistic to `delta + Q * normalizer` with `Q` a quantile of a
//! Brownian pivotal law tabulated by [`pivotal`].

// NaN-rejecting guards are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod changepoint;
pub mod error;
pub mod hypothesis;
pub mod io;
pub mod pivotal;
pub mod sample;
pub mod simulate;
pub mod spline;

pub use changepoint::{binary_segmentation, estimate_single, ChangePointEstimate, Segmentation};
pub use error::{Error, Result};
pub use hypothesis::{
    changepoint_test, multi_changepoint_test, one_sample_test, two_sample_test, Evidence, KnotChoice, SplineChoice,
    TestFamily, TestReport, TestSpec,
};
pub use io::{read_curves, write_curves, CurveTable, LabeledSample, ReadOptions};
pub use pivotal::{NormalizerKind, PivotalCache, PivotalConfig, PivotalTable};
pub use sample::{floor_fraction, Curve, FunctionalSample};
pub use simulate::{
    generate_sample, rejection_study, DgpConfig, Generated, Scenario, Scheme, ScoreLaw, StudyConfig, StudyResult,
};
pub use spline::{SplineFit, SplineSpec};
