// SPDX-License-Identifier: MIT OR Apache-2.0

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain the operation is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("ill-conditioned design: reciprocal condition estimate {rcond:.3e} below {threshold:.0e}")]
    IllConditioned { rcond: f64, threshold: f64 },

    #[error("spline spaces differ: {0}")]
    SpecMismatch(String),

    /// The trimmed prefix does not carry enough observations to fit the spline space.
    #[error("insufficient prefix: {observations} observations in {curves} curves, need at least {needed}")]
    InsufficientPrefix { curves: usize, observations: usize, needed: usize },

    #[error("insufficient segment {segment}: {reason}")]
    InsufficientSegment { segment: usize, reason: String },

    #[error("corrupt pivotal table: {0}")]
    CorruptTable(String),

    /// The cached table exists but was built for a different configuration.
    #[error("pivotal table cache miss: {0}")]
    CacheMiss(String),

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
