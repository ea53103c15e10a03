// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use relfts_core::hypothesis::{KnotChoice, DEFAULT_EPSILON, DEFAULT_ORDER};
use relfts_core::pivotal::{NormalizerKind, DEFAULT_PATHS, DEFAULT_SEED, DEFAULT_STEPS};

/// Environment variable naming the pivotal table cache directory.
pub const CACHE_ENV: &str = "RELFTS_CACHE_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "relfts",
    version,
    about = "Self-normalized tests of relevant hypotheses for functional time series",
    after_help = "Exit status: 0 when the null is not rejected (or a non-test command succeeds), \
                  1 when it is rejected, 2 on any error."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// H0: ||m - m0||^2 <= delta.
    TestOneSample(TestCmd<OneSampleData>),
    /// H0: ||m1 - m2||^2 <= delta.
    TestTwoSample(TestCmd<TwoSampleData>),
    /// H0: the mean jump at the change point has squared norm <= delta.
    TestChangepoint(TestCmd<ChangePointData>),
    /// H0: the squared norms of all mean jumps sum to <= delta.
    TestMultiChangepoint(TestCmd<MultiChangePointData>),
    /// Decisions over a grid of deltas and quantile levels, as a CSV table.
    DeltaSweep(SweepCmd),
    /// Simulate a pivotal table and print its quantiles.
    Quantiles(QuantilesCmd),
    /// Run a rejection study described by a TOML file.
    Simulate(SimulateCmd),
    /// Write one simulated data set as a curve CSV.
    Generate(GenerateCmd),
    /// Convert a wide table (one row per curve) to the long curve format.
    Reshape(ReshapeCmd),
}

#[derive(Debug, Args)]
pub struct TestCmd<D: Args> {
    #[command(flatten)]
    pub data: D,
    /// Relevance threshold, in squared L2 units.
    #[arg(long)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[command(flatten)]
    pub common: Common,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Options shared by every test.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Trimming fraction: prefixes shorter than epsilon are not used.
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    #[arg(long, value_enum, default_value_t = Normalizer::Integral)]
    pub normalizer: Normalizer,
    /// Interior knot count, or `auto` for BIC.
    #[arg(long, default_value = "auto", value_parser = parse_knots)]
    pub knots: KnotChoice,
    /// Spline order (4 is cubic).
    #[arg(long, default_value_t = DEFAULT_ORDER)]
    pub order: usize,
    /// Min-max rescale design points onto [0, 1].
    #[arg(long)]
    pub rescale: bool,
    #[command(flatten)]
    pub pivotal: PivotalArgs,
}

#[derive(Debug, Clone, Args)]
pub struct PivotalArgs {
    /// Pivotal table cache directory.
    #[arg(long, env = CACHE_ENV)]
    pub table_cache: Option<PathBuf>,
    /// Simulate the pivotal table even when a cached copy exists.
    #[arg(long)]
    pub no_cache: bool,
    /// Seed of the pivotal simulation.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Brownian paths in the pivotal simulation.
    #[arg(long, default_value_t = DEFAULT_PATHS)]
    pub paths: usize,
    /// Grid steps per path.
    #[arg(long, default_value_t = DEFAULT_STEPS)]
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Normalizer {
    Integral,
    Sup,
    Range,
}

impl From<Normalizer> for NormalizerKind {
    fn from(n: Normalizer) -> Self {
        match n {
            Normalizer::Integral => NormalizerKind::Integral,
            Normalizer::Sup => NormalizerKind::Sup,
            Normalizer::Range => NormalizerKind::Range,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct OneSampleData {
    /// Curve CSV: curve_id,x,y[,sample_id][,time].
    #[arg(long)]
    pub input: PathBuf,
    /// Which sample of a multi-sample file to test.
    #[arg(long)]
    pub sample: Option<String>,
    /// Baseline mean: `zero`, or a CSV with columns x,y (linearly interpolated).
    #[arg(long, default_value = "zero")]
    pub m0: String,
}

#[derive(Debug, Clone, Args)]
pub struct TwoSampleData {
    /// First sample, or a file holding both samples under two sample_id values.
    #[arg(long)]
    pub input: PathBuf,
    /// Second sample.
    #[arg(long)]
    pub input2: Option<PathBuf>,
    /// The two sample ids to compare, in order, when one file holds both.
    #[arg(long, value_delimiter = ',')]
    pub samples: Option<Vec<String>>,
}

#[derive(Debug, Clone, Args)]
pub struct ChangePointData {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub sample: Option<String>,
    /// Curves before the change, or `auto` for the CUSUM estimate.
    #[arg(long, default_value = "auto", value_parser = parse_khat)]
    pub khat: Khat,
    /// Write the CUSUM profile (k, objective) to this CSV.
    #[arg(long)]
    pub profile: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct MultiChangePointData {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub sample: Option<String>,
    /// Change locations as fractions of the sample, strictly increasing in (0, 1).
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        required_unless_present = "segments",
        conflicts_with = "segments"
    )]
    pub thetas: Option<Vec<f64>>,
    /// Number of changes to locate by binary segmentation.
    #[arg(long)]
    pub segments: Option<usize>,
    /// Minimum segment length for binary segmentation (default ceil(2 (J + p) / epsilon)).
    #[arg(long)]
    pub min_segment: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepCmd {
    /// Thresholds, one row each.
    #[arg(long, value_delimiter = ',', required = true)]
    pub deltas: Vec<f64>,
    /// Quantile levels 1 - alpha, one column each.
    #[arg(long, alias = "alphas", value_delimiter = ',', default_value = "0.90,0.95,0.99")]
    pub levels: Vec<String>,
    /// Write the table here instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(subcommand)]
    pub family: SweepFamily,
}

#[derive(Debug, Subcommand)]
pub enum SweepFamily {
    OneSample {
        #[command(flatten)]
        data: OneSampleData,
        #[command(flatten)]
        common: Common,
    },
    TwoSample {
        #[command(flatten)]
        data: TwoSampleData,
        #[command(flatten)]
        common: Common,
    },
    Changepoint {
        #[command(flatten)]
        data: ChangePointData,
        #[command(flatten)]
        common: Common,
    },
    MultiChangepoint {
        #[command(flatten)]
        data: MultiChangePointData,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
pub struct QuantilesCmd {
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    #[arg(long, value_enum, default_value_t = Normalizer::Integral)]
    pub kind: Normalizer,
    /// Levels to report.
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.9,0.95,0.99")]
    pub levels: Vec<f64>,
    /// Write the table to this file (otherwise it goes to the cache).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub pivotal: PivotalArgs,
}

#[derive(Debug, Args)]
pub struct SimulateCmd {
    /// TOML study description.
    #[arg(long)]
    pub study_config: PathBuf,
    /// Override the master seed of the study.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the study CSV here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, env = CACHE_ENV)]
    pub table_cache: Option<PathBuf>,
    #[arg(long)]
    pub no_cache: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioKind {
    OneSampleMean,
    TwoSampleMeans,
    JumpConstant,
    JumpQuadratic,
}

#[derive(Debug, Args)]
pub struct GenerateCmd {
    #[arg(long)]
    pub n: usize,
    #[arg(long, value_enum)]
    pub scenario: ScenarioKind,
    /// Effect size: squared L2 norm of the mean, mean difference or jump.
    #[arg(long)]
    pub a: f64,
    /// Change location as a fraction of the sample.
    #[arg(long, default_value_t = 0.4)]
    pub frac: f64,
    #[arg(long, default_value = "S2")]
    pub scheme: String,
    #[arg(long, default_value = "normal")]
    pub law: String,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Mean functions only: no scores, no noise.
    #[arg(long)]
    pub diagnostics: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReshapeCmd {
    /// Wide CSV: curve id, then one column per design point.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn parse_knots(s: &str) -> Result<KnotChoice, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(KnotChoice::Auto);
    }
    s.parse::<usize>().map(KnotChoice::Fixed).map_err(|_| format!("expected `auto` or a knot count, got {s:?}"))
}

/// Change-point location flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Khat {
    Auto,
    At(usize),
}

impl Khat {
    pub fn get(self) -> Option<usize> {
        match self {
            Khat::Auto => None,
            Khat::At(k) => Some(k),
        }
    }
}

pub fn parse_khat(s: &str) -> Result<Khat, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(Khat::Auto);
    }
    s.parse::<usize>().map(Khat::At).map_err(|_| format!("expected `auto` or a curve count, got {s:?}"))
}
