// SPDX-License-Identifier: MIT OR Apache-2.0

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use relfts_core::changepoint::{binary_segmentation, default_min_segment, estimate_single, Segmentation};
use relfts_core::hypothesis::{
    changepoint_evidence, locations_from_fractions, multi_changepoint_evidence, one_sample_evidence,
    two_sample_evidence, Evidence, KnotChoice, SplineChoice, TestReport,
};
use relfts_core::io::{read_baseline, read_curves_path, reshape_wide, write_curves_path, LabeledSample, ReadOptions};
use relfts_core::pivotal::{
    save_table, simulate_ratio_samples, NormalizerKind, PivotalCache, PivotalConfig, PivotalTable,
};
use relfts_core::simulate::{generate_sample, rejection_study, DgpConfig, Generated, Scenario, StudyConfig};
use serde::Serialize;

use crate::args::*;

/// Outcome of a command, mapped to the exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    NotRejected,
    Rejected,
}

impl Outcome {
    pub fn code(self) -> u8 {
        match self {
            Outcome::Done | Outcome::NotRejected => 0,
            Outcome::Rejected => 1,
        }
    }
}

pub fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::TestOneSample(c) => test(c, one_sample),
        Command::TestTwoSample(c) => test(c, two_sample),
        Command::TestChangepoint(c) => test(c, changepoint),
        Command::TestMultiChangepoint(c) => test(c, multi_changepoint),
        Command::DeltaSweep(c) => sweep(c),
        Command::Quantiles(c) => quantiles(c),
        Command::Simulate(c) => simulate(c),
        Command::Generate(c) => generate(c),
        Command::Reshape(c) => reshape(c),
    }
}

/// Cache directory: flag or environment, then the user cache directory.
pub fn cache_dir(flag: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(x) = std::env::var_os("XDG_CACHE_HOME").filter(|v| !v.is_empty()) {
        return PathBuf::from(x).join("relfts");
    }
    if let Some(h) = std::env::var_os("HOME").filter(|v| !v.is_empty()) {
        return PathBuf::from(h).join(".cache").join("relfts");
    }
    PathBuf::from(".relfts-cache")
}

fn cache_for(dir: Option<&Path>, no_cache: bool) -> PivotalCache {
    let cache = PivotalCache::new(cache_dir(dir));
    if no_cache {
        cache.regenerating()
    } else {
        cache
    }
}

fn pivotal_config(p: &PivotalArgs, epsilon: f64, kind: NormalizerKind) -> PivotalConfig {
    PivotalConfig { epsilon, kind, n_paths: p.paths, n_steps: p.steps, seed: p.seed }
}

fn load_table(p: &PivotalArgs, epsilon: f64, kind: NormalizerKind) -> Result<(PivotalTable, PathBuf)> {
    let cache = cache_for(p.table_cache.as_deref(), p.no_cache);
    let config = pivotal_config(p, epsilon, kind);
    let path = cache.path_for(&config);
    let table = cache.get_or_build(&config).with_context(|| format!("pivotal table in {}", cache.dir().display()))?;
    Ok((table, path))
}

/// Pivotal settings echoed in reports.
#[derive(Debug, Serialize)]
struct PivotalEcho {
    paths: usize,
    steps: usize,
    seed: u64,
    table: PathBuf,
}

/// Resolved configuration echoed in reports.
#[derive(Debug, Default, Serialize)]
struct ConfigEcho {
    inputs: Vec<PathBuf>,
    samples: Vec<String>,
    knots: Option<KnotChoice>,
    order: usize,
    rescale: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    m0: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    khat: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    thetas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    segmentation: Option<Segmentation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pivotal: Option<PivotalEcho>,
}

#[derive(Debug, Serialize)]
struct ReportDoc<'a> {
    #[serde(flatten)]
    report: &'a TestReport,
    config: &'a ConfigEcho,
}

fn spline_of(common: &Common) -> SplineChoice {
    SplineChoice { order: common.order, knots: common.knots }
}

fn read_opts(common: &Common) -> ReadOptions {
    ReadOptions { rescale: common.rescale }
}

fn read_one(path: &Path, sample: Option<&str>, opts: ReadOptions) -> Result<LabeledSample> {
    let table = read_curves_path(path, opts).with_context(|| format!("reading {}", path.display()))?;
    Ok(match sample {
        Some(id) => table.take(id)?,
        None => table.single()?,
    })
}

fn base_echo(common: &Common, inputs: Vec<PathBuf>, samples: Vec<String>) -> ConfigEcho {
    ConfigEcho {
        inputs,
        samples,
        knots: Some(common.knots),
        order: common.order,
        rescale: common.rescale,
        ..ConfigEcho::default()
    }
}

type EvidenceFn<D> = fn(&D, &Common) -> Result<(Evidence, ConfigEcho)>;

fn one_sample(d: &OneSampleData, common: &Common) -> Result<(Evidence, ConfigEcho)> {
    let s = read_one(&d.input, d.sample.as_deref(), read_opts(common))?;
    let mut echo = base_echo(common, vec![d.input.clone()], vec![s.id.clone()]);
    echo.m0 = Some(d.m0.clone());
    let ev = if d.m0.eq_ignore_ascii_case("zero") {
        one_sample_evidence(&s.sample, None, common.epsilon, spline_of(common))?
    } else {
        let file = std::fs::File::open(&d.m0).with_context(|| format!("opening baseline {}", d.m0))?;
        let base = read_baseline(file).with_context(|| format!("reading baseline {}", d.m0))?;
        let f = |x: f64| base.eval(x);
        one_sample_evidence(&s.sample, Some(&f), common.epsilon, spline_of(common))?
    };
    Ok((ev, echo))
}

fn two_sample(d: &TwoSampleData, common: &Common) -> Result<(Evidence, ConfigEcho)> {
    let opts = read_opts(common);
    if let Some(ids) = &d.samples {
        if ids.len() != 2 {
            bail!("--samples takes exactly two ids, got {}", ids.len());
        }
    }
    let (a, b, inputs) = match &d.input2 {
        Some(p2) => {
            let pick = |i: usize| d.samples.as_ref().map(|v| v[i].as_str());
            (read_one(&d.input, pick(0), opts)?, read_one(p2, pick(1), opts)?, vec![d.input.clone(), p2.clone()])
        }
        None => {
            let table = read_curves_path(&d.input, opts).with_context(|| format!("reading {}", d.input.display()))?;
            let (a, b) = match &d.samples {
                Some(ids) => (table.clone().take(&ids[0])?, table.take(&ids[1])?),
                None => {
                    if table.samples.len() != 2 {
                        bail!(
                            "{} holds {} samples {:?}; give --input2 or --samples",
                            d.input.display(),
                            table.samples.len(),
                            table.ids()
                        );
                    }
                    let mut it = table.samples.into_iter();
                    (it.next().expect("two"), it.next().expect("two"))
                }
            };
            (a, b, vec![d.input.clone()])
        }
    };
    let ev = two_sample_evidence(&a.sample, &b.sample, common.epsilon, spline_of(common))?;
    Ok((ev, base_echo(common, inputs, vec![a.id, b.id])))
}

fn changepoint(d: &ChangePointData, common: &Common) -> Result<(Evidence, ConfigEcho)> {
    let s = read_one(&d.input, d.sample.as_deref(), read_opts(common))?;
    let mut echo = base_echo(common, vec![d.input.clone()], vec![s.id.clone()]);
    echo.khat = Some(d.khat.get().map_or("auto".to_string(), |k| k.to_string()));
    let mut k = d.khat.get();
    if let Some(path) = &d.profile {
        let spec = spline_of(common).resolve(&s.sample)?;
        let est = estimate_single(&s.sample, spec, common.epsilon)?;
        let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(["k", "objective"])?;
        for (i, v) in est.profile.iter().enumerate() {
            w.write_record([(est.first_k + i).to_string(), format!("{v:?}")])?;
        }
        w.flush()?;
        k = k.or(Some(est.k_hat));
    }
    let ev = changepoint_evidence(&s.sample, k, common.epsilon, spline_of(common))?;
    Ok((ev, echo))
}

fn multi_changepoint(d: &MultiChangePointData, common: &Common) -> Result<(Evidence, ConfigEcho)> {
    let s = read_one(&d.input, d.sample.as_deref(), read_opts(common))?;
    let mut echo = base_echo(common, vec![d.input.clone()], vec![s.id.clone()]);
    let n = s.sample.n();
    let locations = match (&d.thetas, d.segments) {
        (Some(thetas), _) => {
            echo.thetas = Some(thetas.clone());
            locations_from_fractions(n, thetas)?
        }
        (None, Some(k)) => {
            let spec = spline_of(common).resolve(&s.sample)?;
            let min = d.min_segment.unwrap_or_else(|| default_min_segment(spec, common.epsilon));
            let seg = binary_segmentation(&s.sample, spec, k, min)?;
            if seg.locations.is_empty() {
                bail!("binary segmentation found no change point");
            }
            if seg.shortfall {
                eprintln!("warning: binary segmentation found {} of {k} change points", seg.locations.len());
            }
            let loc = seg.locations.clone();
            echo.segmentation = Some(seg);
            loc
        }
        (None, None) => bail!("give --thetas or --segments"),
    };
    let ev = multi_changepoint_evidence(&s.sample, &locations, common.epsilon, spline_of(common))?;
    Ok((ev, echo))
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn test<D: clap::Args>(cmd: TestCmd<D>, evidence: EvidenceFn<D>) -> Result<Outcome> {
    let common = &cmd.common;
    if !(cmd.delta > 0.0 && cmd.delta.is_finite()) {
        bail!("--delta must be positive, got {}", cmd.delta);
    }
    if !(cmd.alpha > 0.0 && cmd.alpha < 1.0) {
        bail!("--alpha must lie in (0, 1), got {}", cmd.alpha);
    }
    let kind = NormalizerKind::from(common.normalizer);
    let (ev, mut echo) = evidence(&cmd.data, common)?;
    let (table, path) = load_table(&common.pivotal, common.epsilon, kind)?;
    let report = ev.decide(cmd.delta, cmd.alpha, kind, &table)?;
    echo.pivotal = Some(PivotalEcho {
        paths: common.pivotal.paths,
        steps: common.pivotal.steps,
        seed: common.pivotal.seed,
        table: path,
    });
    let doc = ReportDoc { report: &report, config: &echo };
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    write_output(cmd.output.as_deref(), &text)?;
    Ok(if report.reject { Outcome::Rejected } else { Outcome::NotRejected })
}

fn parse_level(s: &str) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| anyhow!("quantile level {s:?} is not a number"))?;
    if !(v > 0.0 && v < 1.0) {
        bail!("quantile level {s} outside (0, 1)");
    }
    Ok(v)
}

fn sweep(cmd: SweepCmd) -> Result<Outcome> {
    let (ev, common) = match &cmd.family {
        SweepFamily::OneSample { data, common } => (one_sample(data, common)?.0, common),
        SweepFamily::TwoSample { data, common } => (two_sample(data, common)?.0, common),
        SweepFamily::Changepoint { data, common } => (changepoint(data, common)?.0, common),
        SweepFamily::MultiChangepoint { data, common } => (multi_changepoint(data, common)?.0, common),
    };
    if let Some(d) = cmd.deltas.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
        bail!("delta {d} must be positive");
    }
    let levels = cmd.levels.iter().map(|s| parse_level(s)).collect::<Result<Vec<_>>>()?;
    let kind = NormalizerKind::from(common.normalizer);
    let (table, _) = load_table(&common.pivotal, common.epsilon, kind)?;
    let quantiles = levels.iter().map(|l| table.quantile(*l)).collect::<relfts_core::Result<Vec<_>>>()?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["delta".to_string()];
    header.extend(cmd.levels.iter().map(|s| s.trim().to_string()));
    w.write_record(&header)?;
    for &delta in &cmd.deltas {
        let mut row = vec![format!("{delta}")];
        for (l, q) in levels.iter().zip(&quantiles) {
            let r = ev.decide_with_quantile(delta, 1.0 - l, kind, *q);
            row.push(if r.reject { "True" } else { "False" }.to_string());
        }
        w.write_record(&row)?;
    }
    let text = String::from_utf8(w.into_inner().map_err(|e| anyhow!("{e}"))?)?;
    write_output(cmd.output.as_deref(), &text)?;
    Ok(Outcome::Done)
}

#[derive(Debug, Serialize)]
struct LevelQuantile {
    level: f64,
    quantile: f64,
    empirical: f64,
}

#[derive(Debug, Serialize)]
struct QuantilesDoc {
    config: PivotalConfig,
    file: PathBuf,
    resampled: usize,
    quantiles: Vec<LevelQuantile>,
}

fn quantiles(cmd: QuantilesCmd) -> Result<Outcome> {
    let kind = NormalizerKind::from(cmd.kind);
    if let Some(l) = cmd.levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
        bail!("level {l} outside (0, 1)");
    }
    let (table, file) = match &cmd.out {
        Some(out) => {
            let config = pivotal_config(&cmd.pivotal, cmd.epsilon, kind);
            let table = simulate_ratio_samples(config)?;
            save_table(&table, out).with_context(|| format!("writing {}", out.display()))?;
            (table, out.clone())
        }
        None => load_table(&cmd.pivotal, cmd.epsilon, kind)?,
    };
    let quantiles = cmd
        .levels
        .iter()
        .map(|&level| {
            Ok(LevelQuantile { level, quantile: table.quantile(level)?, empirical: table.empirical_quantile(level)? })
        })
        .collect::<relfts_core::Result<Vec<_>>>()?;
    let doc = QuantilesDoc { config: *table.config(), file, resampled: table.resampled(), quantiles };
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    write_output(None, &text)?;
    Ok(Outcome::Done)
}

fn simulate(cmd: SimulateCmd) -> Result<Outcome> {
    let text = std::fs::read_to_string(&cmd.study_config)
        .with_context(|| format!("reading {}", cmd.study_config.display()))?;
    let mut config: StudyConfig =
        toml::from_str(&text).with_context(|| format!("parsing {}", cmd.study_config.display()))?;
    if let Some(seed) = cmd.seed {
        config.master_seed = seed;
    }
    config.validate()?;
    let cache = cache_for(cmd.table_cache.as_deref(), cmd.no_cache);
    let tables =
        config.pivotal_configs().iter().map(|c| cache.get_or_build(c)).collect::<relfts_core::Result<Vec<_>>>()?;
    let result = rejection_study(&config, &tables)?;
    write_output(cmd.out.as_deref(), &result.to_csv_string()?)?;
    Ok(Outcome::Done)
}

fn generate(cmd: GenerateCmd) -> Result<Outcome> {
    let scenario = match cmd.scenario {
        ScenarioKind::OneSampleMean => Scenario::OneSampleMean { a: cmd.a },
        ScenarioKind::TwoSampleMeans => Scenario::TwoSampleMeans { a: cmd.a },
        ScenarioKind::JumpConstant => Scenario::JumpConstant { a: cmd.a, frac: cmd.frac },
        ScenarioKind::JumpQuadratic => Scenario::JumpQuadratic { a: cmd.a, frac: cmd.frac },
    };
    let mut config = DgpConfig::new(cmd.n, cmd.scheme.parse()?, cmd.law.parse()?, scenario, cmd.seed);
    config.sigma = cmd.sigma;
    config.diagnostics = cmd.diagnostics;
    match generate_sample(&config)? {
        Generated::One(s) => write_curves_path(&cmd.out, &[("1", &s)])?,
        Generated::Two(a, b) => write_curves_path(&cmd.out, &[("1", &a), ("2", &b)])?,
    }
    Ok(Outcome::Done)
}

fn reshape(cmd: ReshapeCmd) -> Result<Outcome> {
    let input = std::fs::File::open(&cmd.input).with_context(|| format!("opening {}", cmd.input.display()))?;
    let out = std::fs::File::create(&cmd.out).with_context(|| format!("creating {}", cmd.out.display()))?;
    reshape_wide(std::io::BufReader::new(input), std::io::BufWriter::new(out))?;
    Ok(Outcome::Done)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn explicit_cache_dir_wins() {
        assert_eq!(cache_dir(Some(Path::new("/x/y"))), PathBuf::from("/x/y"));
        assert!(cache_dir(None).ends_with("relfts") || cache_dir(None).ends_with(".relfts-cache"));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(Outcome::Done.code(), 0);
        assert_eq!(Outcome::NotRejected.code(), 0);
        assert_eq!(Outcome::Rejected.code(), 1);
    }

    #[test]
    fn levels_are_checked() {
        assert_eq!(parse_level(" 0.95").unwrap(), 0.95);
        assert!(parse_level("1.5").is_err());
        assert!(parse_level("x").is_err());
    }
}
