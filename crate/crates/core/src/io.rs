// SPDX-License-Identifier: MIT OR Apache-2.0

//! CSV exchange of discretely observed curves.
//!
//! Long format, one observation per row, header required:
//!
//! ```text
//! curve_id,x,y[,sample_id][,time]
//! ```
//!
//! Columns are matched by name, in any order; extra columns are ignored.
//! Rows of one curve need not be adjacent. Curves are ordered by first
//! appearance, or by `time` when that column is present (numerically when
//! every value parses as a number, lexically otherwise). Samples are ordered
//! by first appearance of their `sample_id`.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::sample::{Curve, FunctionalSample};

/// Ingestion options.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ReadOptions {
    /// Min-max rescale all design points of the file onto `[0, 1]`.
    pub rescale: bool,
}

/// One sample of a curve file.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    /// Value of the `sample_id` column, empty when the column is absent.
    pub id: String,
    pub curve_ids: Vec<String>,
    pub sample: FunctionalSample,
}

/// Every sample of a curve file, in order of first appearance.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveTable {
    pub samples: Vec<LabeledSample>,
}

impl CurveTable {
    /// The only sample, or an error naming the sample ids found.
    pub fn single(self) -> Result<LabeledSample> {
        if self.samples.len() != 1 {
            return Err(Error::domain(format!("expected one sample, found {}: {:?}", self.samples.len(), self.ids())));
        }
        Ok(self.samples.into_iter().next().expect("one sample"))
    }

    pub fn ids(&self) -> Vec<&str> {
        self.samples.iter().map(|s| s.id.as_str()).collect()
    }

    /// The sample whose id is `id`.
    pub fn take(self, id: &str) -> Result<LabeledSample> {
        let ids: Vec<String> = self.ids().iter().map(|s| s.to_string()).collect();
        self.samples
            .into_iter()
            .find(|s| s.id == id)
            .ok_or_else(|| Error::domain(format!("no sample with id {id:?}; found {ids:?}")))
    }
}

fn parse_error(line: u64, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.kind() {
        csv::ErrorKind::Io(_) => Error::Csv(e),
        _ => parse_error(line, e.to_string()),
    }
}

struct Columns {
    curve: usize,
    x: usize,
    y: usize,
    sample: Option<usize>,
    time: Option<usize>,
}

impl Columns {
    fn from_header(header: &csv::StringRecord) -> Result<Columns> {
        let find =
            |name: &str| header.iter().position(|h| h.trim().trim_start_matches('\u{feff}').eq_ignore_ascii_case(name));
        let need = |name: &str| find(name).ok_or_else(|| parse_error(1, format!("header lacks a {name:?} column")));
        Ok(Columns {
            curve: need("curve_id")?,
            x: need("x")?,
            y: need("y")?,
            sample: find("sample_id"),
            time: find("time"),
        })
    }
}

struct PendingCurve {
    id: String,
    time: Option<String>,
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Line of each design point, for range errors.
    lines: Vec<u64>,
}

fn parse_number(field: &str, what: &str, line: u64) -> Result<f64> {
    let v: f64 =
        field.trim().parse().map_err(|_| parse_error(line, format!("{what} value {field:?} is not a number")))?;
    if !v.is_finite() {
        return Err(parse_error(line, format!("{what} value {field:?} is not finite")));
    }
    Ok(v)
}

/// Reads a long-format curve file.
pub fn read_curves<R: Read>(input: R, options: ReadOptions) -> Result<CurveTable> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let cols = Columns::from_header(reader.headers().map_err(csv_error)?)?;
    let mut sample_order: Vec<String> = Vec::new();
    let mut curves: Vec<Vec<PendingCurve>> = Vec::new();
    let mut index: HashMap<(usize, String), usize> = HashMap::new();
    let mut record = csv::StringRecord::new();
    while reader.read_record(&mut record).map_err(csv_error)? {
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).unwrap_or("");
        let sample_id = cols.sample.map_or("", field).trim().to_string();
        let curve_id = field(cols.curve).trim().to_string();
        if curve_id.is_empty() {
            return Err(parse_error(line, "empty curve_id"));
        }
        let x = parse_number(field(cols.x), "x", line)?;
        let y = parse_number(field(cols.y), "y", line)?;
        let time = cols.time.map(|i| field(i).trim().to_string());
        let s = match sample_order.iter().position(|id| *id == sample_id) {
            Some(s) => s,
            None => {
                sample_order.push(sample_id);
                curves.push(Vec::new());
                sample_order.len() - 1
            }
        };
        let c = *index.entry((s, curve_id.clone())).or_insert_with(|| {
            curves[s].push(PendingCurve {
                id: curve_id,
                time: time.clone(),
                xs: Vec::new(),
                ys: Vec::new(),
                lines: Vec::new(),
            });
            curves[s].len() - 1
        });
        let pending = &mut curves[s][c];
        if pending.time != time {
            return Err(parse_error(line, format!("curve {:?} has more than one time value", pending.id)));
        }
        pending.xs.push(x);
        pending.ys.push(y);
        pending.lines.push(line);
    }
    if curves.is_empty() {
        return Err(parse_error(1, "no data rows"));
    }

    if options.rescale {
        let all = || curves.iter().flatten().flat_map(|c| c.xs.iter().copied());
        let lo = all().fold(f64::INFINITY, f64::min);
        let hi = all().fold(f64::NEG_INFINITY, f64::max);
        if !(hi > lo) {
            return Err(Error::domain("cannot rescale: every design point is equal"));
        }
        for c in curves.iter_mut().flatten() {
            c.xs.iter_mut().for_each(|x| *x = ((*x - lo) / (hi - lo)).clamp(0.0, 1.0));
        }
    } else if let Some((c, i)) = curves
        .iter()
        .flatten()
        .flat_map(|c| c.xs.iter().enumerate().map(move |(i, _)| (c, i)))
        .find(|(c, i)| !(0.0..=1.0).contains(&c.xs[*i]))
    {
        return Err(parse_error(
            c.lines[i],
            format!("x = {} outside [0, 1]; rescale to map the design onto [0, 1]", c.xs[i]),
        ));
    }

    let mut samples = Vec::with_capacity(curves.len());
    for (id, mut pending) in sample_order.into_iter().zip(curves) {
        if cols.time.is_some() {
            sort_by_time(&mut pending);
        }
        let curve_ids = pending.iter().map(|c| c.id.clone()).collect();
        let list = pending.into_iter().map(|c| Curve::new(c.xs, c.ys)).collect::<Result<Vec<_>>>()?;
        samples.push(LabeledSample { id, curve_ids, sample: FunctionalSample::new(list)? });
    }
    Ok(CurveTable { samples })
}

fn sort_by_time(curves: &mut [PendingCurve]) {
    let key = |c: &PendingCurve| c.time.clone().unwrap_or_default();
    let numeric: Option<Vec<f64>> = curves.iter().map(|c| key(c).parse::<f64>().ok()).collect();
    match numeric {
        Some(_) => curves.sort_by(|a, b| {
            let (x, y) = (key(a).parse::<f64>().unwrap(), key(b).parse::<f64>().unwrap());
            x.total_cmp(&y)
        }),
        None => curves.sort_by_key(key),
    }
}

pub fn read_curves_path(path: &Path, options: ReadOptions) -> Result<CurveTable> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    read_curves(std::io::BufReader::new(file), options)
}

/// Writes samples in long format; curves are numbered from 1 within each
/// sample, and `sample_id` is written when `samples` holds more than one.
/// Values use the shortest representation that parses back to the same bits.
pub fn write_curves<W: Write>(out: W, samples: &[(&str, &FunctionalSample)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let with_sample = samples.len() > 1;
    if with_sample {
        w.write_record(["curve_id", "x", "y", "sample_id"])?;
    } else {
        w.write_record(["curve_id", "x", "y"])?;
    }
    for (id, sample) in samples {
        for (i, curve) in sample.curves().iter().enumerate() {
            let cid = (i + 1).to_string();
            for (x, y) in curve.points() {
                let (xs, ys) = (format!("{x:?}"), format!("{y:?}"));
                if with_sample {
                    w.write_record([cid.as_str(), &xs, &ys, id])?;
                } else {
                    w.write_record([cid.as_str(), &xs, &ys])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_curves_path(path: &Path, samples: &[(&str, &FunctionalSample)]) -> Result<()> {
    write_curves(std::io::BufWriter::new(std::fs::File::create(path)?), samples)
}

/// Converts a wide table (first column the curve id, one column per design
/// point, one row per curve) to long format. Header labels of the design
/// columns give `x` when they all parse as numbers; otherwise the columns
/// are placed at `j / (m - 1)`. Empty cells are skipped.
pub fn reshape_wide<R: Read, W: Write>(input: R, output: W) -> Result<usize> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = reader.headers().map_err(csv_error)?.clone();
    let m = header.len().saturating_sub(1);
    if m == 0 {
        return Err(parse_error(1, "wide table needs an id column and at least one design column"));
    }
    let labels: Option<Vec<f64>> = header.iter().skip(1).map(|h| h.trim().parse::<f64>().ok()).collect();
    let grid = match labels {
        Some(v) => v,
        None if m == 1 => vec![0.0],
        None => (0..m).map(|j| j as f64 / (m - 1) as f64).collect(),
    };
    let mut w = csv::Writer::from_writer(output);
    w.write_record(["curve_id", "x", "y"])?;
    let mut rows = 0;
    let mut record = csv::StringRecord::new();
    while reader.read_record(&mut record).map_err(csv_error)? {
        let line = record.position().map_or(0, |p| p.line());
        let id = record.get(0).unwrap_or("").trim().to_string();
        if id.is_empty() {
            return Err(parse_error(line, "empty curve id"));
        }
        for (j, cell) in record.iter().skip(1).enumerate() {
            if cell.trim().is_empty() {
                continue;
            }
            let y = parse_number(cell, "y", line)?;
            w.write_record([id.as_str(), &format!("{:?}", grid[j]), &format!("{y:?}")])?;
        }
        rows += 1;
    }
    w.flush()?;
    Ok(rows)
}

/// A baseline mean given by values on a grid, linearly interpolated and held
/// constant beyond the end points.
#[derive(Clone, Debug, PartialEq)]
pub struct Baseline {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Baseline {
    pub fn new(mut points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::domain("baseline needs at least one point"));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        if points.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::domain("baseline has repeated x values"));
        }
        let (xs, ys) = points.into_iter().unzip();
        Ok(Baseline { xs, ys })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let i = self.xs.partition_point(|v| *v <= x);
        if i == 0 {
            return self.ys[0];
        }
        if i == self.xs.len() {
            return self.ys[i - 1];
        }
        let (x0, x1) = (self.xs[i - 1], self.xs[i]);
        let w = (x - x0) / (x1 - x0);
        self.ys[i - 1] + w * (self.ys[i] - self.ys[i - 1])
    }
}

/// Reads a baseline from a CSV with columns `x,y`.
pub fn read_baseline<R: Read>(input: R) -> Result<Baseline> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = reader.headers().map_err(csv_error)?.clone();
    let pos = |name: &str| {
        header
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| parse_error(1, format!("baseline header lacks a {name:?} column")))
    };
    let (xi, yi) = (pos("x")?, pos("y")?);
    let mut points = Vec::new();
    let mut record = csv::StringRecord::new();
    while reader.read_record(&mut record).map_err(csv_error)? {
        let line = record.position().map_or(0, |p| p.line());
        points.push((
            parse_number(record.get(xi).unwrap_or(""), "x", line)?,
            parse_number(record.get(yi).unwrap_or(""), "y", line)?,
        ));
    }
    Baseline::new(points)
}
