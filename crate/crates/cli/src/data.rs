//! Curves CSV ingestion and the plain CSV outputs.
//!
//! A curves file holds one function per row: an ID column followed by the
//! values on an equally spaced time grid. The header row carries the grid
//! itself (`id,t_1,..,t_T`), so it encodes both `T` and the domain.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use efcp_core::smoothing::l2_norm;
use efcp_core::{Curve, TimeGrid};
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Affine map from the file's time axis onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Domain {
    pub start: f64,
    pub end: f64,
    /// True unless the file's axis already was `[0, 1]`.
    pub rescaled: bool,
}

impl Domain {
    pub fn to_original(&self, s: f64) -> f64 {
        self.start + (self.end - self.start) * s
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub path: PathBuf,
    pub ids: Vec<String>,
    /// Time points as written in the header.
    pub times: Vec<f64>,
    pub domain: Domain,
    pub grid: TimeGrid,
    pub curves: Vec<Curve>,
}

/// Relative tolerance for the equal-spacing check of the header times.
const SPACING_TOL: f64 = 1e-6;

fn parse_err(path: &Path, row: usize, column: usize, message: impl Into<String>) -> CliError {
    CliError::Parse {
        path: path.to_path_buf(),
        row,
        column,
        message: message.into(),
    }
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    let (row, column) = e
        .position()
        .map(|p| (p.line() as usize, 0))
        .unwrap_or((0, 0));
    parse_err(path, row, column, e.to_string())
}

fn parse_times(path: &Path, header: &csv::StringRecord) -> CliResult<Vec<f64>> {
    if header.len() < 3 {
        return Err(parse_err(
            path,
            1,
            header.len(),
            "header needs an id column and at least 2 time points",
        ));
    }
    let times = header
        .iter()
        .enumerate()
        .skip(1)
        .map(|(c, s)| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|t| t.is_finite())
                .ok_or_else(|| parse_err(path, 1, c + 1, format!("time `{s}` is not a number")))
        })
        .collect::<CliResult<Vec<f64>>>()?;
    let (a, b) = (times[0], times[times.len() - 1]);
    if !(b > a) {
        return Err(parse_err(path, 1, 2, "time points must increase"));
    }
    let h = (b - a) / (times.len() - 1) as f64;
    for (k, &t) in times.iter().enumerate() {
        if (t - (a + h * k as f64)).abs() > SPACING_TOL * (b - a) {
            return Err(parse_err(
                path,
                1,
                k + 2,
                format!("time {t} breaks the equal spacing of the grid"),
            ));
        }
    }
    Ok(times)
}

fn parse_value(
    path: &Path,
    row: usize,
    column: usize,
    s: &str,
    allow_missing: bool,
) -> CliResult<f64> {
    let s = s.trim();
    if allow_missing
        && (s.is_empty() || s.eq_ignore_ascii_case("nan") || s.eq_ignore_ascii_case("na"))
    {
        return Ok(f64::NAN);
    }
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| {
            parse_err(
                path,
                row,
                column,
                format!("value `{s}` is not a finite number"),
            )
        })
}

struct RawTable {
    times: Vec<f64>,
    ids: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn read_table(path: &Path, allow_missing: bool) -> CliResult<RawTable> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let header = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    let times = parse_times(path, &header)?;
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let row = r + 2;
        let record = record.map_err(|e| csv_err(path, e))?;
        if record.len() != header.len() {
            return Err(parse_err(
                path,
                row,
                record.len(),
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        let id = record[0].trim().to_string();
        if id.is_empty() {
            return Err(parse_err(path, row, 1, "empty id"));
        }
        if ids.contains(&id) {
            return Err(parse_err(path, row, 1, format!("duplicate id `{id}`")));
        }
        let values = record
            .iter()
            .enumerate()
            .skip(1)
            .map(|(c, s)| parse_value(path, row, c + 1, s, allow_missing))
            .collect::<CliResult<Vec<f64>>>()?;
        ids.push(id);
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!("{}: no curves", path.display())));
    }
    Ok(RawTable { times, ids, rows })
}

fn domain_of(times: &[f64]) -> Domain {
    let (start, end) = (times[0], times[times.len() - 1]);
    Domain {
        start,
        end,
        rescaled: start != 0.0 || end != 1.0,
    }
}

/// Reads complete curves; `normalize` scales each to unit L2 norm on `[0, 1]`.
pub fn read_curves(path: &Path, normalize: bool) -> CliResult<Dataset> {
    let table = read_table(path, false)?;
    let grid = TimeGrid::new(table.times.len())?;
    let mut curves = Vec::with_capacity(table.rows.len());
    for (id, values) in table.ids.iter().zip(table.rows) {
        let mut curve = Curve::new(grid, values)?;
        if normalize {
            let norm = l2_norm(&curve);
            if !(norm > 0.0) {
                return Err(CliError::Data(format!(
                    "curve `{id}` has zero norm and cannot be normalized"
                )));
            }
            curve = Curve::new(grid, curve.values().iter().map(|v| v / norm).collect())?;
        }
        curves.push(curve);
    }
    Ok(Dataset {
        path: path.to_path_buf(),
        domain: domain_of(&table.times),
        ids: table.ids,
        times: table.times,
        grid,
        curves,
    })
}

/// Reads a single, possibly incomplete curve on the same grid as `reference`.
/// Missing cells (empty, `NA` or `NaN`) come back as NaN.
pub fn read_new_curve(path: &Path, reference: &Dataset) -> CliResult<(String, Vec<f64>)> {
    let table = read_table(path, true)?;
    if table.rows.len() != 1 {
        return Err(CliError::Data(format!(
            "{}: expected exactly one curve, found {}",
            path.display(),
            table.rows.len()
        )));
    }
    let span = reference.domain.end - reference.domain.start;
    let same_grid = table.times.len() == reference.times.len()
        && table
            .times
            .iter()
            .zip(&reference.times)
            .all(|(a, b)| (a - b).abs() <= SPACING_TOL * span);
    if !same_grid {
        return Err(CliError::Data(format!(
            "{}: time grid differs from {}",
            path.display(),
            reference.path.display()
        )));
    }
    let id = table.ids.into_iter().next().unwrap();
    Ok((id, table.rows.into_iter().next().unwrap()))
}

/// Shortest representation that reads back to the same `f64`.
pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v}")
    }
}

pub fn create(path: &Path) -> CliResult<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::WriterBuilder::new().from_writer(file))
}

pub fn finish(path: &Path, mut w: csv::Writer<File>) -> CliResult<()> {
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_row<I, S>(path: &Path, w: &mut csv::Writer<File>, row: I) -> CliResult<()>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    w.write_record(row).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    })
}

/// Writes curves in the ingestion layout.
pub fn write_curves(path: &Path, times: &[f64], ids: &[String], curves: &[Curve]) -> CliResult<()> {
    let mut w = create(path)?;
    write_row(
        path,
        &mut w,
        std::iter::once("id".to_string()).chain(times.iter().map(|&t| fmt_num(t))),
    )?;
    for (id, c) in ids.iter().zip(curves) {
        write_row(
            path,
            &mut w,
            std::iter::once(id.clone()).chain(c.values().iter().map(|&v| fmt_num(v))),
        )?;
    }
    finish(path, w)
}

/// Writes `header` followed by columns of equal length.
pub fn write_columns(path: &Path, header: &[&str], columns: &[Vec<String>]) -> CliResult<()> {
    let mut w = create(path)?;
    write_row(path, &mut w, header)?;
    let len = columns.first().map_or(0, Vec::len);
    for r in 0..len {
        write_row(path, &mut w, columns.iter().map(|c| c[r].as_str()))?;
    }
    finish(path, w)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    writeln!(file, "{text}").map_err(|e| CliError::io(path, e))
}
