//! On-disk formats.
//!
//! Matrices and masks are headerless row-major CSV. Group partitions are
//! text files with one group per line, given as space-separated 1-based atom
//! indices; blank lines and lines starting with `#` are ignored. Configs,
//! supports and reports are JSON.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::analysis::SupportSpec;
use crate::error::{Error, Result};
use crate::model::GroupPartition;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.display().to_string(), source }
}

fn parse_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), msg: msg.into() }
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).comment(Some(b'#')).from_reader(r)
}

fn read_table<R: Read, T>(r: R, label: &Path, mut cell: impl FnMut(&str) -> Option<T>) -> Result<(usize, usize, Vec<T>)> {
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, record) in csv_reader(r).records().enumerate() {
        let record = record.map_err(|e| parse_err(label, e.to_string()))?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(parse_err(label, format!("row {} has {} fields, expected {c}", i + 1, record.len())));
            }
            _ => {}
        }
        for (j, field) in record.iter().enumerate() {
            let v = cell(field).ok_or_else(|| parse_err(label, format!("row {}, column {}: invalid value {field:?}", i + 1, j + 1)))?;
            data.push(v);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| parse_err(label, "empty matrix"))?;
    Ok((rows, cols, data))
}

/// Reads a matrix from CSV text.
pub fn parse_matrix<R: Read>(r: R, label: &Path) -> Result<DMatrix<f64>> {
    let (rows, cols, data) = read_table(r, label, |s| s.parse::<f64>().ok().filter(|v| v.is_finite()))?;
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    parse_matrix(File::open(path).map_err(io_err(path))?, path)
}

/// Formats with 17 significant digits, enough to round-trip every `f64`.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_table<W: Write, T>(w: W, rows: usize, cols: usize, at: impl Fn(usize, usize) -> T, fmt: impl Fn(T) -> String) -> std::io::Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for i in 0..rows {
        wtr.write_record((0..cols).map(|j| fmt(at(i, j))))?;
    }
    wtr.flush()
}

pub fn format_matrix<W: Write>(w: W, m: &DMatrix<f64>) -> std::io::Result<()> {
    write_table(w, m.nrows(), m.ncols(), |i, j| m[(i, j)], format_value)
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    format_matrix(File::create(path).map_err(io_err(path))?, m).map_err(io_err(path))
}

/// 0/1 CSV; 1 marks an observed entry.
pub fn read_mask(path: &Path) -> Result<DMatrix<bool>> {
    let file = File::open(path).map_err(io_err(path))?;
    let (rows, cols, data) = read_table(file, path, |s| match s {
        "0" => Some(false),
        "1" => Some(true),
        _ => None,
    })?;
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn write_mask(path: &Path, mask: &DMatrix<bool>) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    write_table(file, mask.nrows(), mask.ncols(), |i, j| mask[(i, j)], |b| if b { "1".into() } else { "0".into() })
        .map_err(io_err(path))
}

pub fn parse_groups<R: BufRead>(r: R, num_atoms: usize, label: &Path) -> Result<GroupPartition> {
    let mut groups = Vec::new();
    for (ln, line) in r.lines().enumerate() {
        let line = line.map_err(io_err(label))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let group = line
            .split_whitespace()
            .map(|tok| match tok.parse::<usize>() {
                Ok(i) if i >= 1 => Ok(i - 1),
                _ => Err(parse_err(label, format!("line {}: invalid atom index {tok:?}", ln + 1))),
            })
            .collect::<Result<Vec<_>>>()?;
        groups.push(group);
    }
    GroupPartition::new(groups, num_atoms).map_err(|e| parse_err(label, e.to_string()))
}

pub fn read_groups(path: &Path, num_atoms: usize) -> Result<GroupPartition> {
    parse_groups(BufReader::new(File::open(path).map_err(io_err(path))?), num_atoms, path)
}

pub fn format_groups<W: Write>(mut w: W, partition: &GroupPartition) -> std::io::Result<()> {
    for group in partition.groups() {
        let line: Vec<String> = group.iter().map(|i| (i + 1).to_string()).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn write_groups(path: &Path, partition: &GroupPartition) -> Result<()> {
    format_groups(File::create(path).map_err(io_err(path))?, partition).map_err(io_err(path))
}

/// Parses `QxG` (also `Q×G`) into `(q, g)`.
pub fn parse_uniform_groups(text: &str) -> Result<(usize, usize)> {
    let bad = || Error::Parameter(format!("expected QxG (e.g. 8x32), got {text:?}"));
    let (q, g) = text.split_once(['x', 'X', '×']).ok_or_else(bad)?;
    let q: usize = q.trim().parse().map_err(|_| bad())?;
    let g: usize = g.trim().parse().map_err(|_| bad())?;
    if q == 0 || g == 0 {
        return Err(bad());
    }
    Ok((q, g))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(io_err(path))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| parse_err(path, e.to_string()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut file = File::create(path).map_err(io_err(path))?;
    serde_json::to_writer_pretty(&mut file, value).map_err(|e| parse_err(path, e.to_string()))?;
    writeln!(file).map_err(io_err(path))
}

/// JSON form of a support, with 1-based indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportFile {
    pub active_groups: Vec<usize>,
    pub within_group: Vec<Vec<usize>>,
}

impl SupportFile {
    pub fn from_spec(spec: &SupportSpec) -> Self {
        let shift = |v: &[usize]| v.iter().map(|i| i + 1).collect::<Vec<_>>();
        Self {
            active_groups: shift(&spec.active_groups),
            within_group: spec.within_group.iter().map(|s| shift(s)).collect(),
        }
    }

    pub fn to_spec(&self, partition: &GroupPartition) -> Result<SupportSpec> {
        let unshift = |v: &[usize]| -> Result<Vec<usize>> {
            v.iter()
                .map(|&i| i.checked_sub(1).ok_or_else(|| Error::Parameter("support indices are 1-based".into())))
                .collect()
        };
        SupportSpec::new(
            unshift(&self.active_groups)?,
            self.within_group.iter().map(|s| unshift(s)).collect::<Result<_>>()?,
            partition,
        )
    }
}
