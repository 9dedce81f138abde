//! On-disk formats (format version 1, see `docs/FORMATS.md`).
//!
//! * Matrices: CSV with a one-line header `rows,cols`, then one line per row
//!   of comma-separated entries printed in shortest round-trip form.
//! * Set descriptions: a first line `p,n,orientation` followed by the matrix
//!   body of `Π`.
//! * Configs and reports: flat `key = value` text with dotted keys, `#`
//!   comments, and matrix literals `[a b; c d]`.
//!
//! Everything here is `f64`: files are an exchange format, not a generic
//! numeric surface.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::qmi::{Orientation, Qmi};

/// Serializes a matrix in the `rows,cols` CSV format.
pub fn matrix_to_string(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{},{}", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[(i, j)])).collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

/// Parses the `rows,cols` CSV format.
pub fn matrix_from_str(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty matrix file".into()))?;
    let (rows, cols) = parse_header(header)?;
    let mut entries = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse("matrix file truncated".into()))?;
        let mut count = 0usize;
        for tok in line.split(',') {
            entries.push(parse_f64(tok)?);
            count += 1;
        }
        if count != cols {
            return Err(Error::Parse(format!(
                "expected {cols} columns, found {count}"
            )));
        }
    }
    Ok(DMatrix::from_row_slice(rows, cols, &entries))
}

fn parse_header(line: &str) -> Result<(usize, usize)> {
    let mut parts = line.split(',');
    let rows = parts
        .next()
        .and_then(|t| t.trim().parse::<usize>().ok())
        .ok_or_else(|| Error::Parse(format!("bad matrix header '{line}'")))?;
    let cols = parts
        .next()
        .and_then(|t| t.trim().parse::<usize>().ok())
        .ok_or_else(|| Error::Parse(format!("bad matrix header '{line}'")))?;
    Ok((rows, cols))
}

fn parse_f64(tok: &str) -> Result<f64> {
    tok.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("bad number '{tok}'")))
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    std::fs::write(path, matrix_to_string(m))?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    matrix_from_str(&std::fs::read_to_string(path)?)
}

/// Serializes a set description: `p,n,orientation` then the `Π` body.
pub fn qmi_to_string(q: &Qmi<f64>) -> String {
    format!(
        "{},{},{}\n{}",
        q.p(),
        q.n(),
        q.orientation(),
        matrix_to_string(q.pi())
    )
}

pub fn qmi_from_str(text: &str) -> Result<Qmi<f64>> {
    let mut lines = text.splitn(2, '\n');
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty set file".into()))?;
    let body = lines
        .next()
        .ok_or_else(|| Error::Parse("set file truncated".into()))?;
    let parts: Vec<&str> = header.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Error::Parse(format!("bad set header '{header}'")));
    }
    let p = parts[0]
        .parse::<usize>()
        .map_err(|_| Error::Parse("bad row count".into()))?;
    let n = parts[1]
        .parse::<usize>()
        .map_err(|_| Error::Parse("bad column count".into()))?;
    let orientation = match parts[2] {
        "primal" => Orientation::Primal,
        "dual" => Orientation::Dual,
        other => return Err(Error::Parse(format!("bad orientation '{other}'"))),
    };
    Qmi::new(p, n, matrix_from_str(body)?, orientation)
}

pub fn write_qmi(path: &Path, q: &Qmi<f64>) -> Result<()> {
    std::fs::write(path, qmi_to_string(q))?;
    Ok(())
}

pub fn read_qmi(path: &Path) -> Result<Qmi<f64>> {
    qmi_from_str(&std::fs::read_to_string(path)?)
}

/// Flat `key = value` store with dotted keys. Values stay raw strings;
/// typed accessors parse on demand.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvMap {
    entries: BTreeMap<String, String>,
}

impl KvMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl std::fmt::Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn set_matrix(&mut self, key: &str, m: &DMatrix<f64>) {
        self.entries.insert(key.to_string(), matrix_literal(m));
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys_with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = &'a str> {
        self.entries
            .keys()
            .filter(move |k| k.starts_with(prefix))
            .map(String::as_str)
    }

    pub fn get_str(&self, key: &str) -> Result<&str> {
        self.entries
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::InvalidConfig(format!("missing key '{key}'")))
    }

    pub fn get_f64(&self, key: &str) -> Result<f64> {
        parse_f64(self.get_str(key)?)
    }

    pub fn get_usize(&self, key: &str) -> Result<usize> {
        self.get_str(key)?
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Parse(format!("bad integer for '{key}'")))
    }

    pub fn get_u64(&self, key: &str) -> Result<u64> {
        self.get_str(key)?
            .trim()
            .parse::<u64>()
            .map_err(|_| Error::Parse(format!("bad integer for '{key}'")))
    }

    pub fn get_bool(&self, key: &str) -> Result<bool> {
        match self.get_str(key)?.trim() {
            "true" => Ok(true),
            "false" => Ok(false),
            other => Err(Error::Parse(format!("bad boolean '{other}' for '{key}'"))),
        }
    }

    /// Matrix literal `[a b; c d]`.
    pub fn get_matrix(&self, key: &str) -> Result<DMatrix<f64>> {
        parse_matrix_literal(self.get_str(key)?)
    }

    /// Comma-separated word list.
    pub fn get_list(&self, key: &str) -> Result<Vec<String>> {
        Ok(self
            .get_str(key)?
            .split(',')
            .map(|t| t.trim().to_string())
            .filter(|t| !t.is_empty())
            .collect())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            entries.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Inline matrix literal: rows separated by `;`, entries by whitespace.
pub fn matrix_literal(m: &DMatrix<f64>) -> String {
    let rows: Vec<String> = (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                .map(|j| format!("{}", m[(i, j)]))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    format!("[{}]", rows.join("; "))
}

pub fn parse_matrix_literal(text: &str) -> Result<DMatrix<f64>> {
    let inner = text
        .trim()
        .strip_prefix('[')
        .and_then(|t| t.strip_suffix(']'))
        .ok_or_else(|| Error::Parse(format!("matrix literal must be bracketed: '{text}'")))?;
    let rows: Vec<&str> = inner.split(';').collect();
    let mut entries: Vec<f64> = Vec::new();
    let mut cols = None;
    for row in &rows {
        let vals: Vec<f64> = row
            .split_whitespace()
            .map(parse_f64)
            .collect::<Result<_>>()?;
        match cols {
            None => cols = Some(vals.len()),
            Some(c) if c != vals.len() => {
                return Err(Error::Parse("ragged matrix literal".into()))
            }
            _ => {}
        }
        entries.extend(vals);
    }
    let cols = cols.unwrap_or(0);
    if cols == 0 {
        return Err(Error::Parse("empty matrix literal".into()));
    }
    Ok(DMatrix::from_row_slice(rows.len(), cols, &entries))
}
