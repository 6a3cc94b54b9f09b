//! CSV and JSON serialization for matrices and experiment tables.
//!
//! Numbers are written with 17 significant digits (`{:.16e}`), which
//! round-trips every finite `f64` exactly.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde_json::{Map, Value};

use crate::coeff_models::{CoefficientModel, SignalSet};
use crate::dictionary::Dictionary;
use crate::error::{DlError, Result};

fn csv_err(e: csv::Error) -> DlError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => DlError::Io(io),
        other => DlError::Parse(format!("{other:?}")),
    }
}

/// Formats a float with 17 significant digits; non-finite values as `inf`, `-inf`, `NaN`.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

/// Writes a matrix as headerless CSV, one row per line.
pub fn write_matrix_csv<W: Write>(writer: W, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| format_float(*v))).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a headerless numeric CSV into a matrix. All rows must have the same length.
pub fn read_matrix_csv<R: Read>(reader: R) -> Result<DMatrix<f64>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for record in r.records() {
        let record = record.map_err(csv_err)?;
        if cols.is_some_and(|c| c != record.len()) {
            return Err(DlError::Parse(format!("row {} has {} fields, expected {}", rows + 1, record.len(), cols.unwrap())));
        }
        cols = Some(record.len());
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| DlError::Parse(format!("row {}: cannot parse {field:?} as a number", rows + 1)))?;
            values.push(v);
        }
        rows += 1;
    }
    Ok(DMatrix::from_row_slice(rows, cols.unwrap_or(0), &values))
}

pub fn save_matrix(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    write_matrix_csv(BufWriter::new(File::create(path)?), m)
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    read_matrix_csv(File::open(path)?)
}

/// Loads a K×K dictionary from CSV, normalizing its columns.
pub fn load_dictionary(path: impl AsRef<Path>) -> Result<Dictionary> {
    Dictionary::new(load_matrix(path)?)
}

/// Writes the signals to `path` (CSV, one signal per row) and the metadata to
/// `path` with a `.json` extension.
pub fn save_signal_set(path: impl AsRef<Path>, set: &SignalSet, model: Option<&CoefficientModel>) -> Result<()> {
    let path = path.as_ref();
    save_matrix(path, &set.signals)?;
    let meta = serde_json::to_string_pretty(&set.metadata(model)).map_err(|e| DlError::Parse(e.to_string()))?;
    std::fs::write(path.with_extension("json"), meta + "\n")?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Bool(bool),
    Text(String),
    Missing,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_owned())
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Missing, Into::into)
    }
}

impl Cell {
    fn to_csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format_float(*v),
            Cell::Bool(v) => v.to_string(),
            Cell::Text(v) => v.clone(),
            Cell::Missing => String::new(),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Int(v) => Value::from(*v),
            // JSON has no infinities; they become null like missing values.
            Cell::Float(v) => serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number),
            Cell::Bool(v) => Value::Bool(*v),
            Cell::Text(v) => Value::String(v.clone()),
            Cell::Missing => Value::Null,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(v) => Some(*v as f64),
            Cell::Float(v) => Some(*v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// A table with named columns.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self { columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    /// Appends a row; panics if its length differs from the number of columns.
    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row length must match the header");
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Values of a column, or `None` if there is no such column.
    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let i = self.column_index(name)?;
        Some(self.rows.iter().map(|r| &r[i]).collect())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.columns).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::to_csv)).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// An array of objects keyed by column name.
    pub fn to_json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|row| {
                    let obj: Map<String, Value> = self.columns.iter().cloned().zip(row.iter().map(Cell::to_json)).collect();
                    Value::Object(obj)
                })
                .collect(),
        )
    }

    pub fn write<W: Write>(&self, mut writer: W, format: Format) -> Result<()> {
        match format {
            Format::Csv => self.write_csv(writer),
            Format::Json => {
                serde_json::to_writer_pretty(&mut writer, &self.to_json()).map_err(|e| DlError::Parse(e.to_string()))?;
                writeln!(writer)?;
                Ok(())
            }
        }
    }
}
