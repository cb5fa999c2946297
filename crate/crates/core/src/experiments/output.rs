//! Tabular sweep results and their CSV form.

use std::io::{Read, Write};

use super::ExperimentError;

/// Significant digits written for every numeric cell.
pub const SIGNIFICANT_DIGITS: usize = 12;

/// Round to the precision the CSV carries, so that values survive a
/// write/read cycle unchanged.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    format_num(x).parse().unwrap_or(x)
}

fn format_num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
    Missing,
}

impl Cell {
    pub fn num(x: f64) -> Self {
        Cell::Num(round_sig(x))
    }

    pub fn opt(x: Option<f64>) -> Self {
        x.map_or(Cell::Missing, Cell::num)
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(x) => Some(*x),
            _ => None,
        }
    }

    fn render(&self) -> String {
        match self {
            Cell::Num(x) => format_num(*x),
            Cell::Text(s) => s.clone(),
            Cell::Missing => String::new(),
        }
    }

    fn parse(s: &str) -> Self {
        if s.is_empty() {
            Cell::Missing
        } else {
            match s.parse::<f64>() {
                Ok(x) => Cell::Num(x),
                Err(_) => Cell::Text(s.to_string()),
            }
        }
    }
}

/// Ordered records of one sweep: one row per grid point (or per grid point
/// and time sample for trajectories).
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl SweepResult {
    pub fn new(columns: Vec<String>) -> Self {
        Self { columns, rows: Vec::new() }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric values of a column, `None` for non-numeric cells.
    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let k = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[k].as_f64()).collect())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), ExperimentError> {
        let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        wtr.write_record(&self.columns)?;
        for row in &self.rows {
            wtr.write_record(row.iter().map(Cell::render))?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String, ExperimentError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| ExperimentError::Io(e.to_string()))
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, ExperimentError> {
        let mut rdr = csv::Reader::from_reader(r);
        let columns = rdr.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            rows.push(rec?.iter().map(Cell::parse).collect());
        }
        Ok(Self { columns, rows })
    }
}
