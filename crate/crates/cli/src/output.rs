//! Result tables and their CSV / JSON encodings.
//!
//! Floats are written in the shortest form that parses back to the same
//! `f64`. Infinity is the literal `inf` (a string in JSON); missing values are
//! `null` in both formats.

use std::io::Write;

use fedinfo::ExtendedReal;
use serde_json::{json, Value};

use crate::config::Format;
use crate::error::CliError;

#[derive(Clone, Debug, Default, PartialEq)]
pub enum Cell {
    Int(u64),
    Float(f64),
    Inf,
    #[default]
    Null,
    Bool(bool),
    Text(String),
}

impl Cell {
    pub fn text(s: impl Into<String>) -> Self {
        Cell::Text(s.into())
    }

    pub fn opt(v: Option<f64>) -> Self {
        v.map_or(Cell::Null, Cell::from)
    }

    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => v.to_string(),
            Cell::Inf => "inf".into(),
            Cell::Null => "null".into(),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(v) => json!(v),
            Cell::Float(v) => json!(v),
            Cell::Inf => json!("inf"),
            Cell::Null => Value::Null,
            Cell::Bool(b) => json!(b),
            Cell::Text(s) => json!(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        if v == f64::INFINITY {
            Cell::Inf
        } else if v.is_finite() {
            Cell::Float(v)
        } else {
            Cell::Null
        }
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<ExtendedReal> for Cell {
    fn from(v: ExtendedReal) -> Self {
        match v {
            ExtendedReal::Finite(x) => Cell::from(x),
            ExtendedReal::Infinite => Cell::Inf,
        }
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: &'static str,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &'static str, columns: &[&'static str]) -> Self {
        Self {
            name,
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(
            row.len(),
            self.columns.len(),
            "row width for table {}",
            self.name
        );
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| *c == name)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::csv))?;
        }
        w.into_inner().map_err(|e| CliError::Io(e.into_error()))
    }

    pub fn to_json(&self) -> Result<Vec<u8>, CliError> {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| Value::Array(r.iter().map(Cell::json).collect()))
            .collect();
        let doc = json!({
            "table": self.name,
            "columns": self.columns,
            "rows": rows,
        });
        let mut out = serde_json::to_vec_pretty(&doc)?;
        out.push(b'\n');
        Ok(out)
    }

    pub fn encode(&self, format: Format) -> Result<Vec<u8>, CliError> {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        }
    }

    pub fn write(&self, format: Format, out: &mut dyn Write) -> Result<(), CliError> {
        out.write_all(&self.encode(format)?)?;
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Table {
        let mut t = Table::new("demo", &["k", "value", "note"]);
        t.push(vec![
            Cell::from(2usize),
            Cell::from(0.1),
            Cell::text("a, b"),
        ]);
        t.push(vec![Cell::from(3usize), Cell::Inf, Cell::Null]);
        t
    }

    #[test]
    fn csv_encoding() {
        let csv = String::from_utf8(sample().to_csv().unwrap()).unwrap();
        assert_eq!(csv, "k,value,note\n2,0.1,\"a, b\"\n3,inf,null\n");
    }

    #[test]
    fn json_encoding() {
        let v: Value = serde_json::from_slice(&sample().to_json().unwrap()).unwrap();
        assert_eq!(v["rows"][1][1], json!("inf"));
        assert_eq!(v["rows"][1][2], Value::Null);
        assert_eq!(v["columns"][0], json!("k"));
    }

    #[test]
    fn floats_round_trip() {
        for x in [0.0136994870940572, 1.0 / 3.0, 1e-300, 2.5e17] {
            let s = Cell::from(x).csv();
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
        assert_eq!(Cell::from(f64::NAN), Cell::Null);
    }

    #[test]
    #[should_panic]
    fn width_checked() {
        Table::new("x", &["a"]).push(vec![]);
    }
}
