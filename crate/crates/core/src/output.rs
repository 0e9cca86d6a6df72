//! JSON and CSV writers. Floats are written with 17 significant digits so
//! every value reads back to the same `f64`.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::{Number, Value};

/// `v` with 17 significant digits, in exponent form.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn widen(value: Value) -> Value {
    match value {
        Value::Number(n) if !(n.is_u64() || n.is_i64()) => match n.as_f64() {
            Some(f) => fmt_f64(f).parse::<Number>().map(Value::Number).unwrap_or(Value::Null),
            None => Value::Number(n),
        },
        Value::Array(a) => Value::Array(a.into_iter().map(widen).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, widen(v))).collect()),
        other => other,
    }
}

/// `value` as a JSON tree with full-precision floats; non-finite floats
/// become `null`.
pub fn to_value<T: Serialize>(value: &T) -> Value {
    widen(serde_json::to_value(value).expect("serializable"))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(&to_value(value)).expect("serializable")
}

/// Comma-separated table with a header row.
#[derive(Debug, Clone, Default)]
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self { text: header.join(",") + "\n" }
    }

    pub fn row(&mut self, cells: &[Cell]) {
        let line: Vec<String> = cells.iter().map(Cell::render).collect();
        let _ = writeln!(self.text, "{}", line.join(","));
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, &self.text)
    }
}

pub enum Cell {
    Float(f64),
    Int(u64),
    Missing,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Float(v) => fmt_f64(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Missing => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Float)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}
