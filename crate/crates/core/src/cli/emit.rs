//! Tabular artifacts: CSV with a config comment line, or JSON.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde_json::{Map, Value};

use crate::error::{Error, Result};

const CONFIG_PREFIX: &str = "# config: ";

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(v) => write!(f, "{v}"),
            // 17 significant digits
            Cell::Float(v) => write!(f, "{v:.16e}"),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

impl Cell {
    fn parse(field: &str) -> Self {
        if let Ok(v) = i64::from_str(field) {
            return Cell::Int(v);
        }
        if let Ok(v) = f64::from_str(field) {
            return Cell::Float(v);
        }
        Cell::Text(field.to_string())
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Int(v) => Value::from(*v),
            Cell::Float(v) => serde_json::Number::from_f64(*v)
                .map(Value::Number)
                .unwrap_or_else(|| Value::String(v.to_string())),
            Cell::Text(s) => Value::String(s.clone()),
        }
    }
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

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| &r[j]).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

pub fn to_csv(table: &Table, config: &Value) -> Result<String> {
    let mut out = format!("{CONFIG_PREFIX}{config}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(&table.columns).map_err(csv_error)?;
        for row in &table.rows {
            w.write_record(row.iter().map(ToString::to_string))
                .map_err(csv_error)?;
        }
        w.flush().map_err(|e| Error::Parse(e.to_string()))?;
    }
    String::from_utf8(out).map_err(|e| Error::Parse(e.to_string()))
}

pub fn to_json(table: &Table, config: &Value) -> Result<String> {
    let mut columns = Map::new();
    for (j, name) in table.columns.iter().enumerate() {
        let values = table.rows.iter().map(|r| r[j].to_json()).collect();
        columns.insert(name.clone(), Value::Array(values));
    }
    let doc = serde_json::json!({ "config": config, "columns": columns });
    let mut text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Parse(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

/// Inverse of [`to_csv`].
pub fn parse_csv(text: &str) -> Result<(Value, Table)> {
    let (first, body) = text.split_once('\n').unwrap_or((text, ""));
    let config = first
        .strip_prefix(CONFIG_PREFIX)
        .ok_or_else(|| Error::Parse("missing config line".into()))?;
    let config: Value = serde_json::from_str(config).map_err(|e| Error::Parse(e.to_string()))?;
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let columns: Vec<String> = r
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(String::from)
        .collect();
    let mut table = Table::new(columns);
    for rec in r.records() {
        table.rows.push(rec.map_err(csv_error)?.iter().map(Cell::parse).collect());
    }
    Ok((config, table))
}

fn csv_error(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

/// Write `table` to `path`, or to stdout when `path` is `None`.
pub fn emit(table: &Table, config: &Value, format: Format, path: Option<&Path>) -> Result<()> {
    let text = match format {
        Format::Csv => to_csv(table, config)?,
        Format::Json => to_json(table, config)?,
    };
    match path {
        Some(p) => fs::write(p, text).map_err(|source| Error::Io {
            path: p.to_path_buf(),
            source,
        }),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|source| Error::Io {
                path: "<stdout>".into(),
                source,
            }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn empty_table_is_header_only() {
        let t = Table::new(["a", "b"]);
        let text = to_csv(&t, &json!({"k": 1})).unwrap();
        assert_eq!(text, "# config: {\"k\":1}\na,b\n");
    }

    #[test]
    fn one_row_gives_three_lines() {
        let mut t = Table::new(["t", "s", "v"]);
        t.push(vec![0.5.into(), 2usize.into(), (1.0 / 3.0).into()]);
        let text = to_csv(&t, &json!({})).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[2], "5.0000000000000000e-1,2,3.3333333333333331e-1");
        assert_eq!(parse_csv(&text).unwrap().1, t);
    }

    #[test]
    fn json_mirrors_columns() {
        let mut t = Table::new(["x", "name"]);
        t.push(vec![1.5.into(), "a".into()]);
        t.push(vec![2.5.into(), "b".into()]);
        let v: Value = serde_json::from_str(&to_json(&t, &json!({"c": 2})).unwrap()).unwrap();
        assert_eq!(v["config"]["c"], 2);
        assert_eq!(v["columns"]["x"], json!([1.5, 2.5]));
        assert_eq!(v["columns"]["name"], json!(["a", "b"]));
    }

    #[test]
    fn missing_config_line_is_rejected() {
        assert!(parse_csv("a,b\n1,2\n").is_err());
    }
}
