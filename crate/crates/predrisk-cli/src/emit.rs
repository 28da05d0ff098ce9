//! Output writers: CSV with a JSON config header comment, or a single JSON
//! object `{config, rows}`. Numeric cells carry 12 significant digits.

use crate::config::RunConfig;
use predrisk::{Error, Result};
use std::io::Write;
use std::path::PathBuf;

#[derive(Clone, Debug)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(v) => fmt_sig(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            Cell::Num(v) => {
                if v.is_finite() {
                    serde_json::json!(v)
                } else {
                    serde_json::Value::String(format!("{v}"))
                }
            }
            Cell::Int(v) => serde_json::json!(v),
            Cell::Text(s) => serde_json::Value::String(s.clone()),
        }
    }
}

/// 12 significant digits.
pub fn fmt_sig(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    format!("{:.11e}", v)
}

pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: Vec<&'static str>) -> Self {
        Table { columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

/// Render the table in the configured format.
pub fn render(config: &RunConfig, table: &Table) -> Result<String> {
    match config.format.as_str() {
        "csv" => {
            let header = serde_json::to_string(config)
                .map_err(|e| Error::InvalidArgument(format!("config serialization: {e}")))?;
            let mut out = String::new();
            out.push_str("# ");
            out.push_str(&header);
            out.push('\n');
            out.push_str(&table.columns.join(","));
            out.push('\n');
            for row in &table.rows {
                let cells: Vec<String> = row.iter().map(|c| c.csv()).collect();
                out.push_str(&cells.join(","));
                out.push('\n');
            }
            Ok(out)
        }
        "json" => {
            let rows: Vec<serde_json::Value> = table
                .rows
                .iter()
                .map(|row| {
                    let mut obj = serde_json::Map::new();
                    for (name, cell) in table.columns.iter().zip(row.iter()) {
                        obj.insert((*name).to_string(), cell.json());
                    }
                    serde_json::Value::Object(obj)
                })
                .collect();
            let doc = serde_json::json!({
                "config": config,
                "rows": rows,
            });
            let mut s = serde_json::to_string_pretty(&doc)
                .map_err(|e| Error::InvalidArgument(format!("json serialization: {e}")))?;
            s.push('\n');
            Ok(s)
        }
        other => Err(Error::InvalidArgument(format!(
            "unknown output format `{other}` (csv | json)"
        ))),
    }
}

/// Resolve the output target: an explicit path (joined onto
/// `PREDRISK_OUT_DIR` when relative and the variable is set) or stdout.
pub fn write_output(out: Option<&str>, content: &str) -> Result<()> {
    match out {
        None => {
            print!("{content}");
            Ok(())
        }
        Some(path) => {
            let mut p = PathBuf::from(path);
            if p.is_relative() {
                if let Ok(dir) = std::env::var("PREDRISK_OUT_DIR") {
                    if !dir.is_empty() {
                        p = PathBuf::from(dir).join(p);
                    }
                }
            }
            if let Some(parent) = p.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)
                        .map_err(|e| Error::InvalidArgument(format!("creating {parent:?}: {e}")))?;
                }
            }
            let mut f = std::fs::File::create(&p)
                .map_err(|e| Error::InvalidArgument(format!("writing {p:?}: {e}")))?;
            f.write_all(content.as_bytes())
                .map_err(|e| Error::InvalidArgument(format!("writing {p:?}: {e}")))?;
            Ok(())
        }
    }
}

