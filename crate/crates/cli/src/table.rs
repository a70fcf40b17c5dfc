//! CSV and key-value report files with a `#` provenance header.
//!
//! Header layout: `# meta.version = …`, `# meta.command = …`, any further
//! `# meta.* = …` lines, then the resolved config as `# key = value`. CSV files
//! follow with one column-name row and plain decimal rows.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::config::RunConfig;
use crate::error::HarnessError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn provenance(command: &str, config: &RunConfig, meta: &[(String, String)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# meta.version = {VERSION}");
    let _ = writeln!(out, "# meta.command = {command}");
    for (k, v) in meta {
        let _ = writeln!(out, "# meta.{k} = {v}");
    }
    for line in config.to_text().lines() {
        let _ = writeln!(out, "# {line}");
    }
    out
}

pub fn write_file(path: &Path, text: &str) -> Result<(), HarnessError> {
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

/// Format a float so that parsing it back gives the same bits.
pub fn num(x: f64) -> String {
    x.to_string()
}

pub struct Table<'a> {
    pub columns: &'a [&'a str],
    pub rows: Vec<Vec<f64>>,
}

impl Table<'_> {
    pub fn render(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.iter().map(|x| num(*x)).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }
}

pub fn write_csv(
    path: &Path,
    command: &str,
    config: &RunConfig,
    meta: &[(String, String)],
    table: &Table,
) -> Result<(), HarnessError> {
    write_file(path, &(provenance(command, config, meta) + &table.render()))
}

/// Key-value report: provenance header followed by `key: value` lines.
pub fn write_report(
    path: &Path,
    command: &str,
    config: &RunConfig,
    entries: &[(String, String)],
) -> Result<(), HarnessError> {
    let mut text = provenance(command, config, &[]);
    for (k, v) in entries {
        let _ = writeln!(text, "{k}: {v}");
    }
    write_file(path, &text)
}

/// Parsed CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvFile {
    pub meta: Vec<(String, String)>,
    /// Embedded config as `key = value` text.
    pub config_text: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvFile {
    pub fn read(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse(&text).map_err(|m| HarnessError::format(path, m))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut meta = Vec::new();
        let mut config_text = String::new();
        let mut columns = None;
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if let Some(h) = line.strip_prefix('#') {
                let h = h.trim();
                match h.strip_prefix("meta.") {
                    Some(m) => {
                        let (k, v) = m.split_once('=').ok_or(format!("line {}: bad meta line", i + 1))?;
                        meta.push((k.trim().to_string(), v.trim().to_string()));
                    }
                    None => {
                        config_text.push_str(h);
                        config_text.push('\n');
                    }
                }
            } else if line.trim().is_empty() {
                continue;
            } else if columns.is_none() {
                columns = Some(line.split(',').map(|c| c.trim().to_string()).collect::<Vec<_>>());
            } else {
                let row = line
                    .split(',')
                    .map(|c| c.trim().parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| format!("line {}: {e}", i + 1))?;
                rows.push(row);
            }
        }
        let columns = columns.ok_or("missing column row")?;
        if let Some(r) = rows.iter().position(|r| r.len() != columns.len()) {
            return Err(format!("row {} has {} fields, expected {}", r + 1, rows[r].len(), columns.len()));
        }
        Ok(Self {
            meta,
            config_text,
            columns,
            rows,
        })
    }

    pub fn config(&self) -> Result<RunConfig, HarnessError> {
        RunConfig::parse(&self.config_text)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let cfg = RunConfig::default();
        let table = Table {
            columns: &["a", "b"],
            rows: vec![vec![0.1, f64::NAN], vec![-1e-300, 1.0 / 3.0]],
        };
        let text = provenance("test", &cfg, &[("failed".into(), "2".into())]) + &table.render();
        let f = CsvFile::parse(&text).unwrap();
        assert_eq!(f.meta_value("command"), Some("test"));
        assert_eq!(f.meta_value("failed"), Some("2"));
        assert_eq!(f.config().unwrap(), cfg);
        assert_eq!(f.column("a").unwrap(), vec![0.1, -1e-300]);
        assert!(f.rows[0][1].is_nan());
        assert_eq!(f.rows[1][1], 1.0 / 3.0);
    }

    #[test]
    fn ragged_rows_are_rejected() {
        assert!(CsvFile::parse("a,b\n1,2\n3\n").is_err());
        assert!(CsvFile::parse("# only header\n").is_err());
    }
}
