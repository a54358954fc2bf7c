//! Plain-text tables with `#` metadata headers.
//!
//! ```text
//! # title: transmission trace
//! # config_hash: 0123456789abcdef
//! # seed: 20100301
//! t_us	T	T_sem
//! 0.02	0.1851	0.0031
//! ```
//!
//! Values are written with Rust's shortest round-trip formatting, so a
//! table parses back to bit-identical numbers.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::config::PhysicsConfig;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("row has {got} values; the table has {want} columns")]
    RowLength { got: usize, want: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub meta: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(title: &str, columns: &[&str]) -> Self {
        Self {
            meta: vec![("title".into(), title.into())],
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.set_meta(key, value);
        self
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string().replace('\n', " ");
        match self.meta.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.meta.push((key.into(), value)),
        }
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Standard run header: config hash, seed, trajectory count, window.
    pub fn with_run(mut self, run: &RunInfo) -> Self {
        self.set_meta("config_hash", format!("{:016x}", run.config_hash));
        self.set_meta("seed", run.seed);
        self.set_meta("trajectories", run.trajectories);
        self.set_meta("window_ns", format!("{:.3} {:.3}", run.window.0 * 1e9, run.window.1 * 1e9));
        self
    }

    pub fn push(&mut self, row: Vec<f64>) -> Result<(), TableError> {
        if row.len() != self.columns.len() {
            return Err(TableError::RowLength { got: row.len(), want: self.columns.len() });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.meta {
            let _ = writeln!(s, "# {k}: {v}");
        }
        let _ = writeln!(s, "{}", self.columns.join("\t"));
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|v| format!("{v}")).collect();
            let _ = writeln!(s, "{}", cells.join("\t"));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, TableError> {
        let mut meta = Vec::new();
        let mut columns: Option<Vec<String>> = None;
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.trim().split_once(':') {
                    meta.push((k.trim().to_string(), v.trim().to_string()));
                }
                continue;
            }
            match &columns {
                None => columns = Some(line.split('\t').map(str::to_string).collect()),
                Some(c) => {
                    let row = line
                        .split('\t')
                        .map(|x| x.trim().parse::<f64>())
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|e| TableError::Parse { line: i + 1, reason: e.to_string() })?;
                    if row.len() != c.len() {
                        return Err(TableError::Parse {
                            line: i + 1,
                            reason: format!("{} values for {} columns", row.len(), c.len()),
                        });
                    }
                    rows.push(row);
                }
            }
        }
        let columns = columns.ok_or(TableError::Parse { line: 0, reason: "missing column header".into() })?;
        Ok(Self { meta, columns, rows })
    }

    pub fn write(&self, path: &Path) -> Result<(), TableError> {
        write_text(path, &self.to_text())
    }

    pub fn load(path: &Path) -> Result<Self, TableError> {
        let text = fs::read_to_string(path).map_err(|source| TableError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<(), TableError> {
    fs::write(path, text).map_err(|source| TableError::Io { path: path.display().to_string(), source })
}

/// Metadata common to every output of one run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunInfo {
    pub config_hash: u64,
    pub seed: u64,
    pub trajectories: usize,
    pub window: (f64, f64),
}

impl RunInfo {
    pub fn new(cfg: &PhysicsConfig) -> Self {
        Self {
            config_hash: cfg.hash(),
            seed: cfg.numerics.seed,
            trajectories: cfg.numerics.trajectories,
            window: cfg.numerics.window,
        }
    }
}
