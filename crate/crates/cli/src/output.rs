//! Output files and the run manifest.
//!
//! Every text file starts with the manifest header: as `#` comment lines in
//! CSV and summary files, as the `manifest` member of JSON files. The numeric
//! payload is everything else (non-comment CSV lines, the `data` member of
//! JSON files). `manifest.json` adds the SHA-256 digest of every emitted file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use stochnls::io::fmt_f64;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestHeader {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub workers: usize,
    pub available_parallelism: usize,
}

#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    #[serde(flatten)]
    pub header: &'a ManifestHeader,
    /// File name to lowercase hex SHA-256 of its bytes.
    pub outputs: BTreeMap<String, String>,
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

/// One table cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    I(u64),
    S(String),
    Missing,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::F(x) => fmt_f64(*x),
            Cell::I(i) => i.to_string(),
            Cell::S(s) => s.clone(),
            Cell::Missing => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::F(x) => serde_json::Number::from_f64(*x).map_or(Value::Null, Value::Number),
            Cell::I(i) => Value::from(*i),
            Cell::S(s) => Value::from(s.clone()),
            Cell::Missing => Value::Null,
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::F(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Missing, Cell::F)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::I(x as u64)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::I(x)
    }
}

#[derive(Debug, Clone, Default)]
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
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn csv_body(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.iter().map(Cell::csv).collect::<Vec<_>>().join(","));
            s.push('\n');
        }
        s
    }

    fn json_value(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|r| {
                    Value::Object(
                        self.columns
                            .iter()
                            .cloned()
                            .zip(r.iter().map(Cell::json))
                            .collect(),
                    )
                })
                .collect(),
        )
    }
}

/// Collects output files in memory and writes them with the manifest.
pub struct Outputs {
    dir: PathBuf,
    format: Format,
    files: Vec<(String, Vec<u8>)>,
    pending: Vec<Pending>,
}

enum Pending {
    Table { stem: String, table: Table, extra: Option<Value> },
    Text { name: String, body: String },
    Binary { name: String, bytes: Vec<u8> },
}

impl Outputs {
    pub fn new(dir: &Path, format: Format) -> Self {
        Self {
            dir: dir.to_path_buf(),
            format,
            files: Vec::new(),
            pending: Vec::new(),
        }
    }

    /// `stem.csv` or `stem.json` depending on the format. In JSON, `extra`
    /// (for example a fitted rate) is stored next to the rows.
    pub fn table(&mut self, stem: &str, table: Table, extra: Option<Value>) {
        self.pending.push(Pending::Table {
            stem: stem.to_string(),
            table,
            extra,
        });
    }

    pub fn text(&mut self, name: &str, body: String) {
        self.pending.push(Pending::Text {
            name: name.to_string(),
            body,
        });
    }

    pub fn binary(&mut self, name: &str, bytes: Vec<u8>) {
        self.pending.push(Pending::Binary {
            name: name.to_string(),
            bytes,
        });
    }

    /// Renders every file, writes them and `manifest.json`. Returns the
    /// written paths.
    pub fn finish(mut self, header: &ManifestHeader) -> Result<Vec<PathBuf>, CliError> {
        let header_json = serde_json::to_string(header).map_err(|e| CliError::Other(e.to_string()))?;
        let comment = format!("# {} {} {}\n# manifest {header_json}\n", header.tool, header.version, header.command);
        for p in std::mem::take(&mut self.pending) {
            let (name, bytes) = match p {
                Pending::Table { stem, table, extra } => match self.format {
                    Format::Csv => (format!("{stem}.csv"), format!("{comment}{}", table.csv_body()).into_bytes()),
                    Format::Json => {
                        let mut data = serde_json::Map::new();
                        data.insert("rows".into(), table.json_value());
                        if let Some(x) = extra {
                            data.insert("summary".into(), x);
                        }
                        let doc = serde_json::json!({ "manifest": header, "data": Value::Object(data) });
                        let mut s = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Other(e.to_string()))?;
                        s.push('\n');
                        (format!("{stem}.json"), s.into_bytes())
                    }
                },
                Pending::Text { name, body } => (name, format!("{comment}{body}").into_bytes()),
                Pending::Binary { name, bytes } => (name, bytes),
            };
            self.files.push((name, bytes));
        }

        fs::create_dir_all(&self.dir)?;
        let mut digests = BTreeMap::new();
        let mut paths = Vec::new();
        for (name, bytes) in &self.files {
            let path = self.dir.join(name);
            fs::write(&path, bytes)?;
            digests.insert(name.clone(), hex::encode(Sha256::digest(bytes)));
            paths.push(path);
        }
        let manifest = RunManifest {
            header,
            outputs: digests,
        };
        let mut s = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Other(e.to_string()))?;
        s.push('\n');
        let path = self.dir.join("manifest.json");
        fs::write(&path, s)?;
        paths.push(path);
        Ok(paths)
    }
}
