//! Versioned CSV and JSON artifacts, written atomically.
//!
//! CSV files start with `#` comment lines carrying the schema version, the
//! crate version and the resolved parameters, followed by a header row.
//! Nothing time- or host-dependent is written, so equal inputs give
//! byte-identical files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::Params;

/// Bumped whenever a column or JSON field changes meaning.
pub const SCHEMA_VERSION: u32 = 1;
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Tabular output: column names plus rows of already formatted cells.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

/// Shortest round-trip representation; `NA` for undefined values.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        "NA".into()
    }
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".into(), num)
}

/// Metadata embedded in every JSON artifact.
#[derive(Debug, Clone, Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub schema_version: u32,
    pub version: &'static str,
    pub kind: &'a str,
    pub params: &'a Params,
    #[serde(flatten)]
    pub body: T,
}

pub fn envelope<'a, T: Serialize>(kind: &'a str, params: &'a Params, body: T) -> Envelope<'a, T> {
    Envelope {
        schema_version: SCHEMA_VERSION,
        version: VERSION,
        kind,
        params,
        body,
    }
}

pub fn csv_bytes(kind: &str, params: &Params, extra: &[String], table: &Table) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    writeln!(buf, "# schema_version={SCHEMA_VERSION}").expect("write to Vec");
    writeln!(buf, "# qrouter {VERSION} {kind}").expect("write to Vec");
    writeln!(buf, "# params: {}", params.summary()).expect("write to Vec");
    for line in extra {
        writeln!(buf, "# {line}").expect("write to Vec");
    }
    let mut w = csv::Writer::from_writer(buf);
    w.write_record(&table.columns)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    w.into_inner()
        .map_err(|e| Error::Csv(e.into_error().into()))
}

/// Write `bytes` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io_err)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(bytes).map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

/// Destination directory for a command's artifacts.
#[derive(Debug, Clone)]
pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_csv(
        &self,
        name: &str,
        kind: &str,
        params: &Params,
        extra: &[String],
        table: &Table,
    ) -> Result<PathBuf> {
        let path = self.path(name);
        write_atomic(&path, &csv_bytes(kind, params, extra, table)?)?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, kind: &str, params: &Params, body: T) -> Result<PathBuf> {
        let path = self.path(name);
        let mut bytes = serde_json::to_vec_pretty(&envelope(kind, params, body))?;
        bytes.push(b'\n');
        write_atomic(&path, &bytes)?;
        Ok(path)
    }
}
