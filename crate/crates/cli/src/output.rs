//! CSV tables, atomic file writes, manifest and error records.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value as Json};
use tempfile::NamedTempFile;

use crate::config::{RunConfig, Value};
use crate::CliError;

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// 17 significant digits; `inf`, `-inf` and `nan` for non-finite values.
/// Negative zero prints as zero.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        "0.0000000000000000e0".into()
    } else if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(usize),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => fmt_num(*x),
            Cell::Int(n) => n.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::Num)
    }
}

impl From<usize> for Cell {
    fn from(n: usize) -> Self {
        Cell::Int(n)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Int(b as usize)
    }
}

/// A named CSV file.
#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&'static str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self, config: &RunConfig) -> String {
        let mut s = format!("# {TOOL} {VERSION}\n");
        for (k, v) in &config.resolved {
            s.push_str(&format!("# {k} = {v}\n"));
        }
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

/// Writes `contents` to a temporary file next to `path`, then renames it.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let io = |source: std::io::Error| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn json_value(v: &Value) -> Json {
    match v {
        Value::Num(x) => json!(x),
        Value::Int(n) => json!(n),
        Value::Text(s) => json!(s),
        Value::List(xs) => json!(xs),
    }
}

/// Outcome of a run as recorded in the manifest.
#[derive(Debug, Default)]
pub struct Report {
    pub tables: Vec<Table>,
    /// Scalar results (fits, step counts, ...), in insertion order.
    pub summary: Vec<(String, Json)>,
}

impl Report {
    pub fn note(&mut self, key: &str, value: impl Into<Json>) {
        self.summary.push((key.to_string(), value.into()));
    }
}

pub fn manifest(config: &RunConfig, report: &Report, error: Option<&CliError>) -> String {
    let params: Map<String, Json> = config
        .resolved
        .iter()
        .map(|(k, v)| (k.to_string(), json_value(v)))
        .collect();
    let summary: Map<String, Json> = report.summary.iter().cloned().collect();
    let files: Vec<String> = report.tables.iter().map(|t| format!("{}.csv", t.name)).collect();
    let m = json!({
        "tool": TOOL,
        "version": VERSION,
        "experiment": config.experiment.name(),
        "status": if error.is_some() { "failed" } else { "ok" },
        "parameters": params,
        "outputs": files,
        "summary": summary,
    });
    let mut s = serde_json::to_string_pretty(&m).expect("serializable");
    s.push('\n');
    s
}

pub fn error_record(error: &CliError) -> String {
    let mut m = json!({
        "tool": TOOL,
        "version": VERSION,
        "status": "error",
        "kind": error.kind(),
        "exit_code": error.exit_code(),
        "message": error.to_string(),
    });
    if let CliError::Config { key: Some(k), .. } = error {
        m["key"] = json!(k);
    }
    if let CliError::Io { path, .. } = error {
        m["path"] = json!(path.display().to_string());
    }
    serde_json::to_string(&m).expect("serializable")
}

/// Writes every table, the manifest and, on failure, `error.json`. A stale
/// `error.json` from an earlier run is removed on success.
pub fn write_outputs(config: &RunConfig, report: &Report, error: Option<&CliError>) -> Result<Vec<PathBuf>, CliError> {
    let dir = &config.output_dir;
    ensure_dir(dir)?;
    let mut written = Vec::new();
    for t in &report.tables {
        let path = dir.join(format!("{}.csv", t.name));
        write_atomic(&path, t.render(config).as_bytes())?;
        written.push(path);
    }
    let path = dir.join("manifest.json");
    write_atomic(&path, manifest(config, report, error).as_bytes())?;
    written.push(path);
    let err_path = dir.join("error.json");
    match error {
        Some(e) => {
            let mut rec = error_record(e);
            rec.push('\n');
            write_atomic(&err_path, rec.as_bytes())?;
            written.push(err_path);
        }
        None => match fs::remove_file(&err_path) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(source) => return Err(CliError::Io { path: err_path, source }),
        },
    }
    Ok(written)
}
