use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use symmix::{Dataset, Observation};

use crate::error::{CliError, CliResult};

/// Environment variable holding the default output directory.
pub const OUT_DIR_ENV: &str = "SYMMIX_OUT_DIR";

pub fn resolve_out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> CliResult<PathBuf> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(name);
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(path)
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> CliResult<PathBuf> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
        path: dir.join(name),
        source,
    })?;
    text.push('\n');
    write_text(dir, name, &text)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Read a comma-separated dataset with a header row; the last column is
/// the response, the others are design coordinates.
pub fn read_dataset(path: &Path) -> CliResult<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let width = reader.headers().map_err(|e| csv_err(path, e))?.len();
    if width < 2 {
        return Err(CliError::Csv {
            path: path.to_path_buf(),
            line: 1,
            message: format!("need at least two columns, found {width}"),
        });
    }
    let mut obs = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let mut values = Vec::with_capacity(width);
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| CliError::Csv {
                path: path.to_path_buf(),
                line,
                message: format!("column {}: '{field}' is not a number", col + 1),
            })?;
            if !v.is_finite() {
                return Err(CliError::Csv {
                    path: path.to_path_buf(),
                    line,
                    message: format!("column {}: non-finite value", col + 1),
                });
            }
            values.push(v);
        }
        let y = values.pop().unwrap_or_default();
        obs.push(Observation { x: values, y });
    }
    if obs.is_empty() {
        return Err(CliError::Validation(format!("{}: no data rows", path.display())));
    }
    Ok(Dataset::new(obs)?)
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        kind => CliError::Csv {
            path: path.to_path_buf(),
            line,
            message: csv_kind_message(kind),
        },
    }
}

fn csv_kind_message(kind: csv::ErrorKind) -> String {
    match kind {
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            format!("expected {expected_len} fields, found {len}")
        }
        csv::ErrorKind::Utf8 { err, .. } => format!("invalid UTF-8: {err}"),
        other => format!("{other:?}"),
    }
}

/// Column names for a `d`-dimensional design.
pub fn x_columns(d: usize) -> Vec<String> {
    if d == 1 {
        vec!["x".into()]
    } else {
        (1..=d).map(|j| format!("x{j}")).collect()
    }
}

pub fn dataset_csv(data: &Dataset) -> String {
    let mut out = x_columns(data.dim()).join(",");
    out.push_str(",y\n");
    for i in 0..data.len() {
        for v in data.x(i) {
            let _ = write!(out, "{v},");
        }
        let _ = writeln!(out, "{}", data.y(i));
    }
    out
}

/// File-name tag for a design point, e.g. `0.5` or `0.2_0.7`.
pub fn point_tag(x: &[f64]) -> String {
    x.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("_")
}
