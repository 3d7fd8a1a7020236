use std::fs::{self, File};
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::CliError;

pub const SCHEMA_VERSION: &str = "1";

/// 17 significant digits, enough to round-trip any `f64`.
pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

fn io(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn write_csv(dir: &Path, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let path = dir.join(name);
    let mut w =
        csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(&path).map_err(|e| io(&path, e))?;
    w.write_record(header).map_err(|e| io(&path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| io(&path, e))?;
    }
    w.flush().map_err(|e| io(&path, e))
}

pub fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io(&path, e))?;
    text.push('\n');
    File::create(&path).and_then(|mut f| f.write_all(text.as_bytes())).map_err(|e| io(&path, e))
}
