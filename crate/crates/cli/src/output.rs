//! CSV and text emission. Floats use Rust's shortest round-trip formatting,
//! so identical values always produce identical bytes.

use std::path::Path;

use crate::CliError;

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Header plus rows, each cell already rendered.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(())
}

pub fn num(x: f64) -> String {
    format!("{x}")
}
