//! CSV and JSON artifacts.
//!
//! CSV layout: one `# column: name (unit)` line per column, a header row of
//! names, then one row per grid point. Values use 17 significant digits.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::experiments::{Column, ScanResult};

pub fn csv_text(scan: &ScanResult) -> String {
    let cols: Vec<&Column> = scan.columns().collect();
    let mut out = String::new();
    for c in &cols {
        out.push_str(&format!("# column: {} ({})\n", c.name, c.unit));
    }
    out.push_str(
        &cols
            .iter()
            .map(|c| c.name.as_str())
            .collect::<Vec<_>>()
            .join(","),
    );
    out.push('\n');
    for row in 0..scan.len() {
        let line: Vec<String> = cols
            .iter()
            .map(|c| format!("{:.16e}", c.values[row]))
            .collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn emit_csv(scan: &ScanResult, path: &Path) -> Result<()> {
    fs::write(path, csv_text(scan))?;
    Ok(())
}

/// Reads a CSV in the layout above. Units come from the comment block when
/// present.
pub fn read_csv(path: &Path) -> Result<Vec<Column>> {
    let text = fs::read_to_string(path)?;
    let mut units: Vec<(String, String)> = Vec::new();
    let mut columns: Option<Vec<Column>> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(spec) = rest.trim().strip_prefix("column:") {
                if let Some((name, unit)) = spec.trim().split_once(" (") {
                    units.push((name.to_string(), unit.trim_end_matches(')').to_string()));
                }
            }
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        match columns.as_mut() {
            None => {
                columns = Some(
                    cells
                        .iter()
                        .map(|name| {
                            let unit = units
                                .iter()
                                .find(|(n, _)| n == name)
                                .map_or("", |(_, u)| u.as_str());
                            Column::new(*name, unit, Vec::new())
                        })
                        .collect(),
                );
            }
            Some(cols) => {
                if cells.len() != cols.len() {
                    return Err(Error::InvalidArgument(format!(
                        "{}:{}: expected {} fields, found {}",
                        path.display(),
                        idx + 1,
                        cols.len(),
                        cells.len()
                    )));
                }
                for (col, cell) in cols.iter_mut().zip(&cells) {
                    let v: f64 = cell.parse().map_err(|_| {
                        Error::InvalidArgument(format!(
                            "{}:{}: '{cell}' is not a number",
                            path.display(),
                            idx + 1
                        ))
                    })?;
                    col.values.push(v);
                }
            }
        }
    }
    columns.ok_or_else(|| Error::InvalidArgument(format!("{} has no header row", path.display())))
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
