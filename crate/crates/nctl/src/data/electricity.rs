//! The Electricity (Elec2) market dataset: 45,312 half-hourly records with
//! a binary UP/DOWN price-movement class.

use std::path::Path;

use crate::error::{NctlError, Result};

pub const ELECTRICITY_ROWS: usize = 45_312;
/// Feature columns, in the order they are fed to the learner.
pub const ELECTRICITY_FEATURES: [&str; 5] = ["day", "period", "nswdemand", "vicdemand", "transfer"];

#[derive(Clone, Debug, PartialEq)]
pub struct ElectricityData {
    pub features: Vec<[f64; 5]>,
    pub labels: Vec<bool>,
}

fn format_error(path: &Path, detail: String) -> NctlError {
    NctlError::Format {
        path: path.to_path_buf(),
        detail,
    }
}

/// Parse the CSV without checking the row count.
pub fn parse_electricity(path: &Path) -> Result<ElectricityData> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => NctlError::io(path, io),
            other => format_error(path, format!("{other:?}")),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| format_error(path, e.to_string()))?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| format_error(path, format!("missing column {name:?}")))
    };
    let feature_cols = ELECTRICITY_FEATURES
        .iter()
        .map(|c| column(c))
        .collect::<Result<Vec<_>>>()?;
    let class_col = column("class")?;

    let mut data = ElectricityData {
        features: Vec::new(),
        labels: Vec::new(),
    };
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| format_error(path, e.to_string()))?;
        let row = line + 2;
        let mut f = [0.0; 5];
        for (slot, &c) in f.iter_mut().zip(&feature_cols) {
            let raw = record.get(c).unwrap_or("");
            *slot = raw
                .parse()
                .map_err(|_| format_error(path, format!("row {row}: cannot parse {raw:?}")))?;
        }
        let label = match record.get(class_col).unwrap_or("").trim_matches('\'') {
            c if c.eq_ignore_ascii_case("up") => true,
            c if c.eq_ignore_ascii_case("down") => false,
            other => {
                return Err(format_error(
                    path,
                    format!("row {row}: unknown class {other:?}"),
                ))
            }
        };
        data.features.push(f);
        data.labels.push(label);
    }
    Ok(data)
}

/// Parse and check the row count.
pub fn load_electricity(path: &Path) -> Result<ElectricityData> {
    let data = parse_electricity(path)?;
    if data.labels.len() != ELECTRICITY_ROWS {
        return Err(NctlError::Integrity(format!(
            "{} has {} rows, expected {ELECTRICITY_ROWS}",
            path.display(),
            data.labels.len()
        )));
    }
    Ok(data)
}
