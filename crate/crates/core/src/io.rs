//! Tabular dataset input and output.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{KopiError, Result};
use crate::simgen::{center_columns, SimConfig, SimulatedDataset};

pub const RESPONSE_COLUMN: &str = "y";

/// Design with centred columns, response and feature names.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub names: Vec<String>,
    pub column_means: Vec<f64>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Reads a headed CSV with one `y` column; every other column is a numeric feature.
///
/// Parse errors report the 1-based line and column in the file.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    parse_dataset(&text)
}

pub fn parse_dataset(text: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.iter().all(|h| h.is_empty()) {
        return Err(KopiError::EmptyDataset("no header".into()));
    }
    let y_col = header
        .iter()
        .position(|h| h == RESPONSE_COLUMN)
        .ok_or_else(|| KopiError::Parse {
            row: 1,
            column: 0,
            message: format!("no column named {RESPONSE_COLUMN:?}"),
        })?;
    let names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != y_col)
        .map(|(_, h)| h.clone())
        .collect();
    if names.is_empty() {
        return Err(KopiError::EmptyDataset("no feature columns".into()));
    }

    let mut features = Vec::new();
    let mut response = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        if record.len() != header.len() {
            return Err(KopiError::Parse {
                row: line,
                column: record.len().min(header.len()) + 1,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| KopiError::Parse {
                row: line,
                column: j + 1,
                message: format!("{cell:?} is not a number"),
            })?;
            if !v.is_finite() {
                return Err(KopiError::Parse {
                    row: line,
                    column: j + 1,
                    message: format!("{cell:?} is not finite"),
                });
            }
            if j == y_col {
                response.push(v);
            } else {
                features.push(v);
            }
        }
    }
    let n = response.len();
    if n == 0 {
        return Err(KopiError::EmptyDataset("header without data rows".into()));
    }
    let mut x = DMatrix::from_row_slice(n, names.len(), &features);
    let column_means = center_columns(&mut x);
    Ok(Dataset {
        x,
        y: DVector::from_vec(response),
        names,
        column_means,
    })
}

pub fn feature_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("x{j}")).collect()
}

/// Writes features then `y`; values use the shortest round-trip representation.
pub fn write_dataset(path: &Path, x: &DMatrix<f64>, y: &DVector<f64>, names: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = names.iter().map(String::as_str).collect();
    header.push(RESPONSE_COLUMN);
    w.write_record(&header)?;
    for i in 0..x.nrows() {
        let mut row: Vec<String> = x.row(i).iter().map(|v| v.to_string()).collect();
        row.push(y[i].to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Ground truth written next to a simulated dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportSidecar {
    pub config: SimConfig,
    pub support: Vec<usize>,
    pub support_names: Vec<String>,
    pub beta: Vec<f64>,
    pub noise_scale: f64,
}

pub fn write_simulation(
    csv_path: &Path,
    sidecar_path: &Path,
    config: &SimConfig,
    data: &SimulatedDataset,
) -> Result<()> {
    let names = feature_names(data.p());
    write_dataset(csv_path, &data.design, &data.response, &names)?;
    let sidecar = SupportSidecar {
        config: config.clone(),
        support: data.support.clone(),
        support_names: data.support.iter().map(|&j| names[j].clone()).collect(),
        beta: data.beta.iter().copied().collect(),
        noise_scale: data.noise_scale,
    };
    fs::write(sidecar_path, serde_json::to_string_pretty(&sidecar)? + "\n")?;
    Ok(())
}
