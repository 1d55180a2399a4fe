//! CSV interchange for composition and coefficient matrices.
//!
//! Tabular files carry a header of component names followed by numeric
//! rows. Coefficient tables additionally carry a leading `component`
//! column naming the predictor component of each row.

use crate::scls::{CoefficientMatrix, FitError};
use crate::simplex::{CompositionMatrix, SimplexError};
use ndarray::Array2;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}, column {col}: cannot parse {value:?} as a number")]
    Parse {
        row: usize,
        col: usize,
        value: String,
    },
    #[error("row {row} has {got} fields, expected {expected}")]
    Ragged {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("file contains no data rows")]
    Empty,
    #[error("no column named {0:?}")]
    MissingColumn(String),
    #[error(transparent)]
    Simplex(#[from] SimplexError),
    #[error(transparent)]
    Fit(#[from] FitError),
}

/// How to read a composition table.
#[derive(Debug, Clone, Default)]
pub struct ReadOptions {
    /// Renormalize rows to unit sum instead of requiring it.
    pub force_closure: bool,
    /// Name of a non-numeric column holding group labels, extracted
    /// instead of parsed.
    pub group_column: Option<String>,
}

/// A parsed composition table, with group labels when one was requested.
#[derive(Debug)]
pub struct CompositionTable {
    pub matrix: CompositionMatrix,
    /// Group id per row, in first-appearance order of the labels.
    pub groups: Option<Vec<usize>>,
}

pub fn read_composition_csv(
    path: &Path,
    options: &ReadOptions,
) -> Result<CompositionTable, IoError> {
    let file = std::fs::File::open(path)?;
    read_composition(file, options)
}

pub fn read_composition<R: Read>(
    reader: R,
    options: &ReadOptions,
) -> Result<CompositionTable, IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();

    let group_idx = match &options.group_column {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| IoError::MissingColumn(name.clone()))?,
        ),
        None => None,
    };
    let value_cols: Vec<usize> = (0..headers.len())
        .filter(|i| Some(*i) != group_idx)
        .collect();
    let names: Vec<String> = value_cols.iter().map(|&i| headers[i].clone()).collect();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(IoError::Ragged {
                row: r + 1,
                expected: headers.len(),
                got: record.len(),
            });
        }
        let mut row = Vec::with_capacity(value_cols.len());
        for &c in &value_cols {
            let field = &record[c];
            let v: f64 = field.parse().map_err(|_| IoError::Parse {
                row: r + 1,
                col: c,
                value: field.to_string(),
            })?;
            row.push(v);
        }
        rows.push(row);
        if let Some(g) = group_idx {
            labels.push(record[g].to_string());
        }
    }
    if rows.is_empty() {
        return Err(IoError::Empty);
    }

    let mut data = Array2::zeros((rows.len(), value_cols.len()));
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            data[[i, j]] = v;
        }
    }
    let matrix = if options.force_closure {
        CompositionMatrix::closure(data, Some(names))?
    } else {
        // values carry 6 significant digits on disk, so row sums can drift
        // beyond the in-memory invariant; validate at the format precision,
        // then renormalize exactly
        const CSV_TOLERANCE: f64 = 1e-4;
        for (i, row) in data.rows().into_iter().enumerate() {
            let sum: f64 = row.sum();
            if (sum - 1.0).abs() > CSV_TOLERANCE {
                return Err(IoError::Simplex(SimplexError::RowNotOnSimplex {
                    row: i,
                    sum,
                }));
            }
            for (j, &v) in row.iter().enumerate() {
                if v < -CSV_TOLERANCE {
                    return Err(IoError::Simplex(SimplexError::NegativeEntry(j)));
                }
            }
        }
        data.mapv_inplace(|v| v.max(0.0));
        CompositionMatrix::closure(data, Some(names))?
    };
    let groups = group_idx.map(|_| {
        let mut seen: Vec<&str> = Vec::new();
        labels
            .iter()
            .map(|l| match seen.iter().position(|&s| s == l) {
                Some(i) => i,
                None => {
                    seen.push(l);
                    seen.len() - 1
                }
            })
            .collect()
    });
    Ok(CompositionTable { matrix, groups })
}

/// Format with 6 significant digits, the precision of tabular outputs.
pub fn format_sig6(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    format!("{v:.*}", sig6_decimals(v))
}

fn sig6_decimals(v: f64) -> usize {
    let magnitude = v.abs().log10().floor() as i64;
    (5 - magnitude).max(0) as usize
}

fn component_names(names: Option<&[String]>, prefix: &str, count: usize) -> Vec<String> {
    match names {
        Some(n) => n.to_vec(),
        None => (1..=count).map(|i| format!("{prefix}{i}")).collect(),
    }
}

/// Coefficient table: `component` column with predictor names, then one
/// column per response component. Values carry 6 significant digits; the
/// JSON artifact holds full precision.
pub fn write_coefficient_csv<W: Write>(writer: W, b: &CoefficientMatrix) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let pred = component_names(b.predictor_names(), "x", b.nrows());
    let resp = component_names(b.response_names(), "y", b.ncols());
    let mut header = vec!["component".to_string()];
    header.extend(resp);
    wtr.write_record(&header)?;
    for (name, row) in pred.iter().zip(b.as_array().rows()) {
        let mut record = vec![name.clone()];
        record.extend(row.iter().map(|&v| format_sig6(v)));
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Read a coefficient table written by [`write_coefficient_csv`]; a plain
/// all-numeric table without the `component` column is accepted too.
pub fn read_coefficient_csv(path: &Path) -> Result<CoefficientMatrix, IoError> {
    let file = std::fs::File::open(path)?;
    read_coefficients(file)
}

pub fn read_coefficients<R: Read>(reader: R) -> Result<CoefficientMatrix, IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let named = headers.first().map(String::as_str) == Some("component");
    let skip = usize::from(named);
    let resp: Vec<String> = headers[skip..].to_vec();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut pred: Vec<String> = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(IoError::Ragged {
                row: r + 1,
                expected: headers.len(),
                got: record.len(),
            });
        }
        if named {
            pred.push(record[0].to_string());
        }
        let mut row = Vec::with_capacity(resp.len());
        for c in skip..record.len() {
            let field = &record[c];
            row.push(field.parse().map_err(|_| IoError::Parse {
                row: r + 1,
                col: c,
                value: field.to_string(),
            })?);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(IoError::Empty);
    }
    // the table carries 6 significant digits, so row sums can drift by
    // more than the coefficient invariant allows; validate against the
    // format precision and renormalize
    const CSV_TOLERANCE: f64 = 1e-4;
    let mut data = Array2::zeros((rows.len(), resp.len()));
    for (i, row) in rows.iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > CSV_TOLERANCE {
            return Err(FitError::InvalidCoefficients(format!("row {i} sums to {sum}")).into());
        }
        for (j, &v) in row.iter().enumerate() {
            if !(-CSV_TOLERANCE..=1.0 + CSV_TOLERANCE).contains(&v) {
                return Err(FitError::InvalidCoefficients(format!(
                    "entry ({i},{j}) = {v} outside [0,1]"
                ))
                .into());
            }
            data[[i, j]] = v.clamp(0.0, 1.0) / sum;
        }
    }
    Ok(CoefficientMatrix::with_names(
        data,
        named.then_some(pred),
        Some(resp),
    )?)
}

/// Composition table with 6-significant-digit values.
pub fn write_composition_csv<W: Write>(writer: W, m: &CompositionMatrix) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let names = component_names(m.component_names(), "y", m.ncols());
    wtr.write_record(&names)?;
    for row in m.as_array().rows() {
        let record: Vec<String> = row.iter().map(|&v| format_sig6(v)).collect();
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}
