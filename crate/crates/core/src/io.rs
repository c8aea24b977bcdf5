//! Plain-text serialization: headerless numeric CSV for matrices, `i,j` CSV
//! for edge lists, pretty JSON for reports.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so a
//! write-then-read cycle reproduces every `f64` exactly.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::SymMatrix;

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn csv_error(what: &str, e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::UnequalLengths {
            pos,
            expected_len,
            len,
        } => Error::Parse(format!(
            "{what} row {} has {len} columns, expected {expected_len}",
            pos.as_ref().map_or(0, |p| p.line())
        )),
        _ => Error::Parse(format!("{what}: {e}")),
    }
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> String {
    let bytes = w.into_inner().expect("writing to memory cannot fail");
    String::from_utf8(bytes).expect("csv output is UTF-8")
}

pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|v| v.to_string()))
            .expect("writing to memory cannot fail");
    }
    finish_csv(w)
}

/// Parses a headerless rectangular numeric CSV.
pub fn matrix_from_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in csv_reader(text).records() {
        let record = record.map_err(|e| csv_error("matrix", e))?;
        let line = record.position().map_or(0, |p| p.line());
        let row = record
            .iter()
            .enumerate()
            .map(|(col, field)| {
                field.parse::<f64>().map_err(|_| {
                    Error::Parse(format!(
                        "row {line}, column {}: cannot parse {field:?} as a number",
                        col + 1
                    ))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("matrix file is empty".into()));
    }
    let (n, m) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    write_text(path, &matrix_to_csv(m))
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    matrix_from_csv(&read_text(path)?)
}

/// Reads a square, exactly symmetric matrix; the error names the first
/// offending entry.
pub fn read_sym_matrix(path: &Path) -> Result<SymMatrix> {
    let m = read_matrix(path)?;
    if m.nrows() != m.ncols() {
        return Err(Error::Parse(format!(
            "{}: expected a square matrix, found {}x{}",
            path.display(),
            m.nrows(),
            m.ncols()
        )));
    }
    SymMatrix::new(m).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

#[derive(serde::Deserialize)]
struct EdgeRecord {
    i: usize,
    j: usize,
}

pub fn edges_to_csv(edges: impl IntoIterator<Item = (usize, usize)>) -> String {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(["i", "j"])
        .expect("writing to memory cannot fail");
    for (i, j) in edges {
        w.write_record([i.to_string(), j.to_string()])
            .expect("writing to memory cannot fail");
    }
    finish_csv(w)
}

/// Reads an `i,j` edge list with its header line.
pub fn edges_from_csv(text: &str) -> Result<Vec<(usize, usize)>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    reader
        .deserialize::<EdgeRecord>()
        .map(|rec| {
            rec.map(|e| (e.i, e.j))
                .map_err(|e| csv_error("edge list", e))
        })
        .collect()
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Numerical(format!("cannot serialize report: {e}")))?;
    write_text(path, &(text + "\n"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_errors_name_the_entry() {
        let err = matrix_from_csv("1,2\n3,x\n").unwrap_err();
        assert!(err.to_string().contains("row 2, column 2"), "{err}");
        let err = matrix_from_csv("1,2\n3\n").unwrap_err();
        assert!(err.to_string().contains("row 2 has 1 columns"), "{err}");
        assert!(matrix_from_csv("\n").is_err());
    }

    #[test]
    fn edges_round_trip() {
        let e = vec![(0, 3), (2, 5)];
        assert_eq!(edges_from_csv(&edges_to_csv(e.clone())).unwrap(), e);
        assert!(edges_from_csv("i,j\n1;2\n").is_err());
        assert!(edges_from_csv("i,j\n1,x\n").is_err());
        assert_eq!(edges_to_csv([]), "i,j\n");
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(vals in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 6)) {
            let m = DMatrix::from_row_slice(2, 3, &vals);
            let back = matrix_from_csv(&matrix_to_csv(&m)).unwrap();
            prop_assert_eq!(
                m.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                back.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }
}
