//! CSV matrices: comma separated, `.` decimal point, one header line, one
//! observation per row.

use crate::error::{AsccaError, Result};
use crate::scalar::{lit, to_f64, Scalar};
use nalgebra::DMatrix;
use std::io::{Read, Write};
use std::path::Path;

/// A parsed CSV matrix with its header.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvMatrix<T: Scalar> {
    pub header: Vec<String>,
    pub data: DMatrix<T>,
}

pub fn read_matrix_csv<T: Scalar>(path: &Path) -> Result<CsvMatrix<T>> {
    let file = std::fs::File::open(path)
        .map_err(|e| AsccaError::Io(format!("{}: {e}", path.display())))?;
    parse_matrix_csv(file)
}

/// Parses CSV from any reader. Line numbers in errors are one based and
/// count the header line.
pub fn parse_matrix_csv<T: Scalar, R: Read>(reader: R) -> Result<CsvMatrix<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(e, 1))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(AsccaError::Parse {
            line: 1,
            column: 1,
            message: "missing header".into(),
        });
    }
    let cols = header.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(e, rows + 2))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(rows + 2);
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| AsccaError::Parse {
                line,
                column: j + 1,
                message: format!("'{field}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(AsccaError::Parse {
                    line,
                    column: j + 1,
                    message: format!("'{field}' is not finite"),
                });
            }
            values.push(lit::<T>(v));
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(AsccaError::Parse {
            line: 2,
            column: 1,
            message: "no data rows".into(),
        });
    }
    Ok(CsvMatrix {
        header,
        data: DMatrix::from_row_slice(rows, cols, &values),
    })
}

fn csv_error(e: csv::Error, fallback_line: usize) -> AsccaError {
    let line = e
        .position()
        .map(|p| p.line() as usize)
        .unwrap_or(fallback_line);
    let message = match e.kind() {
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            format!("expected {expected_len} fields, found {len}")
        }
        _ => e.to_string(),
    };
    AsccaError::Parse {
        line,
        column: 1,
        message,
    }
}

/// Column names `prefix1 .. prefixK`.
pub fn default_header(prefix: &str, cols: usize) -> Vec<String> {
    (1..=cols).map(|j| format!("{prefix}{j}")).collect()
}

/// Writes `m` row-major with the given header. Values use Rust's shortest
/// round-trip formatting, so equal matrices produce identical bytes.
pub fn write_matrix_csv<T: Scalar, W: Write>(out: W, header: &[String], m: &DMatrix<T>) -> Result<()> {
    if header.len() != m.ncols() {
        return Err(AsccaError::dims(
            "write_matrix_csv",
            format!("{} header names", m.ncols()),
            format!("{}", header.len()),
        ));
    }
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| AsccaError::Io(e.to_string());
    w.write_record(header).map_err(io)?;
    for i in 0..m.nrows() {
        w.write_record((0..m.ncols()).map(|j| format!("{}", to_f64(m[(i, j)]))))
            .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_matrix_csv<T: Scalar>(path: &Path, prefix: &str, m: &DMatrix<T>) -> Result<()> {
    let file = std::fs::File::create(path)
        .map_err(|e| AsccaError::Io(format!("{}: {e}", path.display())))?;
    write_matrix_csv(std::io::BufWriter::new(file), &default_header(prefix, m.ncols()), m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_numbers() {
        let m: CsvMatrix<f64> = parse_matrix_csv("a,b\n1,2.5\n-3,4e-1\n".as_bytes()).unwrap();
        assert_eq!(m.header, vec!["a", "b"]);
        assert_eq!(m.data, DMatrix::from_row_slice(2, 2, &[1.0, 2.5, -3.0, 0.4]));
    }

    #[test]
    fn reports_bad_cell_location() {
        let err = parse_matrix_csv::<f64, _>("a,b\n1,2\n3,x\n".as_bytes()).unwrap_err();
        assert_eq!(
            err,
            AsccaError::Parse {
                line: 3,
                column: 2,
                message: "'x' is not a number".into()
            }
        );
        let ragged = parse_matrix_csv::<f64, _>("a,b\n1,2\n3\n".as_bytes()).unwrap_err();
        assert!(matches!(ragged, AsccaError::Parse { line: 3, .. }));
        assert!(parse_matrix_csv::<f64, _>("a,b\n".as_bytes()).is_err());
    }

    #[test]
    fn write_then_read() {
        let m = DMatrix::from_row_slice(2, 3, &[0.1, -2.0, 1e-17, 3.0, 4.5, 1.0 / 3.0]);
        let mut buf = Vec::new();
        write_matrix_csv(&mut buf, &default_header("x", 3), &m).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x1,x2,x3\n"));
        let back: CsvMatrix<f64> = parse_matrix_csv(buf.as_slice()).unwrap();
        assert_eq!(back.data, m);
    }
}
