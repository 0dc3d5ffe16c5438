use std::fs;
use std::path::Path;

use super::DataMatrix;
use crate::error::{Result, SomError};

/// Loads a comma-separated file of reals. Rows and columns in errors are 1-based
/// and count physical lines, header included.
pub fn load_csv(path: impl AsRef<Path>, has_header: bool) -> Result<DataMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| SomError::io(path, e))?;
    parse_csv(&text, has_header)
}

pub fn parse_csv(text: &str, has_header: bool) -> Result<DataMatrix> {
    let mut n_cols = 0usize;
    let mut n_rows = 0usize;
    let mut values = Vec::new();

    for (line_no, line) in text.lines().enumerate() {
        if line_no == 0 && has_header {
            continue;
        }
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let row = line_no + 1;
        let start = values.len();
        for (c, cell) in line.split(',').enumerate() {
            let cell = cell.trim();
            let v: f32 = cell.parse().map_err(|_| SomError::Parse {
                row,
                col: c + 1,
                msg: format!("cannot parse {cell:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(SomError::Parse {
                    row,
                    col: c + 1,
                    msg: format!("non-finite value {cell:?}"),
                });
            }
            values.push(v);
        }
        let found = values.len() - start;
        if n_rows == 0 {
            n_cols = found;
        } else if found != n_cols {
            return Err(SomError::Ragged {
                row,
                found,
                expected: n_cols,
            });
        }
        n_rows += 1;
    }

    if n_rows == 0 {
        return Err(SomError::Empty("csv contains no data rows".into()));
    }
    DataMatrix::new(n_rows, n_cols, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_plain_matrix() {
        let m = parse_csv("1,2\n3,4\n5,6", false).unwrap();
        assert_eq!((m.n_rows(), m.n_cols()), (3, 2));
        assert_eq!(m.values(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn skips_header() {
        let m = parse_csv("a,b\n1,2\n3,4\n", true).unwrap();
        assert_eq!(m.n_rows(), 2);
        assert_eq!(m.row(1), &[3.0, 4.0]);
    }

    #[test]
    fn reports_bad_cell_position() {
        let err = parse_csv("1,2\nabc,4\n", false).unwrap_err();
        match err {
            SomError::Parse { row, col, .. } => assert_eq!((row, col), (2, 1)),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_ragged_and_empty() {
        assert!(matches!(
            parse_csv("1,2\n3\n", false),
            Err(SomError::Ragged { row: 2, found: 1, expected: 2 })
        ));
        assert!(matches!(parse_csv("", false), Err(SomError::Empty(_))));
        assert!(matches!(parse_csv("x,y\n", true), Err(SomError::Empty(_))));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_csv("/nonexistent/definitely.csv", false),
            Err(SomError::Io { .. })
        ));
    }
}
