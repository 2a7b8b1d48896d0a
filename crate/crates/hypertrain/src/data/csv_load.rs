use std::path::Path;

use crate::error::{Error, Result};
use crate::real::Real;

use super::{Dataset, Targets};

/// Shape of a numeric CSV: which columns are targets, whether the first
/// line is a header, and the field delimiter.
#[derive(Clone, Debug)]
pub struct CsvSchema {
    pub target_cols: Vec<usize>,
    pub has_header: bool,
    pub delimiter: u8,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            target_cols: Vec::new(),
            has_header: false,
            delimiter: b',',
        }
    }
}

impl CsvSchema {
    /// Targets in the given 0-based columns, comma-delimited, no header.
    pub fn targets(cols: &[usize]) -> Self {
        CsvSchema {
            target_cols: cols.to_vec(),
            ..Default::default()
        }
    }
}

/// Load a fully numeric CSV as a regression dataset.
///
/// Every non-target column is a feature. Parse failures and ragged rows
/// are ingestion errors naming the file, 1-based row (header included in
/// the count) and 1-based column.
pub fn load_csv<F: Real>(path: impl AsRef<Path>, schema: &CsvSchema, name: &str) -> Result<Dataset<F>> {
    let path = path.as_ref();
    let path_str = path.display().to_string();
    if schema.target_cols.is_empty() {
        return Err(Error::config(format!(
            "schema for {name} declares no target column"
        )));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(schema.has_header)
        .delimiter(schema.delimiter)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Ingest {
            path: path_str.clone(),
            row: 0,
            col: 0,
            message: e.to_string(),
        })?;

    let mut width: Option<usize> = None;
    let mut x: Vec<F> = Vec::new();
    let mut y: Vec<F> = Vec::new();
    let header_rows = usize::from(schema.has_header);
    for (i, record) in reader.records().enumerate() {
        let row = i + 1 + header_rows;
        let record = record.map_err(|e| Error::Ingest {
            path: path_str.clone(),
            row,
            col: 0,
            message: e.to_string(),
        })?;
        if record.len() == 1 && record[0].is_empty() {
            continue; // blank trailing line
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(Error::Ingest {
                path: path_str.clone(),
                row,
                col: record.len(),
                message: format!("row has {} fields, expected {w}", record.len()),
            });
        }
        if let Some(&bad) = schema.target_cols.iter().find(|&&c| c >= w) {
            return Err(Error::config(format!(
                "target column {bad} out of range for {w}-column file {path_str}"
            )));
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Ingest {
                path: path_str.clone(),
                row,
                col: c + 1,
                message: format!("non-numeric value {field:?}"),
            })?;
            if schema.target_cols.contains(&c) {
                y.push(F::from_f64(v));
            } else {
                x.push(F::from_f64(v));
            }
        }
    }
    let w = width.ok_or_else(|| Error::Ingest {
        path: path_str.clone(),
        row: 0,
        col: 0,
        message: "file contains no data rows".into(),
    })?;
    let out_dim = schema.target_cols.len();
    Dataset::new(
        name,
        w - out_dim,
        x,
        Targets::Values {
            values: y,
            out_dim,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_features_and_target() {
        let f = write_tmp("1,2,3\n4,5,6\n7,8,9\n");
        let ds: Dataset<f64> = load_csv(f.path(), &CsvSchema::targets(&[2]), "t").unwrap();
        assert_eq!((ds.n, ds.d), (3, 2));
        assert_eq!(ds.x, vec![1.0, 2.0, 4.0, 5.0, 7.0, 8.0]);
        match ds.y {
            Targets::Values { values, out_dim } => {
                assert_eq!(values, vec![3.0, 6.0, 9.0]);
                assert_eq!(out_dim, 1);
            }
            _ => panic!("expected values"),
        }
    }

    #[test]
    fn header_is_skipped_when_declared() {
        let f = write_tmp("a,b\n1,2\n3,4\n");
        let schema = CsvSchema {
            target_cols: vec![1],
            has_header: true,
            delimiter: b',',
        };
        let ds: Dataset<f64> = load_csv(f.path(), &schema, "t").unwrap();
        assert_eq!(ds.n, 2);
    }

    #[test]
    fn non_numeric_cell_names_row_and_column() {
        let f = write_tmp("1,2\n3,oops\n");
        let err = load_csv::<f64>(f.path(), &CsvSchema::targets(&[1]), "t").unwrap_err();
        match err {
            Error::Ingest { row, col, .. } => {
                assert_eq!((row, col), (2, 2));
            }
            other => panic!("expected ingest error, got {other:?}"),
        }
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let f = write_tmp("1,2,3\n4,5\n");
        let err = load_csv::<f64>(f.path(), &CsvSchema::targets(&[0]), "t").unwrap_err();
        assert!(matches!(err, Error::Ingest { row: 2, .. }));
    }

    #[test]
    fn missing_file_is_an_ingest_error() {
        let err = load_csv::<f64>("/nonexistent/x.csv", &CsvSchema::targets(&[0]), "t");
        assert!(err.is_err());
    }
}
