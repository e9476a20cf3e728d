use std::path::Path;

use ndarray::Array2;

use super::{Dataset, Split};
use crate::error::{Error, Result};

/// Reads a numeric CSV with a header row.
///
/// `label_column` is a header name or a zero-based column index. Labels must
/// be non-negative integers; the class count is one past the largest label
/// unless `class_count` is given. Rows come back unnormalized; see
/// [`super::normalize_splits`].
pub fn load_csv(
    path: impl AsRef<Path>,
    label_column: &str,
    class_count: Option<usize>,
    split: Split,
) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, 0, "-", e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| csv_error(path, 0, "-", e.to_string()))?
        .clone();
    let label_index = headers
        .iter()
        .position(|h| h == label_column)
        .or_else(|| label_column.parse::<usize>().ok())
        .filter(|&i| i < headers.len())
        .ok_or_else(|| {
            csv_error(
                path,
                0,
                label_column,
                format!("label column not found among {} columns", headers.len()),
            )
        })?;

    let width = headers.len() - 1;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        // data rows are numbered from 1; the header is row 0
        let row = i + 1;
        let record = record.map_err(|e| csv_error(path, row, "-", e.to_string()))?;
        if record.len() != headers.len() {
            return Err(csv_error(
                path,
                row,
                "-",
                format!("expected {} fields, found {}", headers.len(), record.len()),
            ));
        }
        for (col, cell) in record.iter().enumerate() {
            let name = headers.get(col).unwrap_or("?");
            if col == label_index {
                if cell.is_empty() {
                    return Err(csv_error(path, row, name, "missing label".into()));
                }
                let label = cell.parse::<usize>().map_err(|_| {
                    csv_error(
                        path,
                        row,
                        name,
                        format!("label '{cell}' is not a class index"),
                    )
                })?;
                labels.push(label);
            } else {
                let v = cell
                    .parse::<f64>()
                    .map_err(|_| csv_error(path, row, name, format!("'{cell}' is not a number")))?;
                if !v.is_finite() {
                    return Err(csv_error(
                        path,
                        row,
                        name,
                        format!("'{cell}' is not finite"),
                    ));
                }
                values.push(v);
            }
        }
    }
    let rows = labels.len();
    let classes = match class_count {
        Some(c) => c,
        None => labels.iter().max().map_or(2, |&m| (m + 1).max(2)),
    };
    if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
        return Err(csv_error(
            path,
            i + 1,
            headers.get(label_index).unwrap_or("?"),
            format!("label {l} out of range for {classes} classes"),
        ));
    }
    let features = Array2::from_shape_vec((rows, width), values)
        .map_err(|e| csv_error(path, 0, "-", e.to_string()))?;
    Dataset::new(features, labels, classes, split)
}

fn csv_error(path: &Path, row: usize, column: &str, message: String) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        row,
        column: column.to_string(),
        message,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::io::Write;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn parses_small_file() {
        let f = write("x,label,y\n1.5,0,-2\n0,1,3e-1\n-4,2,7\n");
        let d = load_csv(f.path(), "label", None, Split::Train).unwrap();
        assert_eq!(d.features(), &array![[1.5, -2.0], [0.0, 0.3], [-4.0, 7.0]]);
        assert_eq!(d.labels(), &[0, 1, 2]);
        assert_eq!(d.class_count(), 3);
        assert_eq!(d, load_csv(f.path(), "1", None, Split::Train).unwrap());
    }

    #[test]
    fn reports_bad_cells() {
        let f = write("a,b,label\n1,2,0\n3,oops,1\n");
        match load_csv(f.path(), "label", None, Split::Train) {
            Err(Error::Csv { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "b");
            }
            other => panic!("unexpected {other:?}"),
        }
        let f = write("a,label\n1,\n");
        assert!(matches!(
            load_csv(f.path(), "label", None, Split::Train),
            Err(Error::Csv { row: 1, .. })
        ));
    }

    #[test]
    fn rejects_missing_label_column_and_range() {
        let f = write("a,label\n1,0\n2,1\n");
        assert!(load_csv(f.path(), "target", None, Split::Train).is_err());
        assert!(load_csv(f.path(), "5", None, Split::Train).is_err());
        let f = write("a,label\n1,0\n2,3\n");
        assert!(load_csv(f.path(), "label", Some(2), Split::Train).is_err());
    }
}
