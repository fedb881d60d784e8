use std::path::Path;

use super::Series;
use crate::error::{Error, Result};

fn csv_error(path: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Csv { path: path.display().to_string(), line, msg: msg.into() }
}

/// Reads a headered CSV. With an empty `feature_columns` every column is
/// used; otherwise only the named ones, kept in file order.
pub fn load_csv(path: &Path, feature_columns: &[String]) -> Result<Series> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, 1, e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    for name in feature_columns {
        if !header.contains(name) {
            return Err(csv_error(path, 1, format!("column \"{name}\" not found in header {header:?}")));
        }
    }
    let selected: Vec<usize> = (0..header.len())
        .filter(|&j| feature_columns.is_empty() || feature_columns.contains(&header[j]))
        .collect();
    let columns: Vec<String> = selected.iter().map(|&j| header[j].clone()).collect();

    let mut values = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let row = row + 1;
        let line = row as u64 + 1;
        let record = record.map_err(|e| csv_error(path, line, format!("row {row}: {e}")))?;
        if record.len() != header.len() {
            return Err(csv_error(
                path,
                line,
                format!("row {row}: expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        for &j in &selected {
            let cell = record[j].trim();
            let name = &header[j];
            if cell.is_empty() {
                return Err(csv_error(path, line, format!("row {row}, column \"{name}\": missing value")));
            }
            let v: f64 = cell.parse().map_err(|_| {
                csv_error(path, line, format!("row {row}, column \"{name}\": cannot parse {cell:?} as a number"))
            })?;
            if !v.is_finite() {
                return Err(csv_error(path, line, format!("row {row}, column \"{name}\": non-finite value")));
            }
            values.push(v);
        }
    }
    if values.is_empty() {
        return Err(csv_error(path, 1, "no data rows"));
    }
    Series::new(columns, values)
}

/// Writes a headered CSV with shortest round-trip float formatting.
pub fn write_csv(path: &Path, series: &Series) -> Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| csv_error(path, 0, e.to_string());
    writer.write_record(series.columns()).map_err(csv_err)?;
    for t in 0..series.len() {
        writer
            .write_record(series.row(t).iter().map(|v| v.to_string()))
            .map_err(csv_err)?;
    }
    let bytes = writer.into_inner().map_err(|e| csv_error(path, 0, e.to_string()))?;
    crate::io::write_atomic(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, body: &str) -> std::path::PathBuf {
        let p = dir.path().join("data.csv");
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn reads_in_file_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a,b\n1,2\n3,4\n5,6\n");
        let s = load_csv(&p, &[]).unwrap();
        assert_eq!((s.len(), s.width()), (3, 2));
        assert_eq!(s.values(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let only_b = load_csv(&p, &["b".to_string()]).unwrap();
        assert_eq!(only_b.values(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn names_bad_cell() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "date,temp\n1,2.5\n2,warm\n");
        let err = load_csv(&p, &[]).unwrap_err().to_string();
        assert!(err.contains("row 2") && err.contains("\"temp\""), "{err}");
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn rejects_missing_and_ragged() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a,b\n1,\n");
        assert!(load_csv(&p, &[]).unwrap_err().to_string().contains("missing value"));
        let p = write(&dir, "a,b\n1,2\n3\n");
        let err = load_csv(&p, &[]).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        let p = write(&dir, "a,b\n1,2\n");
        assert!(load_csv(&p, &["c".to_string()]).is_err());
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rt.csv");
        let vals: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin() * 1e3 / 7.0).collect();
        let s = Series::new(vec!["x".into(), "y".into()], vals).unwrap();
        write_csv(&p, &s).unwrap();
        let back = load_csv(&p, &[]).unwrap();
        assert_eq!(back.columns(), s.columns());
        for (a, b) in back.values().iter().zip(s.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
