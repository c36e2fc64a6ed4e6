//! CSV dataset files: header `x0,..,x{d-1},label` plus a JSON sidecar
//! `{class_count, n, d}` next to the CSV (same stem, `.json` extension).

use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{FedError, Result};
use crate::numerics::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub class_count: usize,
    pub n: usize,
    pub d: usize,
}

fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

fn csv_err(e: csv::Error) -> FedError {
    FedError::Parse(e.to_string())
}

pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let d = dataset.dim();
    let mut header: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    header.push("label".into());
    w.write_record(&header).map_err(csv_err)?;
    for (row, y) in dataset.inputs().iter_rows().zip(dataset.labels()) {
        let mut rec: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        rec.push(y.to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    let meta = DatasetMeta { class_count: dataset.class_count(), n: dataset.len(), d };
    let f = File::create(sidecar_path(path))?;
    serde_json::to_writer_pretty(f, &meta).map_err(|e| FedError::Parse(e.to_string()))?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Dataset> {
    let meta: DatasetMeta = serde_json::from_reader(File::open(sidecar_path(path))?)
        .map_err(|e| FedError::Parse(format!("dataset sidecar: {e}")))?;
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.clone();
    let expected: Vec<String> = (0..meta.d).map(|i| format!("x{i}")).chain(["label".to_string()]).collect();
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(FedError::Parse(format!("unexpected CSV header in {}", path.display())));
    }
    let mut data = Vec::with_capacity(meta.n * meta.d);
    let mut labels = Vec::with_capacity(meta.n);
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        for field in rec.iter().take(meta.d) {
            data.push(field.trim().parse::<f64>().map_err(|e| FedError::Parse(format!("row {line}: {e}")))?);
        }
        let y = rec.get(meta.d).ok_or_else(|| FedError::Parse(format!("row {line}: missing label")))?;
        labels.push(y.trim().parse::<usize>().map_err(|e| FedError::Parse(format!("row {line}: {e}")))?);
    }
    if labels.len() != meta.n {
        return Err(FedError::Parse(format!("sidecar says n={}, CSV has {} rows", meta.n, labels.len())));
    }
    Dataset::new(Matrix::new(meta.n, meta.d, data)?, labels, meta.class_count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_gaussian_blobs, ring_centers};

    #[test]
    fn csv_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("blobs.csv");
        let d = make_gaussian_blobs(3, 7, &ring_centers(3, 2.0), 0.9, 4).unwrap();
        write_csv(&d, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("x0,x1,label\n"));
        let meta: DatasetMeta = serde_json::from_str(&std::fs::read_to_string(dir.path().join("blobs.json")).unwrap()).unwrap();
        assert_eq!(meta, DatasetMeta { class_count: 3, n: 21, d: 2 });
        assert_eq!(read_csv(&path).unwrap(), d);
    }

    #[test]
    fn row_count_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "x0,label\n1.0,0\n").unwrap();
        std::fs::write(dir.path().join("bad.json"), r#"{"class_count":2,"n":2,"d":1}"#).unwrap();
        assert!(matches!(read_csv(&path), Err(FedError::Parse(_))));
    }
}
