use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{GrapeError, Result};

/// Label of a feature record: a single number or a vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Target {
    Scalar(f64),
    Vector(Vec<f64>),
}

/// One line of a dataset file: `{"text": "..."}` or `{"x": [...], "y": ...}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum Record {
    Text { text: String },
    Features { x: Vec<f64>, y: Target },
}

/// Reads a UTF-8, line-delimited JSON dataset. Blank lines are skipped.
pub fn ingest_dataset(path: &Path) -> Result<Vec<Record>> {
    let file = File::open(path).map_err(|e| GrapeError::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| GrapeError::IngestError {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|_| GrapeError::IngestError {
            path: path.to_path_buf(),
            line: i + 1,
            message: "expected {\"text\": string} or {\"x\": [numbers], \"y\": number | [numbers]}".into(),
        })?;
        records.push(record);
    }
    if records.is_empty() {
        return Err(GrapeError::EmptyDataset(Some(path.to_path_buf())));
    }
    Ok(records)
}

pub fn write_dataset(path: &Path, records: &[Record]) -> Result<()> {
    let file = File::create(path).map_err(|e| GrapeError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("records serialize");
        writeln!(out, "{line}").map_err(|e| GrapeError::io(path, e))?;
    }
    out.flush().map_err(|e| GrapeError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.jsonl");
        std::fs::write(&p, "\n\n").unwrap();
        assert!(matches!(ingest_dataset(&p), Err(GrapeError::EmptyDataset(Some(_)))));
    }

    #[test]
    fn single_record() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("one.jsonl");
        std::fs::write(&p, "{\"text\": \"héllo\"}\n").unwrap();
        assert_eq!(ingest_dataset(&p).unwrap(), vec![Record::Text { text: "héllo".into() }]);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.jsonl");
        std::fs::write(&p, "{\"text\": \"a\"}\n{\"x\": [1], \"y\": 0}\n{\"txt\": 3}\n").unwrap();
        match ingest_dataset(&p) {
            Err(GrapeError::IngestError { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn write_then_ingest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rt.jsonl");
        let records = vec![
            Record::Text { text: "ab\"c\n".into() },
            Record::Features {
                x: vec![0.1, -2.5],
                y: Target::Scalar(1.0),
            },
            Record::Features {
                x: vec![3.0],
                y: Target::Vector(vec![0.25, 0.75]),
            },
        ];
        write_dataset(&p, &records).unwrap();
        assert_eq!(ingest_dataset(&p).unwrap(), records);
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            ingest_dataset(Path::new("/nonexistent/data.jsonl")),
            Err(GrapeError::Io { .. })
        ));
    }
}
