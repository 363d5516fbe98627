//! CSV ingestion: numeric rows, last column is the target.

use std::io::Read;
use std::path::Path;

use treeons_core::Sample;

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Column names when the first row was a header.
    pub header: Option<Vec<String>>,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn feature_dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.x.len())
    }
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| BenchError::Data(format!("{}: {e}", path.display())))?;
    read_csv(file).map_err(|e| match e {
        BenchError::Data(msg) => BenchError::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Parses CSV text. A first row with any non-numeric field is taken as a header.
pub fn read_csv(reader: impl Read) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut header = None;
    let mut samples = Vec::new();
    let mut width = None;
    for (i, record) in rdr.records().enumerate() {
        let line = i + 1;
        let record = record.map_err(|e| BenchError::Data(format!("line {line}: {e}")))?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: Vec<Option<f64>> = record
            .iter()
            .map(|f| f.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect();
        if line == 1 && parsed.iter().any(Option::is_none) {
            header = Some(record.iter().map(str::to_owned).collect::<Vec<_>>());
            width = Some(record.len());
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(BenchError::Data(format!(
                "line {line}: expected {expected} columns, found {}",
                record.len()
            )));
        }
        if expected < 2 {
            return Err(BenchError::Data(format!(
                "line {line}: need at least one feature and a target"
            )));
        }
        let mut values = Vec::with_capacity(expected);
        for (col, v) in parsed.into_iter().enumerate() {
            match v {
                Some(v) => values.push(v),
                None => {
                    return Err(BenchError::Data(format!(
                        "line {line}, column {}: not a finite number: {:?}",
                        col + 1,
                        &record[col]
                    )))
                }
            }
        }
        let y = values.pop().expect("width checked");
        samples.push(Sample { x: values, y });
    }
    if samples.is_empty() {
        return Err(BenchError::Data("no data rows".into()));
    }
    Ok(Dataset { header, samples })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_row_is_detected() {
        let d = read_csv("a,b,y\n1,2,3\n".as_bytes()).unwrap();
        assert_eq!(d.header.as_deref(), Some(&["a".to_string(), "b".into(), "y".into()][..]));
        assert_eq!(d.samples, vec![Sample { x: vec![1.0, 2.0], y: 3.0 }]);
    }

    #[test]
    fn headerless_file_keeps_first_row() {
        let d = read_csv("1,2,3\n4,5,6\n".as_bytes()).unwrap();
        assert!(d.header.is_none());
        assert_eq!(d.samples.len(), 2);
    }

    #[test]
    fn bad_field_names_its_line() {
        let err = read_csv("1,2,3\n1,2,foo\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn ragged_row_is_rejected() {
        let err = read_csv("x,y\n1,2\n1,2,3\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(read_csv("".as_bytes()).is_err());
        assert!(read_csv("a,b\n".as_bytes()).is_err());
    }

    #[test]
    fn eight_feature_file() {
        let mut text = String::from("f1,f2,f3,f4,f5,f6,f7,f8,target\n");
        for i in 0..5 {
            let row: Vec<String> = (0..9).map(|j| format!("{}", i * 9 + j)).collect();
            text.push_str(&row.join(","));
            text.push('\n');
        }
        assert_eq!(read_csv(text.as_bytes()).unwrap().feature_dim(), 8);
    }

    #[test]
    fn nan_is_malformed() {
        assert!(read_csv("1,NaN\n".as_bytes()).is_err());
    }
}
