//! CSV datasets: a header row of feature columns `f0..f{p-1}` and an optional
//! integer `label` column.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::classifier::Label;
use crate::error::{Error, Result};
use crate::sample::SampleMatrix;

pub const LABEL_COLUMN: &str = "label";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// One observation per row.
    pub features: DMatrix<f64>,
    pub labels: Option<Vec<Label>>,
}

impl Dataset {
    pub fn p(&self) -> usize {
        self.features.ncols()
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    /// Stacks class-1 rows over class-2 rows.
    pub fn from_classes(class1: &SampleMatrix, class2: &SampleMatrix) -> Result<Self> {
        if class1.p() != class2.p() {
            return Err(Error::DimensionMismatch {
                expected: class1.p(),
                found: class2.p(),
            });
        }
        let (n1, n2) = (class1.n(), class2.n());
        let features = DMatrix::from_fn(n1 + n2, class1.p(), |i, j| {
            if i < n1 {
                class1.data()[(i, j)]
            } else {
                class2.data()[(i - n1, j)]
            }
        });
        let mut labels = vec![1; n1];
        labels.resize(n1 + n2, 2);
        Ok(Self {
            features,
            labels: Some(labels),
        })
    }

    /// Rows of class 1 and class 2, in file order. Other labels are rejected.
    pub fn split_classes(&self) -> Result<(SampleMatrix, SampleMatrix)> {
        let labels = self
            .labels
            .as_ref()
            .ok_or_else(|| Error::Format(format!("training data needs a '{LABEL_COLUMN}' column")))?;
        let mut idx = (Vec::new(), Vec::new());
        for (i, &l) in labels.iter().enumerate() {
            match l {
                1 => idx.0.push(i),
                2 => idx.1.push(i),
                _ => return Err(Error::Format(format!("row {i}: label {l} is not 1 or 2"))),
            }
        }
        let all = SampleMatrix::new(self.features.clone())?;
        Ok((all.select_rows(&idx.0)?, all.select_rows(&idx.1)?))
    }
}

fn format_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

pub fn read_dataset<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(format_err)?.clone();
    let label_at = header.iter().position(|h| h == LABEL_COLUMN);
    let feature_cols: Vec<usize> = (0..header.len()).filter(|&c| Some(c) != label_at).collect();
    for (k, &c) in feature_cols.iter().enumerate() {
        if header[c] != format!("f{k}") {
            return Err(Error::Format(format!(
                "column {c} is '{}', expected 'f{k}'",
                &header[c]
            )));
        }
    }
    if feature_cols.is_empty() {
        return Err(Error::Format("no feature columns".into()));
    }
    let p = feature_cols.len();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(format_err)?;
        let row = line + 2;
        for &c in &feature_cols {
            let v: f64 = record[c]
                .parse()
                .map_err(|_| Error::Format(format!("line {row}: '{}' is not a number", &record[c])))?;
            if !v.is_finite() {
                return Err(Error::Format(format!("line {row}: non-finite value")));
            }
            values.push(v);
        }
        if let Some(c) = label_at {
            let l: Label = record[c]
                .parse()
                .map_err(|_| Error::Format(format!("line {row}: label '{}' is not a class index", &record[c])))?;
            labels.push(l);
        }
    }
    let n = values.len() / p;
    if n == 0 {
        return Err(Error::Format("dataset has no rows".into()));
    }
    Ok(Dataset {
        features: DMatrix::from_row_slice(n, p, &values),
        labels: label_at.map(|_| labels),
    })
}

/// Values are written in the shortest form that parses back exactly.
pub fn write_dataset<W: Write>(writer: W, data: &Dataset) -> Result<()> {
    if let Some(l) = &data.labels {
        if l.len() != data.n() {
            return Err(Error::DimensionMismatch {
                expected: data.n(),
                found: l.len(),
            });
        }
    }
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..data.p()).map(|j| format!("f{j}")).collect();
    if data.labels.is_some() {
        header.push(LABEL_COLUMN.into());
    }
    wtr.write_record(&header).map_err(format_err)?;
    for i in 0..data.n() {
        let mut rec: Vec<String> = data.features.row(i).iter().map(|v| v.to_string()).collect();
        if let Some(l) = &data.labels {
            rec.push(l[i].to_string());
        }
        wtr.write_record(&rec).map_err(format_err)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_dataset(std::io::BufReader::new(file))
}

pub fn save_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_dataset(std::io::BufWriter::new(file), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn label_column_may_come_first() {
        let text = "label,f0,f1\n2,0.5,-1\n1,3,4e-3\n";
        let d = read_dataset(text.as_bytes()).unwrap();
        assert_eq!(d.labels, Some(vec![2, 1]));
        assert_eq!(d.features, DMatrix::from_row_slice(2, 2, &[0.5, -1.0, 3.0, 4e-3]));
    }

    #[test]
    fn unlabelled_file() {
        let d = read_dataset("f0\n1\n2\n".as_bytes()).unwrap();
        assert_eq!(d.labels, None);
        assert!(d.split_classes().is_err());
    }

    #[test]
    fn schema_errors() {
        assert!(read_dataset("f0,f2,label\n1,2,1\n".as_bytes()).is_err());
        assert!(read_dataset("f0,label\nx,1\n".as_bytes()).is_err());
        assert!(read_dataset("f0,label\n1,1.5\n".as_bytes()).is_err());
        assert!(read_dataset("f0,label\n".as_bytes()).is_err());
        assert!(read_dataset("f0,f1\n1\n".as_bytes()).is_err());
        let bad = read_dataset("f0,label\n1,3\n".as_bytes()).unwrap();
        assert!(matches!(bad.split_classes(), Err(Error::Format(_))));
    }

    proptest! {
        #[test]
        fn round_trip_is_exact(rows in prop::collection::vec(prop::collection::vec(-1e300f64..1e300, 3), 1..20)) {
            let n = rows.len();
            let flat: Vec<f64> = rows.concat();
            let data = Dataset {
                features: DMatrix::from_row_slice(n, 3, &flat),
                labels: Some((0..n).map(|i| 1 + i % 2).collect()),
            };
            let mut buf = Vec::new();
            write_dataset(&mut buf, &data).unwrap();
            prop_assert_eq!(read_dataset(buf.as_slice()).unwrap(), data);
        }
    }
}
