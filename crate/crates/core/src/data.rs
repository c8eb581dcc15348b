//! Observation matrices and their on-disk formats.
//!
//! Two formats are supported: CSV with header `x0,...,x{d-1}[,label]`, and
//! raw little-endian `f64` row-major values with a JSON sidecar
//! `{"n": .., "d": ..}` stored next to the data as `<file>.json`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `n × d` observations, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    d: usize,
    values: Vec<f64>,
}

impl Dataset {
    pub fn new(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument(
                "dataset dimension must be positive".into(),
            ));
        }
        if values.len() != n * d {
            return Err(Error::DimensionMismatch {
                expected: n * d,
                got: values.len(),
            });
        }
        Ok(Self { n, d, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * d);
        for r in rows {
            if r.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        Self::new(rows.len(), d, values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.values.chunks_exact(self.d)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Rows picked by index, in the given order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let mut values = Vec::with_capacity(idx.len() * self.d);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        Self {
            n: idx.len(),
            d: self.d,
            values,
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.d];
        for r in self.rows() {
            for (a, b) in m.iter_mut().zip(r) {
                *a += b;
            }
        }
        m.iter_mut().for_each(|v| *v /= self.n as f64);
        m
    }

    /// Sample covariance with divisor `n`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let mean = self.mean();
        let d = self.d;
        let mut s = DMatrix::zeros(d, d);
        for r in self.rows() {
            for i in 0..d {
                let di = r[i] - mean[i];
                for j in 0..=i {
                    s[(i, j)] += di * (r[j] - mean[j]);
                }
            }
        }
        for i in 0..d {
            for j in 0..=i {
                let v = s[(i, j)] / self.n as f64;
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        s
    }
}

/// Observations with optional true subpopulation labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub points: Dataset,
    pub labels: Option<Vec<usize>>,
}

impl LabeledSample {
    pub fn unlabeled(points: Dataset) -> Self {
        Self {
            points,
            labels: None,
        }
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            points: self.points.select(idx),
            labels: self
                .labels
                .as_ref()
                .map(|l| idx.iter().map(|&i| l[i]).collect()),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    n: usize,
    d: usize,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_csv(sample: &LabeledSample, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let d = sample.points.d();
    let mut header: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    if sample.labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header)?;
    for (i, row) in sample.points.rows().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        if let Some(labels) = &sample.labels {
            rec.push(labels[i].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<LabeledSample> {
    let mut r = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    let header = r.headers()?.clone();
    let names: Vec<&str> = header.iter().collect();
    let has_label = names.last() == Some(&"label");
    let d = names.len() - usize::from(has_label);
    for (j, name) in names[..d].iter().enumerate() {
        if *name != format!("x{j}") {
            return Err(Error::Schema(format!(
                "unexpected CSV column '{name}' at position {j}"
            )));
        }
    }
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != names.len() {
            return Err(Error::Schema(format!(
                "row {line}: expected {} fields",
                names.len()
            )));
        }
        for j in 0..d {
            let v: f64 = rec[j]
                .trim()
                .parse()
                .map_err(|_| Error::Schema(format!("row {line}: bad number '{}'", &rec[j])))?;
            values.push(v);
        }
        if has_label {
            let l: usize = rec[d]
                .trim()
                .parse()
                .map_err(|_| Error::Schema(format!("row {line}: bad label '{}'", &rec[d])))?;
            labels.push(l);
        }
    }
    let n = values.len() / d.max(1);
    Ok(LabeledSample {
        points: Dataset::new(n, d, values)?,
        labels: has_label.then_some(labels),
    })
}

pub fn write_binary(points: &Dataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for v in points.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    let sidecar = Sidecar {
        n: points.n(),
        d: points.d(),
    };
    std::fs::write(sidecar_path(path), serde_json::to_string(&sidecar)?)?;
    Ok(())
}

pub fn read_binary(path: &Path) -> Result<Dataset> {
    let sidecar: Sidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    if bytes.len() != sidecar.n * sidecar.d * 8 {
        return Err(Error::Schema(format!(
            "binary data has {} bytes, sidecar declares {}x{} values",
            bytes.len(),
            sidecar.n,
            sidecar.d
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Dataset::new(sidecar.n, sidecar.d, values)
}

/// Reads CSV, or binary when a sidecar exists next to `path`.
pub fn read_any(path: &Path) -> Result<LabeledSample> {
    if sidecar_path(path).exists() {
        Ok(LabeledSample::unlabeled(read_binary(path)?))
    } else {
        read_csv(path)
    }
}
