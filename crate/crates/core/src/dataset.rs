//! Featurized labeled data: a row-major matrix plus labels and ids.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::scorers::FeatureRegistry;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    registry: Arc<FeatureRegistry>,
    values: Vec<f64>,
    labels: Vec<Label>,
    ids: Vec<String>,
}

impl FeatureDataset {
    pub fn new(registry: Arc<FeatureRegistry>, values: Vec<f64>, labels: Vec<Label>, ids: Vec<String>) -> Result<Self> {
        let d = registry.len();
        if values.len() != labels.len() * d {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * d,
                got: values.len(),
            });
        }
        if ids.len() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} ids for {} rows",
                ids.len(),
                labels.len()
            )));
        }
        Ok(Self {
            registry,
            values,
            labels,
            ids,
        })
    }

    /// Builds a dataset with ids `0..n`.
    pub fn from_rows(registry: Arc<FeatureRegistry>, rows: &[Vec<f64>], labels: Vec<Label>) -> Result<Self> {
        let ids = (0..labels.len()).map(|i| i.to_string()).collect();
        Self::new(registry, rows.concat(), labels, ids)
    }

    pub fn registry(&self) -> &Arc<FeatureRegistry> {
        &self.registry
    }

    pub fn n_features(&self) -> usize {
        self.registry.len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_features();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.n_features());
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Self {
            registry: self.registry.clone(),
            values,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
        }
    }

    /// Same rows restricted to `columns`.
    pub fn select_columns(&self, columns: &[usize]) -> Result<Self> {
        let registry = Arc::new(self.registry.select(columns)?);
        let mut values = Vec::with_capacity(self.len() * columns.len());
        for i in 0..self.len() {
            let row = self.row(i);
            values.extend(columns.iter().map(|&c| row[c]));
        }
        Ok(Self {
            registry,
            values,
            labels: self.labels.clone(),
            ids: self.ids.clone(),
        })
    }

    /// Column by feature name.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let c = self.registry.index_of(name)?;
        Some((0..self.len()).map(|i| self.row(i)[c]).collect())
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file)
    }

    /// Header `id,label,<feature>...`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.get(0) != Some("id") {
            return Err(Error::MissingColumn("id".into()));
        }
        if headers.get(1) != Some("label") {
            return Err(Error::MissingColumn("label".into()));
        }
        let registry = Arc::new(FeatureRegistry::new(headers.iter().skip(2).map(str::to_string))?);
        let mut values = Vec::new();
        let mut labels = Vec::new();
        let mut ids = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let record = record?;
            let row = i + 2;
            ids.push(record.get(0).unwrap_or("").to_string());
            labels.push(record.get(1).unwrap_or("").parse().map_err(|e: Error| Error::BadRow {
                row,
                message: e.to_string(),
            })?);
            for field in record.iter().skip(2) {
                let v: f64 = field.trim().parse().map_err(|_| Error::BadRow {
                    row,
                    message: format!("bad number `{field}`"),
                })?;
                if !v.is_finite() {
                    return Err(Error::NonFinite(i));
                }
                values.push(v);
            }
        }
        Self::new(registry, values, labels, ids)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["id".to_string(), "label".to_string()];
        header.extend(self.registry.names().iter().cloned());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![self.ids[i].clone(), self.labels[i].to_string()];
            rec.extend(self.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<dataset>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file)
    }
}
