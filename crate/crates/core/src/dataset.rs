//! Tabular classification data: loading, validation and train/test splits.
//!
//! Features are stored row-major in one flat buffer. Labels are dense class
//! indices `0..K`; the original label strings are kept in
//! [`Dataset::label_names`] in first-appearance order.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng;

/// Which CSV column holds the class label.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum LabelColumn {
    #[default]
    Last,
    Index(usize),
    Name(String),
}

impl FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    /// Integers select by position, anything else by header name.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim().parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.trim().to_string()),
        })
    }
}

impl LabelColumn {
    fn resolve(&self, header: Option<&[String]>, n_columns: usize) -> Result<usize> {
        match self {
            LabelColumn::Last => Ok(n_columns - 1),
            LabelColumn::Index(i) if *i < n_columns => Ok(*i),
            LabelColumn::Index(i) => Err(Error::MissingLabelColumn(i.to_string())),
            LabelColumn::Name(name) => header
                .and_then(|h| h.iter().position(|c| c == name))
                .ok_or_else(|| Error::MissingLabelColumn(name.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    n_features: usize,
    labels: Vec<usize>,
    class_count: usize,
    feature_names: Option<Vec<String>>,
    label_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset from row vectors, validating every invariant.
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        let n_features = rows.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(rows.len() * n_features);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_features {
                return Err(Error::RaggedRow {
                    row: i,
                    expected: n_features,
                    got: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        Self::from_flat(flat, n_features, labels, class_count)
    }

    pub fn from_flat(features: Vec<f64>, n_features: usize, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if labels.is_empty() || n_features == 0 {
            return Err(Error::EmptyDataset);
        }
        if features.len() != labels.len() * n_features {
            return Err(Error::InvalidConfig(format!(
                "{} feature values do not form {} rows of {} features",
                features.len(),
                labels.len(),
                n_features
            )));
        }
        if class_count == 0 {
            return Err(Error::InvalidConfig("class count must be positive".into()));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / n_features,
                column: pos % n_features,
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::LabelOutOfRange { label, class_count });
        }
        Ok(Dataset {
            features,
            n_features,
            labels,
            class_count,
            feature_names: None,
            label_names: (0..class_count).map(|c| c.to_string()).collect(),
        })
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_features {
            return Err(Error::ArityMismatch {
                expected: self.n_features,
                got: names.len(),
            });
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    pub fn with_label_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.class_count {
            return Err(Error::ClassCountMismatch {
                expected: self.class_count,
                got: names.len(),
            });
        }
        self.label_names = names;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    /// True when only one class was present at load time. Such data loads
    /// fine but cannot support a meaningful classifier.
    pub fn is_single_class(&self) -> bool {
        self.class_count < 2
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.features.chunks_exact(self.n_features)
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    /// Per-class instance counts.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows at `indices`, in that order. Keeps K, names and label mapping.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            features,
            n_features: self.n_features,
            labels,
            class_count: self.class_count,
            feature_names: self.feature_names.clone(),
            label_names: self.label_names.clone(),
        }
    }

    /// Random train/test partition. With `stratify`, each class is split
    /// separately so class proportions carry over to both sides.
    pub fn split(&self, train_fraction: f64, seed: u64, stratify: bool) -> Result<SplitPair> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "train fraction must lie in (0, 1), got {train_fraction}"
            )));
        }
        let n = self.len();
        let degenerate = || Error::DegenerateSplit {
            n,
            fraction: train_fraction,
        };
        if n < 2 {
            return Err(degenerate());
        }
        let mut rng = rng::stream_rng(seed, 0);
        let (train_indices, test_indices) = if stratify {
            let mut train = Vec::new();
            let mut test = Vec::new();
            for class in 0..self.class_count {
                let mut members: Vec<usize> = (0..n).filter(|&i| self.labels[i] == class).collect();
                rng::shuffle(&mut rng, &mut members);
                let k = (train_fraction * members.len() as f64).round() as usize;
                train.extend_from_slice(&members[..k]);
                test.extend_from_slice(&members[k..]);
            }
            (train, test)
        } else {
            let mut perm: Vec<usize> = (0..n).collect();
            rng::shuffle(&mut rng, &mut perm);
            let k = (train_fraction * n as f64).round() as usize;
            let test = perm.split_off(k.min(n));
            (perm, test)
        };
        if train_indices.is_empty() || test_indices.is_empty() {
            return Err(degenerate());
        }
        Ok(SplitPair {
            train: self.subset(&train_indices),
            test: self.subset(&test_indices),
            train_indices,
            test_indices,
            seed,
        })
    }

    /// Writes a header row (feature names, then `label`) and one row per
    /// instance with the original label strings.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = match &self.feature_names {
            Some(names) => names.clone(),
            None => (0..self.n_features).map(|j| format!("x{j}")).collect(),
        };
        header.push("label".into());
        w.write_record(&header)?;
        for (row, &label) in self.rows().zip(&self.labels) {
            let mut record: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            record.push(self.label_names[label].clone());
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file)
    }
}

/// A disjoint train/test partition together with the source row indices.
#[derive(Debug, Clone)]
pub struct SplitPair {
    pub train: Dataset,
    pub test: Dataset,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub seed: u64,
}

struct RawTable {
    header: Option<Vec<String>>,
    records: Vec<Vec<String>>,
    /// 1-based line of the first data record.
    first_line: usize,
}

fn read_raw<R: Read>(reader: R) -> Result<Vec<Vec<String>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        out.push(rec.iter().map(str::to_string).collect());
    }
    Ok(out)
}

/// Splits off a header row when any cell outside `skip_column` of the first
/// row fails to parse as a number.
fn detect_header(mut records: Vec<Vec<String>>, skip_column: impl Fn(usize) -> bool) -> Result<RawTable> {
    let first = records.first().ok_or(Error::EmptyDataset)?;
    let is_header = first
        .iter()
        .enumerate()
        .any(|(j, cell)| !skip_column(j) && cell.parse::<f64>().is_err());
    let header = is_header.then(|| records.remove(0));
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(RawTable {
        header,
        records,
        first_line: if is_header { 2 } else { 1 },
    })
}

fn parse_cell(cell: &str, line: usize, column: usize) -> Result<f64> {
    let v: f64 = cell.parse().map_err(|_| Error::NonNumeric {
        row: line,
        column,
        value: cell.to_string(),
    })?;
    if !v.is_finite() {
        return Err(Error::NonFinite { row: line, column });
    }
    Ok(v)
}

fn check_arity(table: &RawTable) -> Result<usize> {
    let width = table.header.as_ref().map_or(table.records[0].len(), Vec::len);
    for (i, rec) in table.records.iter().enumerate() {
        if rec.len() != width {
            return Err(Error::RaggedRow {
                row: table.first_line + i,
                expected: width,
                got: rec.len(),
            });
        }
    }
    Ok(width)
}

/// Reads a labelled dataset from CSV. The header row is optional and
/// auto-detected; labels become dense indices in first-appearance order.
pub fn read_csv<R: Read>(reader: R, label: &LabelColumn) -> Result<Dataset> {
    let records = read_raw(reader)?;
    let width = records.first().map_or(0, Vec::len);
    if width < 2 {
        return Err(if width == 0 {
            Error::EmptyDataset
        } else {
            Error::MissingLabelColumn(format!("{label:?}"))
        });
    }
    // A header is needed to resolve a label column by name; guess the label
    // position first so that a non-numeric label cell does not look like a header.
    let provisional = match label {
        LabelColumn::Name(name) => records[0].iter().position(|c| c == name),
        other => other.resolve(None, width).ok(),
    };
    let table = detect_header(records, |j| Some(j) == provisional)?;
    let width = check_arity(&table)?;
    let label_col = label.resolve(table.header.as_deref(), width)?;

    let n_features = width - 1;
    let mut features = Vec::with_capacity(table.records.len() * n_features);
    let mut labels = Vec::with_capacity(table.records.len());
    let mut label_names: Vec<String> = Vec::new();
    let mut label_index: HashMap<String, usize> = HashMap::new();
    for (i, rec) in table.records.iter().enumerate() {
        let line = table.first_line + i;
        for (j, cell) in rec.iter().enumerate() {
            if j != label_col {
                features.push(parse_cell(cell, line, j)?);
            }
        }
        let raw = &rec[label_col];
        let idx = *label_index.entry(raw.clone()).or_insert_with(|| {
            label_names.push(raw.clone());
            label_names.len() - 1
        });
        labels.push(idx);
    }
    let class_count = label_names.len();
    let mut ds = Dataset::from_flat(features, n_features, labels, class_count)?;
    ds.label_names = label_names;
    if let Some(h) = table.header {
        let names = h
            .into_iter()
            .enumerate()
            .filter(|&(j, _)| j != label_col)
            .map(|(_, n)| n)
            .collect();
        ds.feature_names = Some(names);
    }
    Ok(ds)
}

pub fn load_csv(path: impl AsRef<Path>, label: &LabelColumn) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, label)
}

/// An unlabelled feature matrix, as used for prediction queries.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: Vec<f64>,
    pub n_features: usize,
    pub names: Option<Vec<String>>,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.values.len().checked_div(self.n_features).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.n_features.max(1))
    }
}

/// Reads numeric rows from CSV, optionally dropping a label column.
pub fn read_features_csv<R: Read>(reader: R, drop: Option<&LabelColumn>) -> Result<FeatureMatrix> {
    let records = read_raw(reader)?;
    let width = records.first().map_or(0, Vec::len);
    if width == 0 {
        return Err(Error::EmptyDataset);
    }
    let provisional = match drop {
        Some(LabelColumn::Name(name)) => records[0].iter().position(|c| c == name),
        Some(other) => other.resolve(None, width).ok(),
        None => None,
    };
    let table = detect_header(records, |j| Some(j) == provisional)?;
    let width = check_arity(&table)?;
    let dropped = drop.map(|l| l.resolve(table.header.as_deref(), width)).transpose()?;
    let n_features = width - usize::from(dropped.is_some());
    if n_features == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut values = Vec::with_capacity(table.records.len() * n_features);
    for (i, rec) in table.records.iter().enumerate() {
        for (j, cell) in rec.iter().enumerate() {
            if Some(j) != dropped {
                values.push(parse_cell(cell, table.first_line + i, j)?);
            }
        }
    }
    let names = table.header.map(|h| {
        h.into_iter()
            .enumerate()
            .filter(|&(j, _)| Some(j) != dropped)
            .map(|(_, n)| n)
            .collect()
    });
    Ok(FeatureMatrix {
        values,
        n_features,
        names,
    })
}

pub fn load_features_csv(path: impl AsRef<Path>, drop: Option<&LabelColumn>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_features_csv(file, drop)
}


/// Generated benchmark data.
pub mod synthetic {
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    use super::Dataset;
    use crate::rng;

    /// Two unit-variance 2-D Gaussians centred at `(-1, 0)` and `(1, 0)`,
    /// `n` points with balanced classes drawn at random. Inside the overlap
    /// region `|x0| < 1` each label is flipped with probability `noise`.
    pub fn two_gaussians(n: usize, noise: f64, seed: u64) -> Dataset {
        let mut rng = rng::stream_rng(seed, 0);
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        let mut rows = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let class = usize::from(rng.random_bool(0.5));
            let centre = if class == 1 { 1.0 } else { -1.0 };
            let x0: f64 = centre + unit.sample(&mut rng);
            let x1: f64 = unit.sample(&mut rng);
            let flip = x0.abs() < 1.0 && rng.random_bool(noise);
            rows.push(vec![x0, x1]);
            labels.push(if flip { 1 - class } else { class });
        }
        Dataset::new(rows, labels, 2)
            .and_then(|d| d.with_feature_names(vec!["x0".into(), "x1".into()]))
            .expect("generated data is valid")
    }
}
