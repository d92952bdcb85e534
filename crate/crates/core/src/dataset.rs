//! Training data: in-memory representation, the three synthetic
//! distributions, and CSV ingestion.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, tag};

/// A single labeled training example `(x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub x: Vec<f64>,
    pub y: f64,
}

impl LabeledExample {
    pub fn new(x: Vec<f64>, y: f64) -> Self {
        Self { x, y }
    }
}

/// `n` labeled examples of dimension `d`, stored row-major.
///
/// Row order is the identity of each example: resampling records refer to
/// examples by row index.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    d: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    feature_names: Vec<String>,
    target_name: String,
}

impl TrainingSet {
    /// Builds a training set from rows, validating dimensions and finiteness.
    pub fn from_examples(d: usize, examples: &[LabeledExample]) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        if examples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut x = Vec::with_capacity(d * examples.len());
        let mut y = Vec::with_capacity(examples.len());
        for (row, ex) in examples.iter().enumerate() {
            if ex.x.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: ex.x.len() });
            }
            for (j, &v) in ex.x.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite { row, column: format!("x{}", j + 1), value: v });
                }
            }
            if !ex.y.is_finite() {
                return Err(Error::NonFinite { row, column: "y".into(), value: ex.y });
            }
            x.extend_from_slice(&ex.x);
            y.push(ex.y);
        }
        Ok(Self { d, x, y, feature_names: default_feature_names(d), target_name: "y".into() })
    }

    /// Builds a training set from flat row-major features.
    pub fn from_parts(d: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if d == 0 || x.len() != d * y.len() {
            return Err(Error::InvalidArgument(format!(
                "feature buffer of length {} does not match {} rows of dimension {d}",
                x.len(),
                y.len()
            )));
        }
        if y.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: pos / d, column: format!("x{}", pos % d + 1), value: x[pos] });
        }
        if let Some(row) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row, column: "y".into(), value: y[row] });
        }
        Ok(Self { d, x, y, feature_names: default_feature_names(d), target_name: "y".into() })
    }

    pub fn with_names(mut self, feature_names: Vec<String>, target_name: String) -> Result<Self> {
        if feature_names.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: feature_names.len() });
        }
        self.feature_names = feature_names;
        self.target_name = target_name;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.y[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.y
    }

    pub fn features(&self) -> &[f64] {
        &self.x
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn example(&self, i: usize) -> LabeledExample {
        LabeledExample::new(self.row(i).to_vec(), self.y[i])
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.x.chunks_exact(self.d)
    }

    /// The examples at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut x = Vec::with_capacity(indices.len() * self.d);
        let mut y = Vec::with_capacity(indices.len());
        for &i in indices {
            x.extend_from_slice(self.row(i));
            y.push(self.y[i]);
        }
        Ok(Self { d: self.d, x, y, feature_names: self.feature_names.clone(), target_name: self.target_name.clone() })
    }

    /// Copy of this set with every label replaced.
    pub fn with_labels(&self, y: Vec<f64>) -> Result<Self> {
        if y.len() != self.n() {
            return Err(Error::InvalidArgument(format!("expected {} labels, got {}", self.n(), y.len())));
        }
        if let Some(row) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row, column: self.target_name.clone(), value: y[row] });
        }
        Ok(Self { y, ..self.clone() })
    }

    /// Writes the set as CSV with a header row; numbers use the shortest
    /// decimal form that parses back to the same `f64`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.push(&self.target_name);
        w.write_record(&header).map_err(csv_io)?;
        let mut record = Vec::with_capacity(self.d + 1);
        for i in 0..self.n() {
            record.clear();
            record.extend(self.row(i).iter().map(|v| v.to_string()));
            record.push(self.y[i].to_string());
            w.write_record(&record).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

pub fn default_feature_names(d: usize) -> Vec<String> {
    (1..=d).map(|j| format!("x{j}")).collect()
}

/// The three simulation distributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticKind {
    Cosine,
    Xor,
    And,
}

impl SyntheticKind {
    /// Number of leading coordinates the regression function depends on.
    pub fn arity(self) -> usize {
        match self {
            SyntheticKind::Cosine => 2,
            SyntheticKind::Xor | SyntheticKind::And => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SyntheticKind::Cosine => "Cosine",
            SyntheticKind::Xor => "XOR",
            SyntheticKind::And => "AND",
        }
    }
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cosine" => Ok(SyntheticKind::Cosine),
            "xor" => Ok(SyntheticKind::Xor),
            "and" => Ok(SyntheticKind::And),
            other => Err(Error::InvalidSpec(format!("unknown distribution '{other}' (expected cosine, xor or and)"))),
        }
    }
}

fn default_noise_sd() -> f64 {
    1.0
}

/// `X ~ U([0,1]^d)`, `Y = f(X) + noise_sd * N(0,1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub d: usize,
    #[serde(default = "default_noise_sd")]
    pub noise_sd: f64,
}

impl SyntheticSpec {
    pub fn new(kind: SyntheticKind, d: usize) -> Self {
        Self { kind, d, noise_sd: 1.0 }
    }

    pub fn with_noise(mut self, noise_sd: f64) -> Self {
        self.noise_sd = noise_sd;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < self.kind.arity() {
            return Err(Error::InvalidSpec(format!(
                "{} needs d >= {}, got d = {}",
                self.kind,
                self.kind.arity(),
                self.d
            )));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::InvalidSpec(format!("noise_sd must be finite and >= 0, got {}", self.noise_sd)));
        }
        Ok(())
    }

    /// `E[Y | X = x]`.
    pub fn true_mean(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: x.len() });
        }
        self.validate()?;
        Ok(regression_function(self.kind, x))
    }

    /// Draws one feature vector from `U([0,1]^d)`.
    pub fn sample_features<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..self.d).map(|_| rng.random::<f64>()));
    }
}

fn regression_function(kind: SyntheticKind, x: &[f64]) -> f64 {
    let ind = |b: bool| if b { 1.0 } else { 0.0 };
    match kind {
        SyntheticKind::Cosine => 3.0 * (PI * (x[0] + x[1])).cos(),
        SyntheticKind::Xor => {
            let a = (x[0] > 0.6) != (x[1] > 0.6);
            let b = (x[2] > 0.6) != (x[3] > 0.6);
            5.0 * (ind(a) + ind(b))
        }
        SyntheticKind::And => 10.0 * ind(x[..4].iter().all(|&v| v > 0.3)),
    }
}

/// Generates `n` examples; the output is a pure function of `(spec, n, seed)`.
pub fn gen_synthetic(spec: &SyntheticSpec, n: usize, seed: u64) -> Result<TrainingSet> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut r = rng::stream(seed, &[tag::DATA]);
    let mut x = Vec::with_capacity(n * spec.d);
    let mut y = Vec::with_capacity(n);
    let mut row = Vec::with_capacity(spec.d);
    for _ in 0..n {
        spec.sample_features(&mut r, &mut row);
        let eps: f64 = r.sample(StandardNormal);
        y.push(regression_function(spec.kind, &row) + spec.noise_sd * eps);
        x.extend_from_slice(&row);
    }
    TrainingSet::from_parts(spec.d, x, y)
}

/// A CSV column selected by header name or zero-based position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnRef {
    Index(usize),
    Name(String),
}

impl From<&str> for ColumnRef {
    fn from(s: &str) -> Self {
        match s.parse::<usize>() {
            Ok(i) => ColumnRef::Index(i),
            Err(_) => ColumnRef::Name(s.to_string()),
        }
    }
}

impl ColumnRef {
    fn resolve(&self, header: &[String], path: &Path) -> Result<usize> {
        match self {
            ColumnRef::Index(i) if *i < header.len() => Ok(*i),
            ColumnRef::Index(i) => Err(Error::CsvFormat {
                path: path.to_path_buf(),
                message: format!("column index {i} out of range ({} columns)", header.len()),
            }),
            ColumnRef::Name(name) => header.iter().position(|h| h == name).ok_or_else(|| Error::CsvFormat {
                path: path.to_path_buf(),
                message: format!("no column named '{name}'"),
            }),
        }
    }
}

fn open_csv(path: &Path) -> Result<(csv::Reader<std::fs::File>, Vec<String>)> {
    let mut reader =
        csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_path(path).map_err(
            |e| match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::Io(io),
                other => Error::CsvFormat { path: path.to_path_buf(), message: format!("{other:?}") },
            },
        )?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::CsvFormat { path: path.to_path_buf(), message: e.to_string() })?
        .iter()
        .map(str::to_string)
        .collect();
    Ok((reader, header))
}

fn parse_cell(record: &csv::StringRecord, j: usize, row: usize, header: &[String], path: &Path) -> Result<f64> {
    let bad = |message: String| Error::CsvCell { path: path.to_path_buf(), row, column: header[j].clone(), message };
    let raw = match record.get(j) {
        Some(raw) => raw,
        None => return Err(bad(format!("row has {} cells, expected {}", record.len(), header.len()))),
    };
    if raw.is_empty() {
        return Err(bad("empty cell".into()));
    }
    let v: f64 = raw.parse().map_err(|_| bad(format!("not a number: '{raw}'")))?;
    if !v.is_finite() {
        return Err(bad(format!("non-finite value '{raw}'")));
    }
    Ok(v)
}

/// Reads query points for a model with the given feature names. Columns are
/// matched by name when every name is present in the header; otherwise the
/// file must have exactly `feature_names.len()` columns, taken in order.
pub fn load_query_csv(path: impl AsRef<Path>, feature_names: &[String]) -> Result<Vec<Vec<f64>>> {
    let path = path.as_ref();
    let (mut reader, header) = open_csv(path)?;
    let d = feature_names.len();
    let by_name: Option<Vec<usize>> = feature_names.iter().map(|f| header.iter().position(|h| h == f)).collect();
    let columns = match by_name {
        Some(cols) => cols,
        None if header.len() == d => (0..d).collect(),
        None => {
            return Err(Error::CsvFormat {
                path: path.to_path_buf(),
                message: format!(
                    "query has {} columns and lacks some of the model features [{}]",
                    header.len(),
                    feature_names.join(", ")
                ),
            })
        }
    };
    let mut out = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| Error::CsvFormat { path: path.to_path_buf(), message: e.to_string() })?;
        if record.len() != header.len() {
            return Err(Error::CsvFormat {
                path: path.to_path_buf(),
                message: format!("row {row} has {} values, header has {}", record.len(), header.len()),
            });
        }
        out.push(columns.iter().map(|&j| parse_cell(&record, j, row, &header, path)).collect::<Result<Vec<f64>>>()?);
    }
    Ok(out)
}

/// Reads a comma-separated file with a header row.
///
/// When `feature_columns` is `None`, every column other than the target is
/// used as a feature, in file order. Row numbers in errors count data rows
/// from 1.
pub fn load_csv(
    path: impl AsRef<Path>,
    target_column: &ColumnRef,
    feature_columns: Option<&[ColumnRef]>,
) -> Result<TrainingSet> {
    let path = path.as_ref();
    let (mut reader, header) = open_csv(path)?;
    let target = target_column.resolve(&header, path)?;
    let features: Vec<usize> = match feature_columns {
        Some(cols) => cols.iter().map(|c| c.resolve(&header, path)).collect::<Result<_>>()?,
        None => (0..header.len()).filter(|&j| j != target).collect(),
    };
    if features.is_empty() {
        return Err(Error::CsvFormat { path: path.to_path_buf(), message: "no feature columns".into() });
    }
    if features.contains(&target) {
        return Err(Error::CsvFormat {
            path: path.to_path_buf(),
            message: format!("target column '{}' also selected as a feature", header[target]),
        });
    }

    let d = features.len();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| Error::CsvFormat { path: path.to_path_buf(), message: e.to_string() })?;
        let cell = |j: usize| parse_cell(&record, j, row, &header, path);
        for &j in &features {
            x.push(cell(j)?);
        }
        y.push(cell(target)?);
    }
    if y.is_empty() {
        return Err(Error::EmptyDataset);
    }
    TrainingSet::from_parts(d, x, y)?
        .with_names(features.iter().map(|&j| header[j].clone()).collect(), header[target].clone())
}

/// Uniform random partition into `(train, test)` with
/// `|test| = floor(n * test_fraction)`. Each side keeps the original row order.
pub fn split_train_test(ts: &TrainingSet, test_fraction: f64, seed: u64) -> Result<(TrainingSet, TrainingSet)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("test fraction must lie in (0, 1), got {test_fraction}")));
    }
    let n = ts.n();
    let n_test = (n as f64 * test_fraction).floor() as usize;
    if n_test == 0 || n_test == n {
        return Err(Error::InvalidArgument(format!("test fraction {test_fraction} on {n} rows leaves an empty side")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng::stream(seed, &[tag::SPLIT]));
    let (test, train) = perm.split_at_mut(n_test);
    test.sort_unstable();
    train.sort_unstable();
    Ok((ts.subset(train)?, ts.subset(test)?))
}
