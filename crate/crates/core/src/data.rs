//! CSV ingestion, chronological splitting, min-max normalization and
//! sliding-window example generation.

use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}, column '{column}': cannot parse '{cell}' as a number")]
    Parse {
        row: usize,
        column: String,
        cell: String,
    },
    #[error("row {row}: expected {expected} cells, found {found}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("unknown column '{name}'; available columns: {available}")]
    UnknownColumn { name: String, available: String },
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// Which rows normalization statistics are computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormScope {
    #[default]
    Train,
    Global,
}

impl std::str::FromStr for NormScope {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Self::Train),
            "global" => Ok(Self::Global),
            other => Err(format!(
                "unknown norm scope '{other}' (expected train|global)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Self::Train),
            "valid" | "validation" => Ok(Self::Valid),
            "test" => Ok(Self::Test),
            other => Err(format!(
                "unknown split '{other}' (expected train|valid|test)"
            )),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        })
    }
}

/// Row boundaries: train is `[0, train_end)`, validation `[train_end, valid_end)`,
/// test `[valid_end, rows)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitBounds {
    pub train_end: usize,
    pub valid_end: usize,
    pub rows: usize,
}

impl SplitBounds {
    pub fn range(&self, split: Split) -> Range<usize> {
        match split {
            Split::Train => 0..self.train_end,
            Split::Valid => self.train_end..self.valid_end,
            Split::Test => self.valid_end..self.rows,
        }
    }
}

/// Per-variable min-max statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub scope: NormScope,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub constant: Vec<bool>,
}

impl Normalization {
    pub fn apply(&self, col: usize, x: f64) -> f64 {
        if self.constant[col] {
            0.0
        } else {
            (x - self.min[col]) / (self.max[col] - self.min[col])
        }
    }

    /// Inverse transform. Constant variables map back to their single value.
    pub fn invert(&self, col: usize, x: f64) -> f64 {
        if self.constant[col] {
            self.min[col]
        } else {
            x * (self.max[col] - self.min[col]) + self.min[col]
        }
    }
}

/// A multivariate table: rows are time steps, columns are variables.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesDataset {
    values: Vec<f64>,
    rows: usize,
    names: Vec<String>,
    target: usize,
    split: Option<SplitBounds>,
    norm: Option<Normalization>,
}

impl SeriesDataset {
    pub fn from_columns(names: Vec<String>, columns: Vec<Vec<f64>>, target: &str) -> Result<Self> {
        if names.len() != columns.len() || names.is_empty() {
            return Err(DataError::Config(format!(
                "{} names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        let rows = columns[0].len();
        if columns.iter().any(|c| c.len() != rows) {
            return Err(DataError::Config("columns differ in length".into()));
        }
        let cols = names.len();
        let mut values = vec![0.0; rows * cols];
        for (c, col) in columns.iter().enumerate() {
            for (r, v) in col.iter().enumerate() {
                values[r * cols + c] = *v;
            }
        }
        let target = resolve(&names, target)?;
        Ok(Self {
            values,
            rows,
            names,
            target,
            split: None,
            norm: None,
        })
    }

    /// Reads a headed, comma-separated numeric table. Rows keep file order.
    pub fn load_csv(path: impl AsRef<Path>, target: &str) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(file);
        let names: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        let target_idx = resolve(&names, target)?;
        let cols = names.len();
        let mut values = Vec::new();
        let mut rows = 0;
        for (i, record) in reader.records().enumerate() {
            let record = record?;
            let row = i + 1;
            if record.len() != cols {
                return Err(DataError::Ragged {
                    row,
                    expected: cols,
                    found: record.len(),
                });
            }
            for (c, cell) in record.iter().enumerate() {
                let v: f64 = cell.parse().map_err(|_| DataError::Parse {
                    row,
                    column: names[c].clone(),
                    cell: cell.to_string(),
                })?;
                if !v.is_finite() {
                    return Err(DataError::Parse {
                        row,
                        column: names[c].clone(),
                        cell: cell.to_string(),
                    });
                }
                values.push(v);
            }
            rows += 1;
        }
        Ok(Self {
            values,
            rows,
            names,
            target: target_idx,
            split: None,
            norm: None,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn target_index(&self) -> usize {
        self.target
    }

    pub fn target_name(&self) -> &str {
        &self.names[self.target]
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        resolve(&self.names, name)
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let m = self.cols();
        &self.values[row * m..(row + 1) * m]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.value(r, col)).collect()
    }

    pub fn column_range(&self, col: usize, rows: Range<usize>) -> Vec<f64> {
        rows.map(|r| self.value(r, col)).collect()
    }

    pub fn split_bounds(&self) -> Option<SplitBounds> {
        self.split
    }

    pub fn normalization(&self) -> Option<&Normalization> {
        self.norm.as_ref()
    }

    /// Chronological split with `train_end = ⌊r₀·N⌋`, `valid_end = ⌊(r₀+r₁)·N⌋`.
    /// Every split must hold at least `window + horizon` rows.
    pub fn split(&self, ratios: (f64, f64, f64), window: usize, horizon: usize) -> Result<Self> {
        let (a, b, c) = ratios;
        if [a, b, c].iter().any(|r| *r < 0.0) || ((a + b + c) - 1.0).abs() > 1e-9 {
            return Err(DataError::Config(format!(
                "split ratios {ratios:?} must be non-negative and sum to 1"
            )));
        }
        let n = self.rows as f64;
        // the epsilon keeps e.g. 0.6·100 from flooring to 59
        let train_end = (a * n + 1e-9).floor() as usize;
        let valid_end = ((a + b) * n + 1e-9).floor().min(n) as usize;
        let bounds = SplitBounds {
            train_end,
            valid_end,
            rows: self.rows,
        };
        let need = window + horizon;
        for s in [Split::Train, Split::Valid, Split::Test] {
            let len = bounds.range(s).len();
            if len < need {
                return Err(DataError::Config(format!(
                    "{s} split has {len} rows but window {window} + horizon {horizon} needs {need} \
                     (dataset has {} rows)",
                    self.rows
                )));
            }
        }
        let mut out = self.clone();
        out.split = Some(bounds);
        Ok(out)
    }

    /// Min-max scales every variable with statistics from the training split
    /// (or all rows under [`NormScope::Global`]). Constant variables become zeros.
    pub fn normalize(&self, scope: NormScope) -> Result<Self> {
        let rows = match scope {
            NormScope::Train => {
                let b = self
                    .split
                    .ok_or_else(|| DataError::Config("normalize requires split bounds".into()))?;
                b.range(Split::Train)
            }
            NormScope::Global => 0..self.rows,
        };
        if rows.is_empty() {
            return Err(DataError::Config("empty training split".into()));
        }
        let m = self.cols();
        let mut min = vec![f64::INFINITY; m];
        let mut max = vec![f64::NEG_INFINITY; m];
        for r in rows {
            for (c, v) in self.row(r).iter().enumerate() {
                min[c] = min[c].min(*v);
                max[c] = max[c].max(*v);
            }
        }
        let constant = min.iter().zip(&max).map(|(lo, hi)| hi <= lo).collect();
        let norm = Normalization {
            scope,
            min,
            max,
            constant,
        };
        self.with_normalization(norm)
    }

    /// Applies previously computed statistics (e.g. from a checkpoint).
    pub fn with_normalization(&self, norm: Normalization) -> Result<Self> {
        let m = self.cols();
        if norm.min.len() != m || norm.max.len() != m || norm.constant.len() != m {
            return Err(DataError::Config(format!(
                "normalization covers {} variables, dataset has {m}",
                norm.min.len()
            )));
        }
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| norm.apply(i % m, *v))
            .collect();
        Ok(Self {
            values,
            rows: self.rows,
            names: self.names.clone(),
            target: self.target,
            split: self.split,
            norm: Some(norm),
        })
    }

    pub fn denormalize(&self, col: usize, x: f64) -> f64 {
        match &self.norm {
            Some(n) => n.invert(col, x),
            None => x,
        }
    }

    /// Copy that keeps only the target and the named covariates, in that order
    /// (covariates first, target last).
    pub fn select(&self, covariates: &[String]) -> Result<Self> {
        let mut idx = covariates
            .iter()
            .map(|c| self.column_index(c))
            .collect::<Result<Vec<_>>>()?;
        idx.push(self.target);
        let names = idx.iter().map(|&i| self.names[i].clone()).collect();
        let m = self.cols();
        let mut values = Vec::with_capacity(self.rows * idx.len());
        for r in 0..self.rows {
            for &c in &idx {
                values.push(self.values[r * m + c]);
            }
        }
        let norm = self.norm.as_ref().map(|n| Normalization {
            scope: n.scope,
            min: idx.iter().map(|&i| n.min[i]).collect(),
            max: idx.iter().map(|&i| n.max[i]).collect(),
            constant: idx.iter().map(|&i| n.constant[i]).collect(),
        });
        Ok(Self {
            values,
            rows: self.rows,
            names,
            target: idx.len() - 1,
            split: self.split,
            norm,
        })
    }

    /// Sliding windows over one split.
    pub fn windows(&self, split: Split, window: usize, horizon: usize) -> Result<WindowSet> {
        let b = self
            .split
            .ok_or_else(|| DataError::Config("dataset has no split bounds".into()))?;
        WindowSet::new(b.range(split), window, horizon)
    }
}

fn resolve(names: &[String], name: &str) -> Result<usize> {
    names
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| DataError::UnknownColumn {
            name: name.to_string(),
            available: names.join(", "),
        })
}

/// Stride-1 windows inside a row range. Example `i` reads rows
/// `[start+i, start+i+window)` and is labelled by row `start+i+window+horizon-1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowSet {
    rows: Range<usize>,
    window: usize,
    horizon: usize,
}

impl WindowSet {
    pub fn new(rows: Range<usize>, window: usize, horizon: usize) -> Result<Self> {
        if window == 0 || horizon == 0 {
            return Err(DataError::Config("window and horizon must be ≥ 1".into()));
        }
        if window + horizon > rows.len() {
            return Err(DataError::Config(format!(
                "split of {} rows cannot hold window {window} + horizon {horizon}",
                rows.len()
            )));
        }
        Ok(Self {
            rows,
            window,
            horizon,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len() - self.window - self.horizon + 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// First input row of example `i`.
    pub fn start(&self, i: usize) -> usize {
        self.rows.start + i
    }

    /// Row whose target value labels example `i`.
    pub fn label_row(&self, i: usize) -> usize {
        self.rows.start + i + self.window + self.horizon - 1
    }

    pub fn starts(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).map(|i| self.start(i))
    }

    pub fn batch(&self, ds: &SeriesDataset, examples: &[usize]) -> WindowBatch {
        let m = ds.cols();
        let mut inputs = Vec::with_capacity(examples.len() * self.window * m);
        let mut labels = Vec::with_capacity(examples.len());
        for &i in examples {
            let s = self.start(i);
            for r in s..s + self.window {
                inputs.extend_from_slice(ds.row(r));
            }
            labels.push(ds.value(self.label_row(i), ds.target_index()));
        }
        WindowBatch {
            inputs,
            labels,
            batch: examples.len(),
            window: self.window,
            variables: m,
            horizon: self.horizon,
        }
    }
}

/// Dense `batch × window × variables` inputs with one label per example.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowBatch {
    pub inputs: Vec<f64>,
    pub labels: Vec<f64>,
    pub batch: usize,
    pub window: usize,
    pub variables: usize,
    pub horizon: usize,
}

impl WindowBatch {
    pub fn at(&self, example: usize, step: usize, variable: usize) -> f64 {
        self.inputs[(example * self.window + step) * self.variables + variable]
    }
}
