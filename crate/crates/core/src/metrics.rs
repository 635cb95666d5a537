//! Forecast accuracy metrics and the persistence yardstick.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{SeriesDataset, Split};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("metrics need at least 2 points, got {0}")]
    TooShort(usize),
    #[error("truth has {0} points but prediction has {1}")]
    Length(usize, usize),
    #[error("{0}")]
    Data(String),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// How CORR is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrForm {
    /// Pearson correlation with the extra leading `1/n` factor.
    #[default]
    Printed,
    /// Conventional Pearson correlation.
    Standard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub mae: f64,
    pub rmse: f64,
    /// `None` when the truth series is constant.
    pub rse: Option<f64>,
    /// `None` when either series is constant.
    pub corr: Option<f64>,
    pub n: usize,
    pub flags: Vec<String>,
}

pub fn compute_metrics(truth: &[f64], pred: &[f64], form: CorrForm) -> Result<MetricSet> {
    if truth.len() != pred.len() {
        return Err(MetricsError::Length(truth.len(), pred.len()));
    }
    let n = truth.len();
    if n < 2 {
        return Err(MetricsError::TooShort(n));
    }
    let nf = n as f64;
    let mean_y = truth.iter().sum::<f64>() / nf;
    let mean_p = pred.iter().sum::<f64>() / nf;
    let (mut abs, mut sq, mut var_y, mut var_p, mut cov) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (y, p) in truth.iter().zip(pred) {
        let e = y - p;
        abs += e.abs();
        sq += e * e;
        let (dy, dp) = (y - mean_y, p - mean_p);
        var_y += dy * dy;
        var_p += dp * dp;
        cov += dy * dp;
    }
    let mut flags = Vec::new();
    let rse = if var_y > 0.0 {
        Some((sq / var_y).sqrt())
    } else {
        flags.push("rse_undefined_constant_truth".to_string());
        None
    };
    let corr = if var_y > 0.0 && var_p > 0.0 {
        let pearson = cov / (var_y * var_p).sqrt();
        Some(match form {
            CorrForm::Printed => pearson / nf,
            CorrForm::Standard => pearson,
        })
    } else {
        flags.push("corr_undefined_constant_series".to_string());
        None
    };
    Ok(MetricSet {
        mae: abs / nf,
        rmse: (sq / nf).sqrt(),
        rse,
        corr,
        n,
        flags,
    })
}

/// Normalized truth and persistence predictions (`ŷ = last value of the window`)
/// for every window of a split.
pub fn persistence_series(
    ds: &SeriesDataset,
    split: Split,
    window: usize,
    horizon: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let ws = ds
        .windows(split, window, horizon)
        .map_err(|e| MetricsError::Data(e.to_string()))?;
    let g = ds.target_index();
    let truth = (0..ws.len())
        .map(|i| ds.value(ws.label_row(i), g))
        .collect();
    let pred = (0..ws.len())
        .map(|i| ds.value(ws.start(i) + window - 1, g))
        .collect();
    Ok((truth, pred))
}

pub fn persistence_baseline(
    ds: &SeriesDataset,
    split: Split,
    window: usize,
    horizon: usize,
    form: CorrForm,
) -> Result<MetricSet> {
    let (truth, pred) = persistence_series(ds, split, window, horizon)?;
    compute_metrics(&truth, &pred, form)
}
