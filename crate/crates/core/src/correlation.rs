//! Spearman rank correlation and threshold-based covariate selection.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{SeriesDataset, Split};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CorrelationError {
    #[error("rank correlation needs at least 2 observations, got {0}")]
    TooShort(usize),
    #[error("series lengths differ: {0} vs {1}")]
    Length(usize, usize),
    #[error("dataset has no split bounds; coefficients are computed on the training split")]
    Unsplit,
}

pub type Result<T> = std::result::Result<T, CorrelationError>;

/// 1-based ranks; tied values share the mean of the positions they cover.
pub fn ranks(x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 2 {
        return Err(CorrelationError::TooShort(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) → mean 1-based rank
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spearman {
    pub rho: f64,
    /// Set when either series is constant; `rho` is then 0.
    pub degenerate: bool,
}

/// Pearson correlation of the rank vectors.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Spearman> {
    if x.len() != y.len() {
        return Err(CorrelationError::Length(x.len(), y.len()));
    }
    let rx = ranks(x)?;
    let ry = ranks(y)?;
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(Spearman {
            rho: 0.0,
            degenerate: true,
        });
    }
    let rho = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    Ok(Spearman {
        rho,
        degenerate: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub variable: String,
    pub column: usize,
    pub rho: f64,
    pub degenerate: bool,
    pub selected: bool,
}

/// Coefficients of every covariate against the target, sorted by `|ρ|`
/// descending (ties in column order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub target: String,
    pub threshold: f64,
    pub entries: Vec<CorrelationEntry>,
}

impl CorrelationReport {
    pub fn selected(&self) -> Vec<String> {
        self.entries
            .iter()
            .filter(|e| e.selected)
            .map(|e| e.variable.clone())
            .collect()
    }

    pub fn rho(&self, variable: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.variable == variable)
            .map(|e| e.rho)
    }

    fn from_coefficients(
        target: String,
        threshold: f64,
        mut entries: Vec<CorrelationEntry>,
    ) -> Self {
        for e in &mut entries {
            e.selected = !e.degenerate && e.rho.abs() >= threshold;
        }
        entries.sort_by(|a, b| {
            b.rho
                .abs()
                .total_cmp(&a.rho.abs())
                .then(a.column.cmp(&b.column))
        });
        Self {
            target,
            threshold,
            entries,
        }
    }
}

/// Scores every non-target variable on the training split and keeps those
/// with `|ρ| ≥ threshold`. Constant variables are reported as degenerate.
pub fn filter_variables(ds: &SeriesDataset, threshold: f64) -> Result<CorrelationReport> {
    let bounds = ds.split_bounds().ok_or(CorrelationError::Unsplit)?;
    let rows = bounds.range(Split::Train);
    let g = ds.target_index();
    let target = ds.column_range(g, rows.clone());
    let constant = ds.normalization().map(|n| n.constant.clone());
    let mut entries = Vec::new();
    for c in (0..ds.cols()).filter(|&c| c != g) {
        let flagged = constant.as_ref().is_some_and(|k| k[c]);
        let s = if flagged {
            Spearman {
                rho: 0.0,
                degenerate: true,
            }
        } else {
            spearman(&target, &ds.column_range(c, rows.clone()))?
        };
        entries.push(CorrelationEntry {
            variable: ds.names()[c].clone(),
            column: c,
            rho: s.rho,
            degenerate: s.degenerate,
            selected: false,
        });
    }
    Ok(CorrelationReport::from_coefficients(
        ds.target_name().to_string(),
        threshold,
        entries,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::NormScope;

    #[test]
    fn rank_examples() {
        assert_eq!(ranks(&[10.0, 20.0, 30.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(ranks(&[5.0, 5.0, 1.0]).unwrap(), vec![2.5, 2.5, 1.0]);
        assert_eq!(ranks(&[7.0, 7.0, 7.0]).unwrap(), vec![2.0, 2.0, 2.0]);
        assert!(matches!(ranks(&[1.0]), Err(CorrelationError::TooShort(1))));
    }

    #[test]
    fn spearman_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(spearman(&x, &[10.0, 20.0, 30.0, 40.0]).unwrap().rho, 1.0);
        assert_eq!(spearman(&x, &[4.0, 3.0, 2.0, 1.0]).unwrap().rho, -1.0);
        // Σd² = 4 over n = 5: 1 − 6·4/(5·24) = 0.8
        let r = spearman(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 1.0, 4.0, 3.0, 5.0]).unwrap();
        assert!((r.rho - 0.8).abs() < 1e-12);
    }

    #[test]
    fn constant_series_is_degenerate() {
        let s = spearman(&[1.0, 2.0, 3.0], &[4.0, 4.0, 4.0]).unwrap();
        assert_eq!(s.rho, 0.0);
        assert!(s.degenerate);
    }

    #[test]
    fn selection_by_absolute_value() {
        let mk = |v: &str, c, rho| CorrelationEntry {
            variable: v.into(),
            column: c,
            rho,
            degenerate: false,
            selected: false,
        };
        let r = CorrelationReport::from_coefficients(
            "y".into(),
            0.5,
            vec![mk("a", 0, 0.8), mk("b", 1, -0.6), mk("c", 2, 0.3)],
        );
        assert_eq!(r.selected(), vec!["a".to_string(), "b".to_string()]);
        assert_eq!(r.entries[2].variable, "c");
    }

    #[test]
    fn filter_selects_copy_and_skips_constant() {
        let y: Vec<f64> = (0..50).map(|i| ((i * 7) % 13) as f64).collect();
        let ds = SeriesDataset::from_columns(
            vec!["copy".into(), "flat".into(), "y".into()],
            vec![y.clone(), vec![1.0; 50], y],
            "y",
        )
        .unwrap()
        .split((0.6, 0.2, 0.2), 3, 1)
        .unwrap()
        .normalize(NormScope::Train)
        .unwrap();
        let r = filter_variables(&ds, 0.5).unwrap();
        assert_eq!(r.selected(), vec!["copy".to_string()]);
        assert_eq!(r.rho("copy"), Some(1.0));
        let flat = r.entries.iter().find(|e| e.variable == "flat").unwrap();
        assert!(flat.degenerate && !flat.selected);
        assert!(r.entries.iter().all(|e| e.variable != "y"));
    }
}
