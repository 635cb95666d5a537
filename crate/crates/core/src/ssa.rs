//! Singular spectrum analysis of a single series, plus the moving-average
//! trend/seasonal split used as the comparator decomposition.
//!
//! The pipeline is: Hankel embedding → symmetric eigendecomposition of the
//! lag-covariance `S = X·Xᵀ` → grouping of the elementary components into
//! trend / seasonal / noise → diagonal averaging back to series.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SsaError {
    #[error("embedding dimension m={m} must satisfy 1 < m < t={t}")]
    EmbeddingRange { m: usize, t: usize },
    #[error("matrix of {len} entries is not {m}×{l}")]
    Dimensions { len: usize, m: usize, l: usize },
    #[error("moving-average kernel must be odd and ≥ 3, got {0}")]
    Kernel(usize),
    #[error("cannot decompose an empty series")]
    Empty,
}

pub type Result<T> = std::result::Result<T, SsaError>;

/// Whether decomposition runs once over the whole target column or per input window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SsaScope {
    Series,
    #[default]
    Window,
}

impl std::str::FromStr for SsaScope {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "series" => Ok(Self::Series),
            "window" => Ok(Self::Window),
            other => Err(format!(
                "unknown ssa scope '{other}' (expected series|window)"
            )),
        }
    }
}

/// `m × l` Hankel matrix with `entry(i, j) = window[i + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TrajectoryMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    /// Lag-covariance matrix `X·Xᵀ` (m × m).
    fn gram(&self) -> Vec<f64> {
        let (m, l) = (self.rows, self.cols);
        let mut s = vec![0.0; m * m];
        for i in 0..m {
            let ri = &self.data[i * l..(i + 1) * l];
            for j in i..m {
                let rj = &self.data[j * l..(j + 1) * l];
                let v: f64 = ri.iter().zip(rj).map(|(a, b)| a * b).sum();
                s[i * m + j] = v;
                s[j * m + i] = v;
            }
        }
        s
    }

    /// `Xᵀ·d` for a length-m vector.
    fn project(&self, d: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.cols];
        for (i, di) in d.iter().enumerate() {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            for (uj, x) in u.iter_mut().zip(row) {
                *uj += di * x;
            }
        }
        u
    }
}

pub fn embed(window: &[f64], m: usize) -> Result<TrajectoryMatrix> {
    let t = window.len();
    if m <= 1 || m >= t {
        return Err(SsaError::EmbeddingRange { m, t });
    }
    let l = t - m + 1;
    let mut data = Vec::with_capacity(m * l);
    for i in 0..m {
        data.extend_from_slice(&window[i..i + l]);
    }
    Ok(TrajectoryMatrix {
        rows: m,
        cols: l,
        data,
    })
}

/// Eigen-triples of a trajectory matrix, sorted by non-increasing eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    /// λ₁ ≥ … ≥ λ_m ≥ 0.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors `D_i` of `X·Xᵀ`, length m each.
    pub eigenvectors: Vec<Vec<f64>>,
    /// Factor vectors `E_i = Xᵀ·D_i / √λ_i` for `i < rank`.
    pub factors: Vec<Vec<f64>>,
    /// Number of eigenvalues above `1e-10·λ₁`.
    pub rank: usize,
}

pub const RANK_TOLERANCE: f64 = 1e-10;

/// Cyclic Jacobi eigendecomposition of a dense symmetric `n × n` matrix.
/// Returns unsorted eigenvalues and the eigenvectors as columns of `v` (row-major).
fn jacobi_eigen(mut a: Vec<f64>, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let frob: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if frob == 0.0 {
        return (vec![0.0; n], v);
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if off.sqrt() <= 1e-15 * frob {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i * n + i]).collect(), v)
}

pub fn decompose(x: &TrajectoryMatrix) -> EigenSystem {
    let m = x.rows;
    let (values, vecs) = jacobi_eigen(x.gram(), m);
    let mut order: Vec<usize> = (0..m).collect();
    // ties keep index order so the result is deterministic
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| values[i].max(0.0)).collect();
    let eigenvectors: Vec<Vec<f64>> = order
        .iter()
        .map(|&c| (0..m).map(|r| vecs[r * m + c]).collect())
        .collect();
    let lead = eigenvalues.first().copied().unwrap_or(0.0);
    let rank = if lead > 0.0 {
        eigenvalues
            .iter()
            .filter(|&&l| l > RANK_TOLERANCE * lead)
            .count()
    } else {
        0
    };
    let factors = (0..rank)
        .map(|i| {
            let scale = 1.0 / eigenvalues[i].sqrt();
            x.project(&eigenvectors[i])
                .into_iter()
                .map(|u| u * scale)
                .collect()
        })
        .collect();
    EigenSystem {
        eigenvalues,
        eigenvectors,
        factors,
        rank,
    }
}

/// Elementary matrix `√λ_i·D_i·E_iᵀ`, computed as `D_i·(Xᵀ D_i)ᵀ` so it is
/// defined for every `i < m`, including numerically null directions.
pub fn elementary(x: &TrajectoryMatrix, es: &EigenSystem, i: usize) -> Vec<f64> {
    let d = &es.eigenvectors[i];
    let u = x.project(d);
    let mut out = Vec::with_capacity(x.rows * x.cols);
    for di in d {
        out.extend(u.iter().map(|uj| di * uj));
    }
    out
}

/// Diagonal averaging of an `m × l` matrix into a series of length `m + l − 1`.
/// When `m ≥ l` the matrix is read transposed so the short side indexes rows.
pub fn reconstruct(matrix: &[f64], m: usize, l: usize) -> Result<Vec<f64>> {
    if m == 0 || l == 0 || matrix.len() != m * l {
        return Err(SsaError::Dimensions {
            len: matrix.len(),
            m,
            l,
        });
    }
    let (ms, ls) = (m.min(l), m.max(l));
    let y = |j: usize, k: usize| {
        if m < l {
            matrix[j * l + k]
        } else {
            matrix[k * l + j]
        }
    };
    let t = m + l - 1;
    let mut out = Vec::with_capacity(t);
    for i in 0..t {
        let (lo, hi) = if i + 1 < ms {
            (0, i + 1)
        } else if i < ls {
            (0, ms)
        } else {
            (i + 1 - ls, ms)
        };
        let sum: f64 = (lo..hi).map(|j| y(j, i - j)).sum();
        out.push(sum / (hi - lo) as f64);
    }
    Ok(out)
}

/// Diagonal averaging of a rank-one matrix `d·uᵀ` without materializing it.
fn reconstruct_outer(d: &[f64], u: &[f64]) -> Vec<f64> {
    let (m, l) = (d.len(), u.len());
    let t = m + l - 1;
    let mut sum = vec![0.0; t];
    let mut count = vec![0usize; t];
    for (r, dr) in d.iter().enumerate() {
        for (c, uc) in u.iter().enumerate() {
            sum[r + c] += dr * uc;
            count[r + c] += 1;
        }
    }
    sum.iter().zip(&count).map(|(s, c)| s / *c as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    Trend,
    Seasonal,
    Noise,
}

/// Group label for each of the `rank` leading components.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupAssignment {
    pub groups: Vec<Component>,
}

impl GroupAssignment {
    pub fn indices(&self, which: Component) -> Vec<usize> {
        self.groups
            .iter()
            .enumerate()
            .filter(|(_, g)| **g == which)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Decides which elementary components form the trend, seasonal and noise groups.
pub trait GroupingPolicy {
    /// `components[i]` is the diagonally averaged series of component `i < es.rank`.
    fn assign(&self, es: &EigenSystem, components: &[Vec<f64>]) -> GroupAssignment;
}

/// Default policy: small eigenvalues are noise; the remaining components are
/// trend when they are slowly varying (few sign changes) and seasonal otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyFrequencyPolicy {
    /// Components with `λ_i < noise_floor·λ₁` are noise.
    pub noise_floor: f64,
    /// Components with `λ_i < noise_ratio·median(λ)` are noise.
    pub noise_ratio: f64,
    /// A component with at most this many zero crossings counts as trend; 2
    /// admits at most one full cycle across the window.
    pub trend_max_crossings: usize,
    /// Half-width of the dead band around zero, relative to the component's
    /// peak, that a crossing must clear.
    pub crossing_band: f64,
}

impl Default for EnergyFrequencyPolicy {
    fn default() -> Self {
        Self {
            noise_floor: 1e-4,
            noise_ratio: 20.0,
            trend_max_crossings: 2,
            crossing_band: 0.1,
        }
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Sign changes along a series, counted with hysteresis: a crossing registers
/// only when the series moves from below `−band·peak` to above `+band·peak` or
/// back, so jitter around zero does not count.
pub fn zero_crossings(x: &[f64], band: f64) -> usize {
    let peak = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    // a tiny floor keeps exact zeros from registering when band = 0
    let eps = peak * band.max(1e-9);
    let mut last = 0.0f64;
    let mut count = 0;
    for v in x.iter().filter(|v| v.abs() > eps) {
        if last != 0.0 && v.signum() != last {
            count += 1;
        }
        last = v.signum();
    }
    count
}

impl GroupingPolicy for EnergyFrequencyPolicy {
    fn assign(&self, es: &EigenSystem, components: &[Vec<f64>]) -> GroupAssignment {
        let d = es.rank;
        if d == 1 {
            return GroupAssignment {
                groups: vec![Component::Trend],
            };
        }
        let lead = es.eigenvalues.first().copied().unwrap_or(0.0);
        let med = median(&es.eigenvalues);
        let groups = (0..d)
            .map(|i| {
                let lambda = es.eigenvalues[i];
                if lambda < self.noise_floor * lead || lambda < self.noise_ratio * med {
                    Component::Noise
                } else if zero_crossings(&components[i], self.crossing_band)
                    <= self.trend_max_crossings
                {
                    Component::Trend
                } else {
                    Component::Seasonal
                }
            })
            .collect();
        GroupAssignment { groups }
    }
}

/// Trend / seasonal / noise series of one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsaDecomposition {
    pub trend: Vec<f64>,
    pub seasonal: Vec<f64>,
    pub noise: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub groups: GroupAssignment,
}

/// The window mean is removed before embedding and returned inside the trend.
/// Without centering the level shares the leading eigenvalue range with any
/// strong oscillation and the two mix across components.
pub fn ssa(window: &[f64], m: usize, policy: &dyn GroupingPolicy) -> Result<SsaDecomposition> {
    let mean = window.iter().sum::<f64>() / window.len().max(1) as f64;
    let centered: Vec<f64> = window.iter().map(|v| v - mean).collect();
    let x = embed(&centered, m)?;
    let es = decompose(&x);
    let components: Vec<Vec<f64>> = (0..es.rank)
        .map(|i| reconstruct_outer(&es.eigenvectors[i], &x.project(&es.eigenvectors[i])))
        .collect();
    let groups = policy.assign(&es, &components);
    let t = window.len();
    let mut trend = vec![mean; t];
    let mut seasonal = vec![0.0; t];
    for (comp, g) in components.iter().zip(&groups.groups) {
        let dst = match g {
            Component::Trend => &mut trend,
            Component::Seasonal => &mut seasonal,
            Component::Noise => continue,
        };
        dst.iter_mut().zip(comp).for_each(|(a, b)| *a += b);
    }
    // the noise group also absorbs the numerically null directions beyond the rank
    let noise = window
        .iter()
        .zip(trend.iter().zip(&seasonal))
        .map(|(x, (tr, se))| x - tr - se)
        .collect();
    Ok(SsaDecomposition {
        trend,
        seasonal,
        noise,
        eigenvalues: es.eigenvalues,
        groups,
    })
}

/// Default embedding dimension: half the window.
pub fn default_embedding(t: usize) -> usize {
    t / 2
}

/// Moving-average trend with edge replication, and seasonal = series − trend.
pub fn stl_decompose(window: &[f64], kernel: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if kernel < 3 || kernel.is_multiple_of(2) {
        return Err(SsaError::Kernel(kernel));
    }
    if window.is_empty() {
        return Err(SsaError::Empty);
    }
    let r = kernel / 2;
    let t = window.len();
    let padded = |i: isize| window[i.clamp(0, t as isize - 1) as usize];
    let trend: Vec<f64> = (0..t as isize)
        .map(|i| {
            let s: f64 = (i - r as isize..=i + r as isize).map(padded).sum();
            s / kernel as f64
        })
        .collect();
    let seasonal = window.iter().zip(&trend).map(|(x, tr)| x - tr).collect();
    Ok((trend, seasonal))
}
