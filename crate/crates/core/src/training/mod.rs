//! Training loop, optimizer, learning-rate schedule and forecasting.

mod checkpoint;
mod config;
mod pipeline;
mod trainer;

pub use checkpoint::{Checkpoint, NamedTensor, CHECKPOINT_VERSION};
pub use config::{Ablation, Decomposition, TrainConfig};
pub use pipeline::{Prepared, WindowComponents};
pub use trainer::{
    evaluate_split, predict, train, write_log, EpochLog, ForecastReport, ForecastRow, TrainOutcome,
};

use thiserror::Error;

use crate::network::ParamStore;
use crate::tensor::{Tape, Var};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error(transparent)]
    Network(#[from] crate::network::NetworkError),
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
    #[error(transparent)]
    Correlation(#[from] crate::correlation::CorrelationError),
    #[error(transparent)]
    Ssa(#[from] crate::ssa::SsaError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite training loss {loss} at epoch {epoch}, batch {batch}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        loss: f64,
    },
    #[error("non-finite gradient in parameter '{0}'")]
    NanGradient(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// Mean absolute error of `pred` against constant `labels`; `pred` may be
/// `[n]` or `[n × 1]`.
pub fn mae_loss(tape: &mut Tape, pred: Var, labels: &[f64]) -> Result<Var> {
    if labels.is_empty() {
        return Err(TrainError::Config("empty batch".into()));
    }
    let shape = tape.shape(pred).to_vec();
    let y = tape.constant(shape, labels.to_vec())?;
    let d = tape.sub(pred, y)?;
    let a = tape.abs(d)?;
    Ok(tape.mean(a)?)
}

/// Step-decayed learning rate: `lr0` multiplied by `decay` once at every
/// multiple of `every` up to `epoch`.
///
/// The product is rounded to 15 significant digits so that decimal
/// schedules land on the nearest double (`0.001·0.9` is `0.0009`, not
/// `0.0009000000000000001`).
pub fn lr_schedule(epoch: usize, lr0: f64, decay: f64, every: usize) -> f64 {
    let steps = epoch.checked_div(every).unwrap_or(0);
    let lr = (0..steps).fold(lr0, |lr, _| lr * decay);
    format!("{lr:.14e}").parse().unwrap_or(lr)
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(store: &ParamStore, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros = || store.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            beta1,
            beta2,
            eps,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update from the gradients held in `store`. Nothing is
    /// modified when any gradient is non-finite.
    pub fn step(&mut self, store: &mut ParamStore, lr: f64) -> Result<()> {
        for (name, t) in store.iter() {
            if t.grad().is_some_and(|g| g.iter().any(|x| !x.is_finite())) {
                return Err(TrainError::NanGradient(name.to_string()));
            }
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((t, m), v) in store
            .tensors_mut()
            .iter_mut()
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            let Some(g) = t.grad().map(<[f64]>::to_vec) else {
                continue;
            };
            for (k, x) in t.data_mut().iter_mut().enumerate() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let mh = m[k] / bc1;
                let vh = v[k] / bc2;
                *x -= lr * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`;
/// returns the norm before clipping.
pub fn clip_grad_norm(store: &mut ParamStore, max_norm: f64) -> f64 {
    let norm = store
        .tensors()
        .iter()
        .filter_map(|t| t.grad())
        .flatten()
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm.is_finite() {
        let s = max_norm / norm;
        for t in store.tensors_mut() {
            if let Some(g) = t
                .grad()
                .map(|g| g.iter().map(|x| x * s).collect::<Vec<_>>())
            {
                t.zero_grad();
                let _ = t.accumulate_grad(&g);
            }
        }
    }
    norm
}
