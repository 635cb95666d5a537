use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    clip_grad_norm, lr_schedule, mae_loss, Adam, Checkpoint, Prepared, Result, TrainConfig,
    TrainError,
};
use crate::correlation::CorrelationReport;
use crate::data::{SeriesDataset, Split};
use crate::metrics::{compute_metrics, MetricSet};
use crate::network::DaSpsModel;
use crate::tensor::{Tape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_mae: f64,
    pub valid_mae: f64,
}

/// One forecast; `timestamp` is the row index of the predicted value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastRow {
    pub timestamp: usize,
    pub truth: f64,
    pub pred: f64,
    pub truth_norm: f64,
    pub pred_norm: f64,
}

/// Forecasts over one split. Metrics are computed on normalized values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastReport {
    pub split: Split,
    pub horizon: usize,
    pub target: String,
    pub rows: Vec<ForecastRow>,
    pub metrics: MetricSet,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation MAE.
    pub checkpoint: Checkpoint,
    pub model: DaSpsModel,
    pub history: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_valid_mae: f64,
    pub valid: ForecastReport,
    pub selection: Option<CorrelationReport>,
    pub covariates: Vec<String>,
}

/// Forecasts every window of `split` with `model`.
pub fn evaluate_split(
    model: &DaSpsModel,
    prep: &Prepared,
    split: Split,
    cfg: &TrainConfig,
) -> Result<ForecastReport> {
    let ws = prep.windows(split)?;
    let g = prep.ds.target_index();
    let idx: Vec<usize> = (0..ws.len()).collect();
    let mut rows = Vec::with_capacity(ws.len());
    for chunk in idx.chunks(cfg.eval_batch) {
        let (input, labels) = prep.batch(&ws, chunk);
        let pred = model.predict(&input)?;
        for ((&i, y), p) in chunk.iter().zip(labels).zip(pred) {
            rows.push(ForecastRow {
                timestamp: ws.label_row(i),
                truth: prep.ds.denormalize(g, y),
                pred: prep.ds.denormalize(g, p),
                truth_norm: y,
                pred_norm: p,
            });
        }
    }
    let truth: Vec<f64> = rows.iter().map(|r| r.truth_norm).collect();
    let pred: Vec<f64> = rows.iter().map(|r| r.pred_norm).collect();
    let metrics = compute_metrics(&truth, &pred, cfg.corr_form)?;
    Ok(ForecastReport {
        split,
        horizon: cfg.horizon,
        target: prep.ds.target_name().to_string(),
        rows,
        metrics,
    })
}

/// Trains on the training split, selecting parameters by validation MAE.
/// `on_epoch` sees every log line as it is produced.
pub fn train(
    cfg: &TrainConfig,
    raw: &SeriesDataset,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    let prep = Prepared::fit(raw, cfg)?;
    let mut model = DaSpsModel::new(cfg.model_config(prep.q()), cfg.seed)?;
    let mut adam = Adam::new(model.store(), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let ws = prep.windows(Split::Train)?;
    let mut order: Vec<usize> = (0..ws.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, Vec<Tensor>)> = None;

    for epoch in 1..=cfg.epochs {
        let lr = lr_schedule(epoch, cfg.lr, cfg.lr_decay, cfg.decay_every);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(cfg.batch).enumerate() {
            let (input, labels) = prep.batch(&ws, chunk);
            let mut tape = Tape::new();
            let bound = model.store().bind(&mut tape);
            let pred = model.forward(&mut tape, &bound, &input)?;
            let loss = mae_loss(&mut tape, pred, &labels)?;
            let value = tape.value(loss)[0];
            if !value.is_finite() {
                return Err(TrainError::NonFinite {
                    epoch,
                    batch: b + 1,
                    loss: value,
                });
            }
            tape.backward(loss)?;
            model.store_mut().collect_grads(&tape, &bound);
            if cfg.clip {
                clip_grad_norm(model.store_mut(), cfg.clip_norm);
            }
            adam.step(model.store_mut(), lr)?;
            total += value * chunk.len() as f64;
        }
        let valid_mae = evaluate_split(&model, &prep, Split::Valid, cfg)?
            .metrics
            .mae;
        let log = EpochLog {
            epoch,
            lr,
            train_mae: total / ws.len() as f64,
            valid_mae,
        };
        on_epoch(&log);
        history.push(log);
        if best.as_ref().is_none_or(|(_, m, _)| valid_mae < *m) {
            best = Some((epoch, valid_mae, model.store().tensors().to_vec()));
        }
    }

    let (best_epoch, best_valid_mae, tensors) = best.expect("at least one epoch");
    for (slot, t) in model.store_mut().tensors_mut().iter_mut().zip(tensors) {
        *slot = t;
    }
    model.store_mut().zero_grads();
    let valid = evaluate_split(&model, &prep, Split::Valid, cfg)?;
    let norm = prep
        .ds
        .normalization()
        .cloned()
        .expect("prepared datasets are normalized");
    let checkpoint = Checkpoint::from_model(
        &model,
        cfg,
        prep.ds.target_name(),
        &prep.covariates,
        &norm,
        best_epoch,
        best_valid_mae,
    );
    Ok(TrainOutcome {
        checkpoint,
        model,
        history,
        best_epoch,
        best_valid_mae,
        valid,
        selection: prep.selection.clone(),
        covariates: prep.covariates.clone(),
    })
}

/// Forecasts `split` of `raw` with a saved model. The horizon must equal the
/// training horizon: the decoder depth is tied to it.
pub fn predict(
    ckpt: &Checkpoint,
    raw: &SeriesDataset,
    split: Split,
    horizon: usize,
) -> Result<ForecastReport> {
    if horizon != ckpt.config.horizon {
        return Err(TrainError::Config(format!(
            "checkpoint was trained for horizon {}, asked for {horizon}",
            ckpt.config.horizon
        )));
    }
    if raw.target_name() != ckpt.target {
        return Err(TrainError::Config(format!(
            "dataset target '{}' differs from checkpoint target '{}'",
            raw.target_name(),
            ckpt.target
        )));
    }
    let model = ckpt.model()?;
    let prep = Prepared::with_state(
        raw,
        &ckpt.config,
        &ckpt.covariates,
        ckpt.normalization.clone(),
    )?;
    evaluate_split(&model, &prep, split, &ckpt.config)
}

/// Writes `epoch,lr,train_mae,valid_mae` rows.
pub fn write_log(history: &[EpochLog], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| TrainError::Io(e.into()))?;
    for row in history {
        w.serialize(row).map_err(|e| TrainError::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}
