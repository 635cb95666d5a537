use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use dasps::correlation::filter_variables;
use dasps::data::{SeriesDataset, Split};
use dasps::metrics::{compute_metrics, CorrForm, MetricSet};
use dasps::ssa::{self, EnergyFrequencyPolicy};
use dasps::training::{self, write_log, Checkpoint, Decomposition, ForecastReport, TrainConfig};
use serde_json::{json, Value};

use crate::manifest::{Clock, DatasetFingerprint, RunManifest};
use crate::{Common, CorrelateArgs, DecomposeArgs, EvaluateArgs, PredictArgs, TrainArgs, Usage};

/// Config file values with the shared flags layered on top.
fn config(common: &Common) -> Result<TrainConfig> {
    let mut cfg = match &common.config {
        Some(path) => TrainConfig::load(path)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(h) = common.horizon {
        cfg.horizon = h;
    }
    if common.bias_inside_gate {
        cfg.bias_inside_gate = true;
    }
    Ok(cfg)
}

fn out_dir(common: &Common) -> Result<PathBuf> {
    let dir = common.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn target_of(flag: &Option<String>, cfg: &TrainConfig) -> Result<String> {
    flag.clone().or_else(|| cfg.target.clone()).ok_or_else(|| {
        Usage("no target column: pass --target or set `target` in the config".into()).into()
    })
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn write_columns(path: &Path, header: &[&str], columns: &[&[f64]]) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(header)?;
    let rows = columns.first().map_or(0, |c| c.len());
    for r in 0..rows {
        w.write_record(columns.iter().map(|c| c[r].to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// `timestamp,truth,pred,truth_norm,pred_norm`, one row per forecast.
fn write_curves(path: &Path, report: &ForecastReport) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["timestamp", "truth", "pred", "truth_norm", "pred_norm"])?;
    for r in &report.rows {
        w.write_record([
            r.timestamp.to_string(),
            r.truth.to_string(),
            r.pred.to_string(),
            r.truth_norm.to_string(),
            r.pred_norm.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn metrics_json(m: &MetricSet, form: CorrForm, scale: &str) -> Result<Value> {
    let mut v = serde_json::to_value(m)?;
    v["corr_form"] = serde_json::to_value(form)?;
    v["scale"] = json!(scale);
    Ok(v)
}

pub fn decompose(a: &DecomposeArgs) -> Result<()> {
    let cfg = config(&a.common)?;
    let ds = SeriesDataset::load_csv(&a.data, &a.column)?;
    let x = ds.column(ds.target_index());
    let method = match a.method.as_deref() {
        Some(m) => m.parse::<Decomposition>().map_err(Usage)?,
        None => cfg.decomposition,
    };
    let dir = out_dir(&a.common)?;
    let (csv_path, json_path) = (
        dir.join("decomposition.csv"),
        dir.join("decomposition.json"),
    );
    let sidecar = match method {
        Decomposition::Ssa => {
            let m = a.m.unwrap_or_else(|| cfg.ssa_embedding());
            let d = ssa::ssa(&x, m, &EnergyFrequencyPolicy::default())?;
            write_columns(
                &csv_path,
                &["trend", "seasonal", "noise"],
                &[&d.trend, &d.seasonal, &d.noise],
            )?;
            json!({
                "column": a.column,
                "method": "ssa",
                "rows": x.len(),
                "m": m,
                "eigenvalues": d.eigenvalues,
                "groups": d.groups.groups,
            })
        }
        Decomposition::Stl => {
            let kernel = a.kernel.unwrap_or(cfg.stl_kernel);
            let (trend, seasonal) = ssa::stl_decompose(&x, kernel)?;
            write_columns(&csv_path, &["trend", "seasonal"], &[&trend, &seasonal])?;
            json!({
                "column": a.column,
                "method": "stl",
                "rows": x.len(),
                "kernel": kernel,
            })
        }
        Decomposition::None => {
            return Err(Usage("decompose needs --method ssa or stl".into()).into());
        }
    };
    write_json(&json_path, &sidecar)?;
    eprintln!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

pub fn correlate(a: &CorrelateArgs) -> Result<()> {
    let mut cfg = config(&a.common)?;
    if let Some(t) = a.threshold {
        cfg.threshold = t;
    }
    cfg.validate()?;
    let target = target_of(&a.target, &cfg)?;
    let ds = SeriesDataset::load_csv(&a.data, &target)?
        .split(cfg.ratios(), cfg.window, cfg.horizon)?
        .normalize(cfg.norm_scope)?;
    let report = filter_variables(&ds, cfg.threshold)?;
    if a.common.out_dir.is_some() {
        let path = out_dir(&a.common)?.join("correlation.json");
        write_json(&path, &report)?;
        eprintln!("wrote {}", path.display());
    }
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

pub fn train(a: &TrainArgs, argv: &[String]) -> Result<()> {
    let clock = Clock::start();
    let mut cfg = config(&a.common)?;
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(h) = a.hidden {
        cfg.hidden = h;
    }
    if let Some(t) = a.threshold {
        cfg.threshold = t;
    }
    if let Some(ablation) = a.ablation {
        cfg = ablation.apply(&cfg);
    }
    let target = target_of(&a.target, &cfg)?;
    cfg.target = Some(target.clone());
    cfg.validate()?;
    let raw = SeriesDataset::load_csv(&a.data, &target)?;
    let dataset = DatasetFingerprint::of(&a.data, &raw)?;

    let outcome = training::train(&cfg, &raw, |log| {
        eprintln!(
            "epoch {:>4}  lr {:.3e}  train_mae {:.6}  valid_mae {:.6}",
            log.epoch, log.lr, log.train_mae, log.valid_mae
        );
    })?;
    let test = training::predict(&outcome.checkpoint, &raw, Split::Test, cfg.horizon)?;

    let dir = out_dir(&a.common)?;
    let paths: BTreeMap<&str, PathBuf> = [
        ("checkpoint", "checkpoint.json"),
        ("log", "train_log.csv"),
        ("metrics", "metrics.json"),
        ("curves_valid", "curves_valid.csv"),
        ("curves_test", "curves_test.csv"),
    ]
    .into_iter()
    .map(|(k, f)| (k, dir.join(f)))
    .collect();
    outcome.checkpoint.save(&paths["checkpoint"])?;
    write_log(&outcome.history, &paths["log"])?;
    write_curves(&paths["curves_valid"], &outcome.valid)?;
    write_curves(&paths["curves_test"], &test)?;
    let metrics = json!({
        "target": target,
        "ablation": a.ablation.map(|x| x.name()),
        "covariates": outcome.covariates,
        "selection": outcome.selection,
        "best_epoch": outcome.best_epoch,
        "best_valid_mae": outcome.best_valid_mae,
        "valid": metrics_json(&outcome.valid.metrics, cfg.corr_form, "normalized")?,
        "test": metrics_json(&test.metrics, cfg.corr_form, "normalized")?,
    });
    write_json(&paths["metrics"], &metrics)?;

    let manifest_path = dir.join("manifest.json");
    let mut outputs: BTreeMap<String, String> = paths
        .iter()
        .map(|(k, p)| (k.to_string(), p.display().to_string()))
        .collect();
    outputs.insert("manifest".into(), manifest_path.display().to_string());
    let manifest = RunManifest {
        command: argv.to_vec(),
        seed: cfg.seed,
        config: cfg,
        dataset,
        outputs,
        timing: clock.timing(),
    };
    write_json(&manifest_path, &manifest)?;
    eprintln!(
        "best epoch {} (valid MAE {:.6}); artifacts in {}",
        outcome.best_epoch,
        outcome.best_valid_mae,
        dir.display()
    );
    Ok(())
}

fn forecast(
    checkpoint: &Path,
    data: &Path,
    split: Split,
    common: &Common,
) -> Result<(Checkpoint, ForecastReport)> {
    let ckpt = Checkpoint::load(checkpoint)?;
    if common.config.is_some() || common.seed.is_some() || common.bias_inside_gate {
        eprintln!("note: the checkpoint fixes the configuration; --config, --seed and --bias-inside-gate are ignored");
    }
    let horizon = common.horizon.unwrap_or(ckpt.config.horizon);
    let raw = SeriesDataset::load_csv(data, &ckpt.target)?;
    let report = training::predict(&ckpt, &raw, split, horizon)?;
    Ok((ckpt, report))
}

pub fn predict(a: &PredictArgs) -> Result<()> {
    let (ckpt, report) = forecast(&a.checkpoint, &a.data, a.split, &a.common)?;
    let path = out_dir(&a.common)?.join(format!("predictions_{}.csv", a.split));
    write_curves(&path, &report)?;
    eprintln!("wrote {} ({} forecasts)", path.display(), report.rows.len());
    let m = metrics_json(&report.metrics, ckpt.config.corr_form, "normalized")?;
    println!("{}", serde_json::to_string_pretty(&m)?);
    Ok(())
}

/// Truth and prediction columns of a prediction CSV, preferring the
/// normalized pair so scores match those reported during training.
fn read_predictions(path: &Path) -> Result<(Vec<f64>, Vec<f64>, &'static str)> {
    let mut r =
        csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = r.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (ti, pi, scale) = match (find("truth_norm"), find("pred_norm")) {
        (Some(t), Some(p)) => (t, p, "normalized"),
        _ => match (find("truth"), find("pred")) {
            (Some(t), Some(p)) => (t, p, "raw"),
            _ => {
                return Err(Usage(format!(
                    "{} needs `truth` and `pred` columns",
                    path.display()
                ))
                .into())
            }
        },
    };
    let (mut truth, mut pred) = (Vec::new(), Vec::new());
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let cell = |c: usize| -> Result<f64> {
            let s = rec.get(c).unwrap_or("").trim();
            s.parse()
                .with_context(|| format!("row {}: cannot parse '{s}' as a number", i + 1))
        };
        truth.push(cell(ti)?);
        pred.push(cell(pi)?);
    }
    Ok((truth, pred, scale))
}

pub fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let form = if a.corr_standard {
        CorrForm::Standard
    } else {
        config(&a.common)?.corr_form
    };
    let (truth, pred, scale) = match (&a.predictions, &a.checkpoint, &a.data) {
        (Some(p), _, _) => read_predictions(p)?,
        (None, Some(ckpt), Some(data)) => {
            let (_, report) = forecast(ckpt, data, a.split, &a.common)?;
            if a.common.out_dir.is_some() {
                let path = out_dir(&a.common)?.join(format!("curves_{}.csv", a.split));
                write_curves(&path, &report)?;
                eprintln!("wrote {}", path.display());
            }
            let truth = report.rows.iter().map(|r| r.truth_norm).collect();
            let pred = report.rows.iter().map(|r| r.pred_norm).collect();
            (truth, pred, "normalized")
        }
        _ => {
            return Err(
                Usage("evaluate needs --predictions, or --checkpoint with --data".into()).into(),
            )
        }
    };
    let m = compute_metrics(&truth, &pred, form)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&metrics_json(&m, form, scale)?)?
    );
    Ok(())
}
