use super::{Decomposition, Result, TrainConfig, TrainError};
use crate::correlation::{filter_variables, CorrelationReport};
use crate::data::{Normalization, SeriesDataset, Split, WindowSet};
use crate::network::ModelInput;
use crate::ssa::{self, EnergyFrequencyPolicy, SsaScope};

/// Target branches' inputs for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowComponents {
    pub trend: Vec<f64>,
    pub seasonal: Vec<f64>,
}

/// A dataset ready for the model: split, normalized, reduced to the selected
/// covariates (target last), with the decomposition of every window cached.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub ds: SeriesDataset,
    pub covariates: Vec<String>,
    pub selection: Option<CorrelationReport>,
    window: usize,
    horizon: usize,
    // indexed by window start row
    components: Vec<Option<WindowComponents>>,
}

impl Prepared {
    /// Fits normalization statistics and covariate selection on `raw`.
    pub fn fit(raw: &SeriesDataset, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let ds = raw
            .split(cfg.ratios(), cfg.window, cfg.horizon)?
            .normalize(cfg.norm_scope)?;
        let (covariates, selection) = if !cfg.use_evps {
            (Vec::new(), None)
        } else if cfg.use_spearman {
            let report = filter_variables(&ds, cfg.threshold)?;
            (report.selected(), Some(report))
        } else {
            let g = ds.target_index();
            let all = (0..ds.cols())
                .filter(|&c| c != g)
                .map(|c| ds.names()[c].clone())
                .collect();
            (all, None)
        };
        let ds = ds.select(&covariates)?;
        Self::finish(ds, covariates, selection, cfg)
    }

    /// Reuses statistics and covariates from an earlier fit.
    pub fn with_state(
        raw: &SeriesDataset,
        cfg: &TrainConfig,
        covariates: &[String],
        normalization: Normalization,
    ) -> Result<Self> {
        let ds = raw
            .select(covariates)?
            .split(cfg.ratios(), cfg.window, cfg.horizon)?
            .with_normalization(normalization)?;
        Self::finish(ds, covariates.to_vec(), None, cfg)
    }

    fn finish(
        ds: SeriesDataset,
        covariates: Vec<String>,
        selection: Option<CorrelationReport>,
        cfg: &TrainConfig,
    ) -> Result<Self> {
        if cfg.use_evps && covariates.is_empty() {
            return Err(TrainError::Config(
                "no covariate passed selection (Q = 0); set use_evps = false to train \
                 without the covariate branch"
                    .into(),
            ));
        }
        let mut out = Self {
            components: vec![None; ds.rows()],
            ds,
            covariates,
            selection,
            window: cfg.window,
            horizon: cfg.horizon,
        };
        out.decompose(cfg)?;
        Ok(out)
    }

    fn decompose(&mut self, cfg: &TrainConfig) -> Result<()> {
        let t = self.window;
        let target = self.ds.column(self.ds.target_index());
        let policy = EnergyFrequencyPolicy::default();
        let series = match (cfg.decomposition, cfg.ssa_scope) {
            (Decomposition::Ssa, SsaScope::Series) => {
                Some(ssa::ssa(&target, cfg.ssa_embedding(), &policy)?)
            }
            _ => None,
        };
        for split in [Split::Train, Split::Valid, Split::Test] {
            let ws = self.ds.windows(split, t, self.horizon)?;
            for start in ws.starts() {
                let win = &target[start..start + t];
                let comp = if let Some(whole) = &series {
                    WindowComponents {
                        trend: whole.trend[start..start + t].to_vec(),
                        seasonal: whole.seasonal[start..start + t].to_vec(),
                    }
                } else {
                    match cfg.decomposition {
                        Decomposition::Ssa => {
                            let d = ssa::ssa(win, cfg.ssa_embedding(), &policy)?;
                            WindowComponents {
                                trend: d.trend,
                                seasonal: d.seasonal,
                            }
                        }
                        Decomposition::Stl => {
                            let (trend, seasonal) = ssa::stl_decompose(win, cfg.stl_kernel)?;
                            WindowComponents { trend, seasonal }
                        }
                        Decomposition::None => WindowComponents {
                            trend: win.to_vec(),
                            seasonal: win.to_vec(),
                        },
                    }
                };
                self.components[start] = Some(comp);
            }
        }
        Ok(())
    }

    pub fn q(&self) -> usize {
        self.covariates.len()
    }

    pub fn windows(&self, split: Split) -> Result<WindowSet> {
        Ok(self.ds.windows(split, self.window, self.horizon)?)
    }

    pub fn components(&self, start: usize) -> Option<&WindowComponents> {
        self.components.get(start).and_then(Option::as_ref)
    }

    /// Model inputs and normalized labels for examples `idx` of `ws`.
    pub fn batch(&self, ws: &WindowSet, idx: &[usize]) -> (ModelInput, Vec<f64>) {
        let t = self.window;
        let q = self.q();
        let g = self.ds.target_index();
        let b = idx.len();
        let mut input = ModelInput {
            batch: b,
            window: t,
            seasonal: Vec::with_capacity(b * t),
            trend: Vec::with_capacity(b * t),
            target: Vec::with_capacity(b * t),
            covariates: Vec::with_capacity(b * t * q),
            q,
        };
        let mut labels = Vec::with_capacity(b);
        for &i in idx {
            let start = ws.start(i);
            let comp = self
                .components(start)
                .expect("every window start is decomposed at preparation");
            input.seasonal.extend_from_slice(&comp.seasonal);
            input.trend.extend_from_slice(&comp.trend);
            for r in start..start + t {
                let row = self.ds.row(r);
                input.covariates.extend_from_slice(&row[..q]);
                input.target.push(row[g]);
            }
            labels.push(self.ds.value(ws.label_row(i), g));
        }
        (input, labels)
    }
}
