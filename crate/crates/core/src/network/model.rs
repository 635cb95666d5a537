use serde::{Deserialize, Serialize};

use super::attention::no_covariates;
use super::{
    linear, Bound, ConvLstm, Initializer, LAttention, Lstm, NetworkError, ParamId, ParamStore,
    Result,
};
use crate::tensor::{Tape, Tensor, Var};

/// Architecture hyperparameters; everything needed to rebuild the parameter layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub window: usize,
    pub patch_len: usize,
    pub hidden: usize,
    pub feature_dim: usize,
    pub kernel: usize,
    /// Number of covariates fed to the attention branch.
    pub covariates: usize,
    pub horizon: usize,
    /// Conv-LSTM over patches for the trend; a plain LSTM otherwise.
    pub use_pconv: bool,
    /// Attention branch over covariates.
    pub use_evps: bool,
    pub bias_inside_gate: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            window: 96,
            patch_len: 24,
            hidden: 64,
            feature_dim: 64,
            kernel: 3,
            covariates: 1,
            horizon: 3,
            use_pconv: true,
            use_evps: true,
            bias_inside_gate: false,
        }
    }
}

/// One batch of model inputs. Per-example series are stored row-major:
/// `seasonal`, `trend` and `target` are `batch × window`, `covariates` is
/// `batch × window × Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub batch: usize,
    pub window: usize,
    pub seasonal: Vec<f64>,
    pub trend: Vec<f64>,
    pub target: Vec<f64>,
    pub covariates: Vec<f64>,
    pub q: usize,
}

#[derive(Debug, Clone)]
enum TrendBranch {
    Patched(ConvLstm),
    Plain(Lstm),
}

#[derive(Debug, Clone)]
pub struct DaSpsModel {
    config: ModelConfig,
    store: ParamStore,
    seasonal: Lstm,
    trend: TrendBranch,
    attention: Option<LAttention>,
    tvps_w: ParamId,
    tvps_b: ParamId,
    w_tvps: ParamId,
    w_evps: Option<ParamId>,
    out_w: ParamId,
    out_b: ParamId,
}

impl DaSpsModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let c = &config;
        if c.window == 0 || c.hidden == 0 || c.feature_dim == 0 || c.horizon == 0 {
            return Err(NetworkError::Config(
                "window, hidden, feature_dim and horizon must be positive".into(),
            ));
        }
        if c.use_evps && c.covariates == 0 {
            return Err(no_covariates());
        }
        if c.use_pconv && (c.patch_len == 0 || c.patch_len > c.window) {
            return Err(NetworkError::Config(format!(
                "patch length {} must be in 1..={}",
                c.patch_len, c.window
            )));
        }
        let mut store = ParamStore::default();
        let mut init = Initializer::new(seed);
        let seasonal = Lstm::new(&mut store, &mut init, "seasonal", 1, c.hidden);
        let (trend, trend_width) = if c.use_pconv {
            let cell = ConvLstm::new(&mut store, &mut init, "trend", c.patch_len, c.kernel)?;
            (TrendBranch::Patched(cell), c.patch_len)
        } else {
            let cell = Lstm::new(&mut store, &mut init, "trend", 1, c.hidden);
            (TrendBranch::Plain(cell), c.hidden)
        };
        let fan = c.hidden + trend_width;
        let tvps_w = store.add("tvps.w", init.uniform(vec![c.feature_dim, fan], fan));
        let tvps_b = store.add("tvps.b", init.uniform(vec![c.feature_dim], fan));
        let attention = if c.use_evps {
            Some(LAttention::new(
                &mut store,
                &mut init,
                "evps",
                c.covariates,
                c.hidden,
                c.feature_dim,
            )?)
        } else {
            None
        };
        let w_tvps = store.add("fusion.w_tvps", Tensor::scalar(1.0));
        let w_evps = c
            .use_evps
            .then(|| store.add("fusion.w_evps", Tensor::scalar(1.0)));
        let out_w = store.add(
            "head.w",
            init.uniform(vec![1, c.feature_dim], c.feature_dim),
        );
        let out_b = store.add("head.b", init.uniform(vec![1], c.feature_dim));
        Ok(Self {
            config,
            store,
            seasonal,
            trend,
            attention,
            tvps_w,
            tvps_b,
            w_tvps,
            w_evps,
            out_w,
            out_b,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn check_input(&self, input: &ModelInput) -> Result<()> {
        let (b, t) = (input.batch, input.window);
        let q = if self.config.use_evps {
            self.config.covariates
        } else {
            input.q
        };
        let ok = t == self.config.window
            && b > 0
            && input.seasonal.len() == b * t
            && input.trend.len() == b * t
            && input.target.len() == b * t
            && input.q == q
            && input.covariates.len() == b * t * input.q;
        if ok {
            Ok(())
        } else {
            Err(NetworkError::Config(format!(
                "input batch {b} × window {t} × {} covariates does not match model (window {}, {} covariates)",
                input.q, self.config.window, self.config.covariates
            )))
        }
    }

    /// Builds the forward graph; returns predictions `[batch × 1]`.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, input: &ModelInput) -> Result<Var> {
        self.check_input(input)?;
        let (b, t) = (input.batch, input.window);
        let cfg = &self.config;
        let step = |tape: &mut Tape, series: &[f64], k: usize| {
            let col = (0..b).map(|i| series[i * t + k]).collect();
            tape.constant(vec![b, 1], col)
        };

        let seasonal_steps = (0..t)
            .map(|k| step(tape, &input.seasonal, k))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let h_season = self
            .seasonal
            .forward(tape, bound, &seasonal_steps, None, cfg.bias_inside_gate)?
            .last
            .h;

        let h_trend = match &self.trend {
            TrendBranch::Patched(cell) => {
                let p = cell.patch_len();
                let patches = (0..t / p)
                    .map(|e| {
                        let mut data = Vec::with_capacity(b * p);
                        for i in 0..b {
                            let row = i * t + e * p;
                            data.extend_from_slice(&input.trend[row..row + p]);
                        }
                        tape.constant(vec![b, p], data)
                    })
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                *cell
                    .forward(tape, bound, &patches)?
                    .last()
                    .expect("at least one patch")
            }
            TrendBranch::Plain(cell) => {
                let steps = (0..t)
                    .map(|k| step(tape, &input.trend, k))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                cell.forward(tape, bound, &steps, None, cfg.bias_inside_gate)?
                    .last
                    .h
            }
        };

        let features = tape.concat_cols(&[h_season, h_trend])?;
        let tvps = linear(
            tape,
            features,
            bound.get(self.tvps_w),
            bound.get(self.tvps_b),
        )?;
        let mut fused = tape.scale_by(tvps, bound.get(self.w_tvps))?;

        if let (Some(att), Some(w_evps)) = (&self.attention, self.w_evps) {
            let q = input.q;
            let cov_steps = (0..t)
                .map(|k| {
                    let mut data = Vec::with_capacity(b * q);
                    for i in 0..b {
                        let at = (i * t + k) * q;
                        data.extend_from_slice(&input.covariates[at..at + q]);
                    }
                    tape.constant(vec![b, q], data)
                })
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let target_steps = (0..t)
                .map(|k| step(tape, &input.target, k))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let out = att.forward(
                tape,
                bound,
                &cov_steps,
                &target_steps,
                cfg.horizon,
                cfg.bias_inside_gate,
            )?;
            let evps = tape.scale_by(out.value, bound.get(w_evps))?;
            fused = tape.add(fused, evps)?;
        }

        linear(tape, fused, bound.get(self.out_w), bound.get(self.out_b))
    }

    /// Forward pass on a fresh tape; one prediction per example.
    pub fn predict(&self, input: &ModelInput) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let bound = self.store.bind(&mut tape);
        let y = self.forward(&mut tape, &bound, input)?;
        Ok(tape.value(y).to_vec())
    }
}
