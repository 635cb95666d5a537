use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Result, TrainError};
use crate::data::NormScope;
use crate::metrics::CorrForm;
use crate::network::ModelConfig;
use crate::ssa::SsaScope;

/// How the target window is split before reaching the two target branches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decomposition {
    #[default]
    Ssa,
    /// Moving-average trend, seasonal = series − trend.
    Stl,
    /// Both branches read the raw target window.
    None,
}

impl std::str::FromStr for Decomposition {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "ssa" => Ok(Self::Ssa),
            "stl" => Ok(Self::Stl),
            "none" => Ok(Self::None),
            other => Err(format!(
                "unknown decomposition '{other}' (expected ssa|stl|none)"
            )),
        }
    }
}

/// Named model variants for ablation runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ablation {
    Full,
    NoSsa,
    NoPconv,
    NoSpearman,
    Stl,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [
        Ablation::Full,
        Ablation::NoSsa,
        Ablation::NoPconv,
        Ablation::NoSpearman,
        Ablation::Stl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoSsa => "no-ssa",
            Ablation::NoPconv => "no-pconv",
            Ablation::NoSpearman => "no-spearman",
            Ablation::Stl => "stl",
        }
    }

    pub fn apply(self, cfg: &TrainConfig) -> TrainConfig {
        let mut c = cfg.clone();
        match self {
            Ablation::Full => {}
            Ablation::NoSsa => c.decomposition = Decomposition::None,
            Ablation::NoPconv => c.use_pconv = false,
            Ablation::NoSpearman => c.use_spearman = false,
            Ablation::Stl => c.decomposition = Decomposition::Stl,
        }
        c
    }
}

impl std::str::FromStr for Ablation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                format!("unknown ablation '{s}' (expected full|no-ssa|no-pconv|no-spearman|stl)")
            })
    }
}

/// Every knob of a training run. Serialized as a flat TOML table; missing
/// keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Target column; `None` defers to the caller.
    pub target: Option<String>,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub decay_every: usize,
    pub horizon: usize,
    pub window: usize,
    pub patch_len: usize,
    pub hidden: usize,
    pub feature_dim: usize,
    pub kernel: usize,
    pub seed: u64,
    pub train_ratio: f64,
    pub valid_ratio: f64,
    pub test_ratio: f64,
    pub norm_scope: NormScope,
    pub decomposition: Decomposition,
    /// Embedding dimension; `None` means half the window.
    pub ssa_m: Option<usize>,
    pub ssa_scope: SsaScope,
    pub stl_kernel: usize,
    pub use_spearman: bool,
    pub threshold: f64,
    pub use_pconv: bool,
    pub use_evps: bool,
    pub bias_inside_gate: bool,
    pub clip: bool,
    pub clip_norm: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub corr_form: CorrForm,
    /// Windows per forward pass during evaluation.
    pub eval_batch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            target: None,
            epochs: 200,
            batch: 64,
            lr: 0.001,
            lr_decay: 0.9,
            decay_every: 20,
            horizon: 3,
            window: 96,
            patch_len: 24,
            hidden: 64,
            feature_dim: 64,
            kernel: 3,
            seed: 42,
            train_ratio: 0.6,
            valid_ratio: 0.2,
            test_ratio: 0.2,
            norm_scope: NormScope::Train,
            decomposition: Decomposition::Ssa,
            ssa_m: None,
            ssa_scope: SsaScope::Window,
            stl_kernel: 25,
            use_spearman: true,
            threshold: 0.5,
            use_pconv: true,
            use_evps: true,
            bias_inside_gate: false,
            clip: true,
            clip_norm: 5.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            corr_form: CorrForm::Printed,
            eval_batch: 256,
        }
    }
}

impl TrainConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| TrainError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| TrainError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn ssa_embedding(&self) -> usize {
        self.ssa_m.unwrap_or(self.window / 2)
    }

    pub fn ratios(&self) -> (f64, f64, f64) {
        (self.train_ratio, self.valid_ratio, self.test_ratio)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail("lr must be positive");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return fail("lr_decay must be in (0, 1]");
        }
        if self.epochs == 0 || self.batch == 0 || self.eval_batch == 0 {
            return fail("epochs, batch and eval_batch must be at least 1");
        }
        if self.horizon == 0 || self.window == 0 || self.hidden == 0 || self.feature_dim == 0 {
            return fail("horizon, window, hidden and feature_dim must be at least 1");
        }
        if self.use_pconv && (self.patch_len == 0 || self.patch_len > self.window) {
            return fail("patch_len must be in 1..=window");
        }
        if self.decomposition == Decomposition::Ssa {
            let m = self.ssa_embedding();
            if m < 1 || m > self.window {
                return fail("ssa_m must be in 1..=window");
            }
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return fail("threshold must be in [0, 1]");
        }
        if self.clip && (self.clip_norm.is_nan() || self.clip_norm <= 0.0) {
            return fail("clip_norm must be positive");
        }
        Ok(())
    }

    pub fn model_config(&self, covariates: usize) -> ModelConfig {
        ModelConfig {
            window: self.window,
            patch_len: self.patch_len,
            hidden: self.hidden,
            feature_dim: self.feature_dim,
            kernel: self.kernel,
            covariates,
            horizon: self.horizon,
            use_pconv: self.use_pconv,
            use_evps: self.use_evps,
            bias_inside_gate: self.bias_inside_gate,
        }
    }
}
