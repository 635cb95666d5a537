//! Dual-branch multivariate time-series forecaster.
//!
//! The target series is split into trend and seasonal parts by singular
//! spectrum analysis; covariates are screened by Spearman rank correlation.
//! A seasonal LSTM, a patched Conv-LSTM over the trend and an
//! attention encoder-decoder over the covariates feed a fused linear head.

pub mod correlation;
pub mod data;
pub mod metrics;
pub mod network;
pub mod ssa;
pub mod synthetic;
pub mod tensor;
pub mod training;
