//! Seeded synthetic benchmark with a known covariate structure.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::SeriesDataset;

/// Shape of the synthetic benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub steps: usize,
    /// Lag of the informative covariate behind the target.
    pub lag: usize,
    pub target_noise: f64,
    pub copy_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            steps: 2000,
            lag: 2,
            target_noise: 0.1,
            copy_noise: 0.1,
            seed: 7,
        }
    }
}

pub const TARGET: &str = "target";
pub const LAGGED: &str = "lagged";
pub const NOISE: &str = "noise";

/// Target `= 0.002·i + sin(2πi/24) + 0.5·sin(2πi/96) + ε`, a covariate that
/// is the target lagged by `lag` steps plus noise, and an independent
/// Gaussian covariate. Columns are `lagged, noise, target`.
pub fn benchmark(spec: &SyntheticSpec) -> SeriesDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let eps = Normal::new(0.0, spec.target_noise).expect("valid sigma");
    let copy = Normal::new(0.0, spec.copy_noise).expect("valid sigma");
    let unit = Normal::new(0.0, 1.0).expect("valid sigma");
    let tau = std::f64::consts::TAU;
    let n = spec.steps + spec.lag;
    let target: Vec<f64> = (0..n)
        .map(|i| {
            let x = i as f64;
            0.002 * x + (tau * x / 24.0).sin() + 0.5 * (tau * x / 96.0).sin() + eps.sample(&mut rng)
        })
        .collect();
    let lagged: Vec<f64> = (0..spec.steps)
        .map(|i| target[i] + copy.sample(&mut rng))
        .collect();
    let noise: Vec<f64> = (0..spec.steps).map(|_| unit.sample(&mut rng)).collect();
    let target = target[spec.lag..].to_vec();
    SeriesDataset::from_columns(
        vec![LAGGED.into(), NOISE.into(), TARGET.into()],
        vec![lagged, noise, target],
        TARGET,
    )
    .expect("columns have equal length")
}
