//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

pub mod dd;
pub mod reference;
pub mod suite;

use dasps::tensor::{Tape, Tensor, Var};
use dd::Dd;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: Vec<usize>, lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::new(shape, data).unwrap()
}

/// Worst entry of a gradient comparison.
#[derive(Debug, Clone)]
pub struct GradCheck {
    pub max_rel: f64,
    pub param: usize,
    pub entry: usize,
    pub analytic: f64,
    pub numeric: f64,
    /// Largest |tape − reference| over the forward outputs; zero when the
    /// tape is its own reference.
    pub forward_gap: f64,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.max_rel <= GRAD_TOL && self.forward_gap <= FORWARD_TOL
    }
}

/// Tape and reference forwards must agree to f64 roundoff.
pub const FORWARD_TOL: f64 = 1e-12;

/// Reverse-mode gradients of `Σ r ∘ f(params)` for fixed random `r`, with the
/// output values and the weights.
fn analytic(
    params: &[Tensor],
    seed: u64,
    f: &impl Fn(&mut Tape, &[Tensor]) -> (Var, Vec<Var>),
) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let mut tape = Tape::new();
    let (out, leaves) = f(&mut tape, params);
    let n_out = tape.value(out).len();
    let mut r = rng(seed ^ 0x9e37_79b9);
    let weights: Vec<f64> = (0..n_out).map(|_| r.random_range(0.5..1.5)).collect();
    let shape = tape.shape(out).to_vec();
    let w = tape.constant(shape, weights.clone()).unwrap();
    let prod = tape.mul(out, w).unwrap();
    let loss = tape.sum(prod).unwrap();
    tape.backward(loss).unwrap();
    let grads = leaves.iter().map(|v| tape.grad(*v)).collect();
    (grads, tape.value(out).to_vec(), weights)
}

/// Central differences of `loss` entry by entry, keeping the worst relative error.
/// `quotient(up, down)` forms the difference quotient in the loss's own precision.
fn compare<P: Clone, L>(
    params: &[Vec<P>],
    analytic: &[Vec<f64>],
    shift: impl Fn(&P, f64) -> P,
    loss: impl Fn(&[Vec<P>]) -> L,
    quotient: impl Fn(L, L) -> f64,
    forward_gap: f64,
) -> GradCheck {
    let mut worst = GradCheck {
        max_rel: 0.0,
        param: 0,
        entry: 0,
        analytic: 0.0,
        numeric: 0.0,
        forward_gap,
    };
    let mut ps = params.to_vec();
    for p in 0..ps.len() {
        for e in 0..ps[p].len() {
            let orig = ps[p][e].clone();
            ps[p][e] = shift(&orig, FD_STEP);
            let up = loss(&ps);
            ps[p][e] = shift(&orig, -FD_STEP);
            let down = loss(&ps);
            ps[p][e] = orig;
            let numeric = quotient(up, down);
            let a = analytic[p][e];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            if rel > worst.max_rel {
                worst.max_rel = rel;
                worst.param = p;
                worst.entry = e;
                worst.analytic = a;
                worst.numeric = numeric;
            }
        }
    }
    worst
}

/// Compares tape gradients with central differences of the tape itself in
/// f64. Suited to single ops, whose gradients sit far above roundoff.
pub fn grad_check(
    params: &[Tensor],
    seed: u64,
    f: impl Fn(&mut Tape, &[Tensor]) -> (Var, Vec<Var>),
) -> GradCheck {
    let (grads, _, weights) = analytic(params, seed, &f);
    let raw: Vec<Vec<f64>> = params.iter().map(|t| t.data().to_vec()).collect();
    let shapes: Vec<Vec<usize>> = params.iter().map(|t| t.shape().to_vec()).collect();
    let loss = |ps: &[Vec<f64>]| -> f64 {
        let ts: Vec<Tensor> = ps
            .iter()
            .zip(&shapes)
            .map(|(d, s)| Tensor::new(s.clone(), d.clone()).unwrap())
            .collect();
        let mut t = Tape::new();
        let (o, _) = f(&mut t, &ts);
        t.value(o).iter().zip(&weights).map(|(a, b)| a * b).sum()
    };
    compare(
        &raw,
        &grads,
        |x, h| x + h,
        loss,
        |u, d| (u - d) / (2.0 * FD_STEP),
        0.0,
    )
}

/// Compares tape gradients with central differences of an independent
/// `reference` forward evaluated in double-double arithmetic. The loss is
/// formed and differenced in double-double too, so cancellation costs
/// nothing at f64 resolution.
pub fn grad_check_reference(
    params: &[Tensor],
    seed: u64,
    f: impl Fn(&mut Tape, &[Tensor]) -> (Var, Vec<Var>),
    reference: impl Fn(&[Vec<Dd>]) -> Vec<Dd>,
) -> GradCheck {
    let (grads, out, weights) = analytic(params, seed, &f);
    let dd: Vec<Vec<Dd>> = params
        .iter()
        .map(|t| t.data().iter().map(|&v| Dd::from(v)).collect())
        .collect();
    let ref_out = reference(&dd);
    assert_eq!(ref_out.len(), out.len(), "reference output size");
    let gap = out
        .iter()
        .zip(&ref_out)
        .map(|(a, b)| (a - f64::from(*b)).abs())
        .fold(0.0, f64::max);
    let w: Vec<Dd> = weights.iter().map(|&v| Dd::from(v)).collect();
    let step = Dd::from(2.0 * FD_STEP);
    let loss_dd = |ps: &[Vec<Dd>]| -> Dd {
        reference(ps)
            .into_iter()
            .zip(&w)
            .fold(Dd::from(0.0), |acc, (o, r)| acc + o * *r)
    };
    compare(
        &dd,
        &grads,
        |x, h| *x + Dd::from(h),
        loss_dd,
        |u, d| f64::from((u - d) / step),
        gap,
    )
}

/// Leaves for every tensor, for ops that take raw inputs.
pub fn leaves(tape: &mut Tape, ps: &[Tensor]) -> Vec<Var> {
    ps.iter().map(|t| tape.leaf(t)).collect()
}

/// Average ranks by counting: rank = 1 + #smaller + (#equal − 1)/2.
pub fn brute_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let smaller = x.iter().filter(|&&u| u < v).count() as f64;
            let equal = x.iter().filter(|&&u| u == v).count() as f64;
            1.0 + smaller + (equal - 1.0) / 2.0
        })
        .collect()
}

/// Rank correlation written out term by term over explicit rank means.
pub fn brute_spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (brute_ranks(x), brute_ranks(y));
    let t = x.len() as f64;
    let mean_x = rx.iter().sum::<f64>() / t;
    let mean_y = ry.iter().sum::<f64>() / t;
    let mut num = 0.0;
    let mut den_x = 0.0;
    let mut den_y = 0.0;
    for n in 0..x.len() {
        num += (rx[n] - mean_x) * (ry[n] - mean_y);
        den_x += (rx[n] - mean_x).powi(2);
        den_y += (ry[n] - mean_y).powi(2);
    }
    if den_x == 0.0 || den_y == 0.0 {
        return 0.0;
    }
    num / (den_x * den_y).sqrt()
}

/// Direct transliteration of the four accuracy formulas.
pub struct OracleMetrics {
    pub mae: f64,
    pub rmse: f64,
    pub rse: f64,
    pub corr: f64,
}

pub fn oracle_metrics(y: &[f64], yhat: &[f64]) -> OracleMetrics {
    let n = y.len() as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (my, mp) = (mean(y), mean(yhat));
    let mae = (1.0 / n) * y.iter().zip(yhat).map(|(a, b)| (a - b).abs()).sum::<f64>();
    let sse: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum();
    let rmse = ((1.0 / n) * sse).sqrt();
    let sst: f64 = y.iter().map(|a| (a - my).powi(2)).sum();
    let rse = (sse / sst).sqrt();
    let num: f64 = y.iter().zip(yhat).map(|(a, b)| (a - my) * (b - mp)).sum();
    let spp: f64 = yhat.iter().map(|b| (b - mp).powi(2)).sum();
    let corr = (1.0 / n) * num / (sst * spp).sqrt();
    OracleMetrics {
        mae,
        rmse,
        rse,
        corr,
    }
}

/// Relative closeness with an absolute floor of 1.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
