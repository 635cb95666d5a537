//! Straight-loop forward passes of every network block, generic over the
//! scalar type. They share no code with the tape and serve as the oracle for
//! finite differences in double-double arithmetic, where the roundoff floor
//! sits far below the smallest gradients of the decoder path.

use std::ops::{Add, Div, Mul, Neg, Sub};

use super::dd::Dd;
use dasps::network::ModelConfig;

pub trait Real:
    Copy
    + From<f64>
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + PartialOrd
{
    fn exp(self) -> Self;
    fn to_f64(self) -> f64;
}

impl Real for f64 {
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn to_f64(self) -> f64 {
        self
    }
}

impl Real for Dd {
    fn exp(self) -> Self {
        Dd::exp(self)
    }
    fn to_f64(self) -> f64 {
        f64::from(self)
    }
}

fn zero<T: Real>() -> T {
    T::from(0.0)
}

fn one<T: Real>() -> T {
    T::from(1.0)
}

pub fn sigmoid<T: Real>(x: T) -> T {
    one::<T>() / (one::<T>() + (-x).exp())
}

/// Built from `exp` alone.
pub fn tanh<T: Real>(x: T) -> T {
    let neg = x < zero();
    let a = if neg { -x } else { x };
    let e = (T::from(-2.0) * a).exp();
    let t = (one::<T>() - e) / (one::<T>() + e);
    if neg {
        -t
    } else {
        t
    }
}

fn softmax<T: Real>(x: &[T]) -> Vec<T> {
    let mut m = x[0];
    for &v in x {
        if v > m {
            m = v;
        }
    }
    let e: Vec<T> = x.iter().map(|&v| (v - m).exp()).collect();
    let s = e.iter().fold(zero(), |acc, &v| acc + v);
    e.into_iter().map(|v| v / s).collect()
}

/// `out[r] = Σ_c w[r·cols + c] · z[c]`.
fn matvec<T: Real>(w: &[T], z: &[T]) -> Vec<T> {
    let cols = z.len();
    w.chunks_exact(cols)
        .map(|row| row.iter().zip(z).fold(zero(), |acc, (&a, &b)| acc + a * b))
        .collect()
}

/// Same-length cross-correlation with zero padding.
fn conv<T: Real>(x: &[T], w: &[T]) -> Vec<T> {
    let r = w.len() / 2;
    (0..x.len())
        .map(|i| {
            let mut acc = zero();
            for (j, &wj) in w.iter().enumerate() {
                if i + j >= r && i + j - r < x.len() {
                    acc = acc + wj * x[i + j - r];
                }
            }
            acc
        })
        .collect()
}

/// Parameters looked up by their store name.
pub struct Params<'a, T> {
    pub names: &'a [String],
    pub values: &'a [Vec<T>],
}

impl<'a, T> Params<'a, T> {
    pub fn get(&self, name: &str) -> &'a [T] {
        let i = self
            .names
            .iter()
            .position(|n| n == name)
            .unwrap_or_else(|| panic!("no parameter {name}"));
        &self.values[i]
    }
}

/// Hidden states of every step plus the final cell, for one example.
pub fn lstm<T: Real>(
    p: &Params<T>,
    prefix: &str,
    xs: &[Vec<T>],
    state: Option<(Vec<T>, Vec<T>)>,
    inside: bool,
) -> (Vec<Vec<T>>, Vec<T>) {
    let [wf, wi, wo, wc] = ["f", "i", "o", "c"].map(|g| p.get(&format!("{prefix}.w_{g}")));
    let [bf, bi, bo, bc] = ["f", "i", "o", "c"].map(|g| p.get(&format!("{prefix}.b_{g}")));
    let hsz = bf.len();
    let (mut h, mut c) = state.unwrap_or_else(|| (vec![zero(); hsz], vec![zero(); hsz]));
    let mut out = Vec::with_capacity(xs.len());
    for x in xs {
        let z: Vec<T> = h.iter().chain(x).copied().collect();
        let gate = |w: &[T], b: &[T]| -> Vec<T> {
            matvec(w, &z)
                .into_iter()
                .zip(b)
                .map(|(s, &bb)| {
                    if inside {
                        sigmoid(s + bb)
                    } else {
                        sigmoid(s) + bb
                    }
                })
                .collect()
        };
        let (f, i, o) = (gate(wf, bf), gate(wi, bi), gate(wo, bo));
        let cand: Vec<T> = matvec(wc, &z)
            .into_iter()
            .zip(bc)
            .map(|(s, &bb)| tanh(s + bb))
            .collect();
        c = (0..hsz).map(|k| f[k] * c[k] + i[k] * cand[k]).collect();
        h = (0..hsz).map(|k| o[k] * tanh(c[k])).collect();
        out.push(h.clone());
    }
    (out, c)
}

/// Hidden state after each patch, for one example.
pub fn conv_lstm<T: Real>(p: &Params<T>, prefix: &str, patches: &[Vec<T>]) -> Vec<Vec<T>> {
    let get = |kind: &str, g: &str| p.get(&format!("{prefix}.{kind}_{g}"));
    let gates = ["i", "f", "c", "o"].map(|g| (get("wp", g), get("wh", g), get("b", g)));
    let (wi, wf, wo) = (get("wc", "i"), get("wc", "f"), get("wc", "o"));
    let n = patches[0].len();
    let mut h = vec![zero(); n];
    let mut c = vec![zero(); n];
    let mut out = Vec::new();
    for x in patches {
        let [pi, pf, pc, po] = gates.map(|(wp, wh, b)| {
            let a = conv(x, wp);
            let r = conv(&h, wh);
            (0..n).map(|k| a[k] + r[k] + b[k]).collect::<Vec<T>>()
        });
        let cell: Vec<T> = (0..n)
            .map(|k| {
                let i = sigmoid(pi[k] + wi[k] * c[k]);
                let f = sigmoid(pf[k] + wf[k] * c[k]);
                f * c[k] + i * tanh(pc[k])
            })
            .collect();
        h = (0..n)
            .map(|k| sigmoid(po[k] + wo[k] * cell[k]) * tanh(cell[k]))
            .collect();
        c = cell;
        out.push(h.clone());
    }
    out
}

/// Attention branch output `[F]` for one example; `covs[k]` has Q entries.
pub fn l_attention<T: Real>(
    p: &Params<T>,
    prefix: &str,
    covs: &[Vec<T>],
    target: &[T],
    horizon: usize,
    inside: bool,
) -> Vec<T> {
    let get = |n: &str| p.get(&format!("{prefix}.{n}"));
    let (w_in, b_in, v_in) = (get("w_in"), get("b_in"), get("v_in"));
    let a = v_in.len();
    let inputs: Vec<Vec<T>> = covs
        .iter()
        .zip(target)
        .map(|(x, &g)| {
            let e: Vec<T> = (0..x.len())
                .map(|z| {
                    (0..a).fold(zero(), |acc, j| {
                        let s = w_in[z * a + j] * x[z] + b_in[z * a + j] * g;
                        acc + v_in[j] * tanh(s)
                    })
                })
                .collect();
            softmax(&e)
                .into_iter()
                .zip(x)
                .map(|(al, &v)| al * v)
                .collect()
        })
        .collect();
    let (enc, c_enc) = lstm(p, &format!("{prefix}.enc"), &inputs, None, inside);
    let h_enc = enc.last().unwrap().clone();
    let zeros = vec![vec![zero(); 1]; horizon];
    let (dec, _) = lstm(
        p,
        &format!("{prefix}.dec"),
        &zeros,
        Some((h_enc, c_enc)),
        inside,
    );
    let h_dec = dec.last().unwrap();
    let query: Vec<T> = matvec(get("u_score"), h_dec)
        .into_iter()
        .zip(get("b_score"))
        .map(|(s, &b)| s + b)
        .collect();
    let v = get("v_score");
    let scores: Vec<T> = enc
        .iter()
        .map(|h| {
            matvec(get("w_score"), h)
                .into_iter()
                .zip(&query)
                .zip(v)
                .fold(zero(), |acc, ((k, &q), &vv)| acc + vv * tanh(k + q))
        })
        .collect();
    let beta = softmax(&scores);
    let hsz = h_dec.len();
    let ctx: Vec<T> = (0..hsz)
        .map(|j| {
            enc.iter()
                .zip(&beta)
                .fold(zero(), |acc, (h, &b)| acc + b * h[j])
        })
        .collect();
    matvec(get("w_out"), &ctx)
        .into_iter()
        .zip(get("b_out"))
        .map(|(s, &b)| s + b)
        .collect()
}

/// Plain per-example model inputs.
pub struct Example<T> {
    pub seasonal: Vec<T>,
    pub trend: Vec<T>,
    pub target: Vec<T>,
    /// `t` steps of Q values.
    pub covariates: Vec<Vec<T>>,
}

/// Branch outputs keyed on a snapshot of the branch's parameters. A finite
/// difference moves one entry, so the other branches are reused as is.
pub struct Memo<T> {
    slots: Vec<(&'static str, Vec<T>, Vec<T>)>,
}

impl<T> Default for Memo<T> {
    fn default() -> Self {
        Self { slots: Vec::new() }
    }
}

impl<T: Real> Memo<T> {
    fn branch(
        &mut self,
        p: &Params<T>,
        prefix: &'static str,
        f: impl FnOnce() -> Vec<T>,
    ) -> Vec<T> {
        let key: Vec<T> = p
            .names
            .iter()
            .zip(p.values)
            .filter(|(n, _)| n.starts_with(prefix))
            .flat_map(|(_, v)| v.iter().copied())
            .collect();
        if let Some(slot) = self.slots.iter().find(|s| s.0 == prefix) {
            if slot.1 == key {
                return slot.2.clone();
            }
        }
        let out = f();
        self.slots.retain(|s| s.0 != prefix);
        self.slots.push((prefix, key, out.clone()));
        out
    }
}

/// The fused forecast for one example.
pub fn model<T: Real>(p: &Params<T>, cfg: &ModelConfig, ex: &Example<T>, memo: &mut Memo<T>) -> T {
    let scalars = |s: &[T]| -> Vec<Vec<T>> { s.iter().map(|&v| vec![v]).collect() };
    let h_season = memo.branch(p, "seasonal.", || {
        let (hs, _) = lstm(
            p,
            "seasonal",
            &scalars(&ex.seasonal),
            None,
            cfg.bias_inside_gate,
        );
        hs.last().unwrap().clone()
    });
    let h_trend = memo.branch(p, "trend.", || {
        if cfg.use_pconv {
            let patches: Vec<Vec<T>> = ex
                .trend
                .chunks_exact(cfg.patch_len)
                .map(<[T]>::to_vec)
                .collect();
            conv_lstm(p, "trend", &patches).pop().unwrap()
        } else {
            let (ht, _) = lstm(p, "trend", &scalars(&ex.trend), None, cfg.bias_inside_gate);
            ht.last().unwrap().clone()
        }
    });
    let feat: Vec<T> = h_season.into_iter().chain(h_trend).collect();
    let w_tvps = p.get("fusion.w_tvps")[0];
    let mut fused: Vec<T> = matvec(p.get("tvps.w"), &feat)
        .into_iter()
        .zip(p.get("tvps.b"))
        .map(|(s, &b)| w_tvps * (s + b))
        .collect();
    if cfg.use_evps {
        let w_evps = p.get("fusion.w_evps")[0];
        let evps = memo.branch(p, "evps.", || {
            l_attention(
                p,
                "evps",
                &ex.covariates,
                &ex.target,
                cfg.horizon,
                cfg.bias_inside_gate,
            )
        });
        for (f, e) in fused.iter_mut().zip(evps) {
            *f = *f + w_evps * e;
        }
    }
    matvec(p.get("head.w"), &fused)[0] + p.get("head.b")[0]
}
