//! Finite-difference checks over every differentiable op and network block.

use dasps::network::{
    ConvLstm, DaSpsModel, Initializer, LAttention, Lstm, ModelConfig, ModelInput, ParamStore,
};
use dasps::tensor::{Tape, Tensor, Var};
use dasps::training::mae_loss;
use rand::Rng;

use std::cell::RefCell;

use super::dd::Dd;

use super::reference::{self, Example, Memo, Params};
use super::{grad_check, grad_check_reference, leaves, rng, uniform, GradCheck};

type Case = (&'static str, GradCheck);

fn op(
    name: &'static str,
    params: Vec<Tensor>,
    seed: u64,
    f: impl Fn(&mut Tape, &[Var]) -> Var,
) -> Case {
    let check = grad_check(&params, seed, |tape, ps| {
        let vs = leaves(tape, ps);
        (f(tape, &vs), vs)
    });
    (name, check)
}

/// Re-binds `store` with perturbed tensors and runs `f` on the leaves;
/// `reference` recomputes the same outputs from named parameters.
fn block(
    name: &'static str,
    store: &ParamStore,
    seed: u64,
    f: impl Fn(&mut Tape, &dasps::network::Bound) -> Var,
    reference: impl Fn(&Params<Dd>) -> Vec<Dd>,
) -> Case {
    let names = store.names().to_vec();
    let check = grad_check_reference(
        store.tensors(),
        seed,
        |tape, ps| {
            let mut s = store.clone();
            s.tensors_mut().clone_from_slice(ps);
            let bound = s.bind(tape);
            let out = f(tape, &bound);
            (out, bound.vars().to_vec())
        },
        |values| {
            reference(&Params {
                names: &names,
                values,
            })
        },
    );
    (name, check)
}

fn dd(v: &[f64]) -> Vec<Dd> {
    v.iter().map(|&x| Dd::from(x)).collect()
}

/// Row `b` of every step, as one example's sequence.
fn example(steps: &[Vec<f64>], b: usize, width: usize) -> Vec<Vec<Dd>> {
    steps
        .iter()
        .map(|s| dd(&s[b * width..(b + 1) * width]))
        .collect()
}

/// Tensor ops on inputs drawn from [−2, 2].
pub fn op_cases(seed: u64) -> Vec<Case> {
    let mut r = rng(seed);
    let mut u = |shape: Vec<usize>| uniform(&mut r, shape, -2.0, 2.0);
    let m23 = || vec![2, 3];
    let mut cases = vec![
        op(
            "matmul",
            vec![u(vec![3, 4]), u(vec![4, 2])],
            seed,
            |t, v| t.matmul(v[0], v[1]).unwrap(),
        ),
        op(
            "matmul_nt",
            vec![u(vec![3, 4]), u(vec![2, 4])],
            seed,
            |t, v| t.matmul_nt(v[0], v[1]).unwrap(),
        ),
        op("add", vec![u(m23()), u(m23())], seed, |t, v| {
            t.add(v[0], v[1]).unwrap()
        }),
        op("sub", vec![u(m23()), u(m23())], seed, |t, v| {
            t.sub(v[0], v[1]).unwrap()
        }),
        op("mul", vec![u(m23()), u(m23())], seed, |t, v| {
            t.mul(v[0], v[1]).unwrap()
        }),
        op("mul_self", vec![u(m23())], seed, |t, v| {
            t.mul(v[0], v[0]).unwrap()
        }),
        op("add_row", vec![u(vec![3, 4]), u(vec![4])], seed, |t, v| {
            t.add_row(v[0], v[1]).unwrap()
        }),
        op("mul_row", vec![u(vec![3, 4]), u(vec![4])], seed, |t, v| {
            t.mul_row(v[0], v[1]).unwrap()
        }),
        op("mul_col", vec![u(vec![3, 4]), u(vec![3])], seed, |t, v| {
            t.mul_col(v[0], v[1]).unwrap()
        }),
        op("scale", vec![u(m23())], seed, |t, v| {
            t.scale(v[0], -0.7).unwrap()
        }),
        op("scale_by", vec![u(m23()), u(vec![])], seed, |t, v| {
            t.scale_by(v[0], v[1]).unwrap()
        }),
        op("sigmoid", vec![u(m23())], seed, |t, v| {
            t.sigmoid(v[0]).unwrap()
        }),
        op("tanh", vec![u(m23())], seed, |t, v| t.tanh(v[0]).unwrap()),
        op("softmax", vec![u(vec![5])], seed, |t, v| {
            t.softmax(v[0]).unwrap()
        }),
        op("softmax_rows", vec![u(vec![3, 4])], seed, |t, v| {
            t.softmax(v[0]).unwrap()
        }),
        op("concat", vec![u(vec![2]), u(vec![3])], seed, |t, v| {
            t.concat(&[v[0], v[1]]).unwrap()
        }),
        op(
            "concat_cols",
            vec![u(vec![2, 1]), u(m23())],
            seed,
            |t, v| t.concat_cols(&[v[0], v[1]]).unwrap(),
        ),
        op(
            "concat_rows",
            vec![u(vec![1, 3]), u(m23())],
            seed,
            |t, v| t.concat_rows(&[v[0], v[1]]).unwrap(),
        ),
        op("slice_cols", vec![u(vec![3, 5])], seed, |t, v| {
            t.slice_cols(v[0], 1, 3).unwrap()
        }),
        op("reshape", vec![u(m23())], seed, |t, v| {
            let r = t.reshape(v[0], vec![3, 2]).unwrap();
            t.tanh(r).unwrap()
        }),
        op("repeat_cols", vec![u(m23())], seed, |t, v| {
            t.repeat_cols(v[0], 2).unwrap()
        }),
        op("sum", vec![u(m23())], seed, |t, v| t.sum(v[0]).unwrap()),
        op("mean", vec![u(m23())], seed, |t, v| t.mean(v[0]).unwrap()),
        op("conv1d", vec![u(vec![6]), u(vec![3])], seed, |t, v| {
            t.conv1d(v[0], v[1]).unwrap()
        }),
        op(
            "conv1d_batch",
            vec![u(vec![2, 5]), u(vec![3])],
            seed,
            |t, v| t.conv1d(v[0], v[1]).unwrap(),
        ),
        op("conv1d_k5", vec![u(vec![7]), u(vec![5])], seed, |t, v| {
            t.conv1d(v[0], v[1]).unwrap()
        }),
    ];
    // keep abs and the loss away from their kinks
    let mut away = u(m23());
    away.data_mut()
        .iter_mut()
        .for_each(|x| *x += 0.1f64.copysign(*x));
    cases.push(op("abs", vec![away], seed, |t, v| t.abs(v[0]).unwrap()));
    let pred = u(vec![4, 1]);
    let labels: Vec<f64> = pred.data().iter().map(|p| p + 0.5).collect();
    cases.push(op("mae_loss", vec![pred], seed, move |t, v| {
        mae_loss(t, v[0], &labels).unwrap()
    }));
    cases
}

fn sequence(seed: u64, steps: usize, batch: usize, width: usize) -> Vec<Vec<f64>> {
    let mut r = rng(seed ^ 0x5151);
    (0..steps)
        .map(|_| {
            (0..batch * width)
                .map(|_| r.random_range(-2.0..2.0))
                .collect()
        })
        .collect()
}

fn constants(tape: &mut Tape, data: &[Vec<f64>], shape: Vec<usize>) -> Vec<Var> {
    data.iter()
        .map(|d| tape.constant(shape.clone(), d.clone()).unwrap())
        .collect()
}

/// Recurrent blocks and the full tiny model.
pub fn block_cases(seed: u64) -> Vec<Case> {
    let mut cases = Vec::new();

    for (name, inside) in [("lstm", false), ("lstm_bias_inside", true)] {
        let mut store = ParamStore::default();
        let lstm = Lstm::new(&mut store, &mut Initializer::new(seed), "l", 2, 3);
        let xs = sequence(seed, 5, 2, 2);
        cases.push(block(
            name,
            &store,
            seed,
            |tape, bound| {
                let steps = constants(tape, &xs, vec![2, 2]);
                let out = lstm.forward(tape, bound, &steps, None, inside).unwrap();
                tape.concat_rows(&out.hidden).unwrap()
            },
            |p| {
                // step-major, then batch row, then unit
                let runs: Vec<_> = (0..2)
                    .map(|b| reference::lstm(p, "l", &example(&xs, b, 2), None, inside).0)
                    .collect();
                (0..5)
                    .flat_map(|k| runs.iter().flat_map(move |r| r[k].clone()))
                    .collect()
            },
        ));
    }

    let mut store = ParamStore::default();
    let cell = ConvLstm::new(&mut store, &mut Initializer::new(seed), "c", 4, 3).unwrap();
    let patches = sequence(seed, 3, 1, 4);
    cases.push(block(
        "conv_lstm",
        &store,
        seed,
        |tape, bound| {
            let ps = constants(tape, &patches, vec![1, 4]);
            let hs = cell.forward(tape, bound, &ps).unwrap();
            tape.concat_rows(&hs).unwrap()
        },
        |p| reference::conv_lstm(p, "c", &example(&patches, 0, 4)).concat(),
    ));

    let mut store = ParamStore::default();
    let att = LAttention::new(&mut store, &mut Initializer::new(seed), "a", 2, 3, 2).unwrap();
    let cov = sequence(seed, 8, 1, 2);
    let tgt = sequence(seed + 1, 8, 1, 1);
    cases.push(block(
        "l_attention",
        &store,
        seed,
        |tape, bound| {
            let c = constants(tape, &cov, vec![1, 2]);
            let g = constants(tape, &tgt, vec![1, 1]);
            att.forward(tape, bound, &c, &g, 3, false).unwrap().value
        },
        |p| {
            let g: Vec<Dd> = tgt.iter().map(|v| Dd::from(v[0])).collect();
            reference::l_attention(p, "a", &example(&cov, 0, 2), &g, 3, false)
        },
    ));

    for (name, use_pconv) in [("model", true), ("model_plain_trend", false)] {
        let cfg = ModelConfig {
            window: 24,
            patch_len: 8,
            hidden: 4,
            feature_dim: 4,
            kernel: 3,
            covariates: 2,
            horizon: 3,
            use_pconv,
            use_evps: true,
            bias_inside_gate: false,
        };
        let model = DaSpsModel::new(cfg.clone(), seed).unwrap();
        let mut r = rng(seed ^ 0xabc);
        let mut draw =
            |n: usize| -> Vec<f64> { (0..n).map(|_| r.random_range(-1.0..1.0)).collect() };
        let input = ModelInput {
            batch: 2,
            window: 24,
            seasonal: draw(48),
            trend: draw(48),
            target: draw(48),
            covariates: draw(96),
            q: 2,
        };
        let examples: Vec<Example<Dd>> = (0..2)
            .map(|i| Example {
                seasonal: dd(&input.seasonal[i * 24..(i + 1) * 24]),
                trend: dd(&input.trend[i * 24..(i + 1) * 24]),
                target: dd(&input.target[i * 24..(i + 1) * 24]),
                covariates: input.covariates[i * 48..(i + 1) * 48]
                    .chunks(2)
                    .map(dd)
                    .collect(),
            })
            .collect();
        let memos = RefCell::new([Memo::default(), Memo::default()]);
        cases.push(block(
            name,
            model.store(),
            seed,
            |tape, bound| model.forward(tape, bound, &input).unwrap(),
            |p| {
                let mut memos = memos.borrow_mut();
                examples
                    .iter()
                    .zip(memos.iter_mut())
                    .map(|(ex, m)| reference::model(p, &cfg, ex, m))
                    .collect()
            },
        ));
    }
    cases
}

pub fn all_cases(seed: u64) -> Vec<Case> {
    let mut v = op_cases(seed);
    v.extend(block_cases(seed));
    v
}
