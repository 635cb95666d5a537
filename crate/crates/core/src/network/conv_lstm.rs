use super::{Bound, Initializer, NetworkError, ParamId, ParamStore, Result};
use crate::tensor::{Tape, Var};

/// Splits a series into `⌊t/P⌋` contiguous patches of length `P`; the
/// trailing `t mod P` values are dropped.
pub fn patch(series: &[f64], patch_len: usize) -> Result<Vec<Vec<f64>>> {
    if patch_len == 0 || patch_len > series.len() {
        return Err(NetworkError::Config(format!(
            "patch length {patch_len} must be in 1..={}",
            series.len()
        )));
    }
    Ok(series
        .chunks_exact(patch_len)
        .map(<[f64]>::to_vec)
        .collect())
}

/// Conv-LSTM over patches: input and hidden transforms are same-padded 1-D
/// convolutions, cell couplings are elementwise peepholes. Hidden and cell
/// states have the patch length.
#[derive(Debug, Clone)]
pub struct ConvLstm {
    // gate order: input, forget, candidate, output
    input_kernels: [ParamId; 4],
    hidden_kernels: [ParamId; 4],
    // input, forget, output
    peepholes: [ParamId; 3],
    biases: [ParamId; 4],
    patch_len: usize,
    kernel: usize,
}

const GATES: [&str; 4] = ["i", "f", "c", "o"];

impl ConvLstm {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        prefix: &str,
        patch_len: usize,
        kernel: usize,
    ) -> Result<Self> {
        if kernel.is_multiple_of(2) || kernel > patch_len {
            return Err(NetworkError::Config(format!(
                "conv kernel {kernel} must be odd and ≤ patch length {patch_len}"
            )));
        }
        let input_kernels = GATES.map(|g| {
            store.add(
                format!("{prefix}.wp_{g}"),
                init.uniform(vec![kernel], kernel),
            )
        });
        let hidden_kernels = GATES.map(|g| {
            store.add(
                format!("{prefix}.wh_{g}"),
                init.uniform(vec![kernel], kernel),
            )
        });
        let peepholes = ["i", "f", "o"].map(|g| {
            store.add(
                format!("{prefix}.wc_{g}"),
                init.uniform(vec![patch_len], patch_len),
            )
        });
        let biases = GATES.map(|g| {
            store.add(
                format!("{prefix}.b_{g}"),
                init.uniform(vec![patch_len], patch_len),
            )
        });
        Ok(Self {
            input_kernels,
            hidden_kernels,
            peepholes,
            biases,
            patch_len,
            kernel,
        })
    }

    pub fn patch_len(&self) -> usize {
        self.patch_len
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    fn gate_pre(&self, tape: &mut Tape, bound: &Bound, g: usize, p: Var, h: Var) -> Result<Var> {
        let a = tape.conv1d(p, bound.get(self.input_kernels[g]))?;
        let b = tape.conv1d(h, bound.get(self.hidden_kernels[g]))?;
        Ok(tape.add(a, b)?)
    }

    /// Runs over `patches` (each `[batch × P]`) from zero state; returns every hidden state.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, patches: &[Var]) -> Result<Vec<Var>> {
        let Some(first) = patches.first() else {
            return Err(NetworkError::Config("no patches".into()));
        };
        let shape = tape.shape(*first).to_vec();
        if shape.last() != Some(&self.patch_len) {
            return Err(NetworkError::Config(format!(
                "patch shape {shape:?} does not end in patch length {}",
                self.patch_len
            )));
        }
        let mut h = tape.zeros(shape.clone());
        let mut c = tape.zeros(shape);
        let [wc_i, wc_f, wc_o] = self.peepholes.map(|p| bound.get(p));
        let [b_i, b_f, b_c, b_o] = self.biases.map(|p| bound.get(p));
        let mut out = Vec::with_capacity(patches.len());
        for &p in patches {
            let i = {
                let pre = self.gate_pre(tape, bound, 0, p, h)?;
                let peep = tape.mul_row(c, wc_i)?;
                let s = tape.add(pre, peep)?;
                let s = tape.add_row(s, b_i)?;
                tape.sigmoid(s)?
            };
            let f = {
                let pre = self.gate_pre(tape, bound, 1, p, h)?;
                let peep = tape.mul_row(c, wc_f)?;
                let s = tape.add(pre, peep)?;
                let s = tape.add_row(s, b_f)?;
                tape.sigmoid(s)?
            };
            let cand = {
                let pre = self.gate_pre(tape, bound, 2, p, h)?;
                let s = tape.add_row(pre, b_c)?;
                tape.tanh(s)?
            };
            let keep = tape.mul(f, c)?;
            let write = tape.mul(i, cand)?;
            let cell = tape.add(keep, write)?;
            // output gate peeks at the updated cell
            let o = {
                let pre = self.gate_pre(tape, bound, 3, p, h)?;
                let peep = tape.mul_row(cell, wc_o)?;
                let s = tape.add(pre, peep)?;
                let s = tape.add_row(s, b_o)?;
                tape.sigmoid(s)?
            };
            let squashed = tape.tanh(cell)?;
            h = tape.mul(o, squashed)?;
            c = cell;
            out.push(h);
        }
        Ok(out)
    }
}
