use super::{Bound, Initializer, ParamId, ParamStore, Result};
use crate::network::NetworkError;
use crate::tensor::{Tape, Var};

/// LSTM over `[h; x]` with separate forget/input/output/candidate weights.
///
/// By default gate biases are added after the sigmoid,
/// `f = σ(W_f·[h; x]) + b_f`, with the candidate bias inside its `tanh`.
/// `bias_inside_gate` switches to the usual `σ(W·[h; x] + b)`.
#[derive(Debug, Clone)]
pub struct Lstm {
    // order: forget, input, output, candidate
    weights: [ParamId; 4],
    biases: [ParamId; 4],
    input: usize,
    hidden: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

#[derive(Debug, Clone)]
pub struct LstmOutput {
    pub hidden: Vec<Var>,
    pub last: LstmState,
}

const GATES: [&str; 4] = ["f", "i", "o", "c"];

impl Lstm {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        prefix: &str,
        input: usize,
        hidden: usize,
    ) -> Self {
        let fan_in = hidden + input;
        let weights = GATES.map(|g| {
            store.add(
                format!("{prefix}.w_{g}"),
                init.uniform(vec![hidden, fan_in], fan_in),
            )
        });
        let biases = GATES.map(|g| {
            store.add(
                format!("{prefix}.b_{g}"),
                init.uniform(vec![hidden], fan_in),
            )
        });
        Self {
            weights,
            biases,
            input,
            hidden,
        }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn input(&self) -> usize {
        self.input
    }

    /// Runs the recurrence over `steps` (each `[batch × input]`), starting
    /// from `state` or from zeros.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        steps: &[Var],
        state: Option<LstmState>,
        bias_inside_gate: bool,
    ) -> Result<LstmOutput> {
        let Some(first) = steps.first() else {
            return Err(NetworkError::Config("LSTM input sequence is empty".into()));
        };
        let batch = tape.shape(*first)[0];
        let hsz = self.hidden;
        let w: Vec<Var> = self.weights.iter().map(|p| bound.get(*p)).collect();
        let b: Vec<Var> = self.biases.iter().map(|p| bound.get(*p)).collect();
        let w_all = tape.concat_rows(&w)?;
        let LstmState { mut h, mut c } = match state {
            Some(s) => s,
            None => LstmState {
                h: tape.zeros(vec![batch, hsz]),
                c: tape.zeros(vec![batch, hsz]),
            },
        };
        let mut hidden = Vec::with_capacity(steps.len());
        for &x in steps {
            let z = tape.concat_cols(&[h, x])?;
            let pre = tape.matmul_nt(z, w_all)?;
            let mut gates = [h; 3];
            for (g, gate) in gates.iter_mut().enumerate() {
                let p = tape.slice_cols(pre, g * hsz, hsz)?;
                *gate = if bias_inside_gate {
                    let p = tape.add_row(p, b[g])?;
                    tape.sigmoid(p)?
                } else {
                    let s = tape.sigmoid(p)?;
                    tape.add_row(s, b[g])?
                };
            }
            let [f, i, o] = gates;
            let p = tape.slice_cols(pre, 3 * hsz, hsz)?;
            let p = tape.add_row(p, b[3])?;
            let cand = tape.tanh(p)?;
            let keep = tape.mul(f, c)?;
            let write = tape.mul(i, cand)?;
            c = tape.add(keep, write)?;
            let squashed = tape.tanh(c)?;
            h = tape.mul(o, squashed)?;
            hidden.push(h);
        }
        Ok(LstmOutput {
            hidden,
            last: LstmState { h, c },
        })
    }

    /// Convenience wrapper for a single `len × input` sequence; returns
    /// `len` hidden vectors.
    pub fn run_sequence(
        &self,
        store: &ParamStore,
        sequence: &[Vec<f64>],
        bias_inside_gate: bool,
    ) -> Result<Vec<Vec<f64>>> {
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let steps = sequence
            .iter()
            .map(|x| {
                if x.len() != self.input {
                    return Err(NetworkError::Config(format!(
                        "step has {} features, LSTM expects {}",
                        x.len(),
                        self.input
                    )));
                }
                Ok(tape.constant(vec![1, self.input], x.clone())?)
            })
            .collect::<Result<Vec<_>>>()?;
        let out = self.forward(&mut tape, &bound, &steps, None, bias_inside_gate)?;
        Ok(out.hidden.iter().map(|h| tape.value(*h).to_vec()).collect())
    }
}
