use super::{linear, Bound, Initializer, Lstm, NetworkError, ParamId, ParamStore, Result};
use crate::tensor::{Tape, Var};

/// Input-attention encoder with a temporal-attention decoder over the
/// selected covariates.
///
/// Input scores are `e^z = vᵀ tanh(W^z x^z + b^z x^g)`, so the bias row of
/// variable `z` is scaled by the target value. The attention width equals Q.
#[derive(Debug, Clone)]
pub struct LAttention {
    q: usize,
    hidden: usize,
    features: usize,
    // Q × A
    w_in: ParamId,
    // Q × A, scaled by the target
    b_in: ParamId,
    // A
    v_in: ParamId,
    encoder: Lstm,
    decoder: Lstm,
    // H × H each, H, H
    w_score: ParamId,
    u_score: ParamId,
    b_score: ParamId,
    v_score: ParamId,
    // F × H, F
    w_out: ParamId,
    b_out: ParamId,
}

#[derive(Debug, Clone)]
pub struct AttentionOutput {
    /// `[batch × F]`
    pub value: Var,
    /// One `[batch × Q]` weight matrix per input step.
    pub alphas: Vec<Var>,
    /// `[batch × t]` weights over encoder states.
    pub beta: Var,
    /// Last decoder hidden state.
    pub decoder_state: Var,
}

impl LAttention {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        prefix: &str,
        q: usize,
        hidden: usize,
        features: usize,
    ) -> Result<Self> {
        if q == 0 {
            return Err(no_covariates());
        }
        let a = q;
        let w_in = store.add(format!("{prefix}.w_in"), init.uniform(vec![q, a], 1));
        let b_in = store.add(format!("{prefix}.b_in"), init.uniform(vec![q, a], 1));
        let v_in = store.add(format!("{prefix}.v_in"), init.uniform(vec![a], a));
        let encoder = Lstm::new(store, init, &format!("{prefix}.enc"), q, hidden);
        let decoder = Lstm::new(store, init, &format!("{prefix}.dec"), 1, hidden);
        let w_score = store.add(
            format!("{prefix}.w_score"),
            init.uniform(vec![hidden, hidden], hidden),
        );
        let u_score = store.add(
            format!("{prefix}.u_score"),
            init.uniform(vec![hidden, hidden], hidden),
        );
        let b_score = store.add(
            format!("{prefix}.b_score"),
            init.uniform(vec![hidden], hidden),
        );
        let v_score = store.add(
            format!("{prefix}.v_score"),
            init.uniform(vec![hidden], hidden),
        );
        let w_out = store.add(
            format!("{prefix}.w_out"),
            init.uniform(vec![features, hidden], hidden),
        );
        let b_out = store.add(
            format!("{prefix}.b_out"),
            init.uniform(vec![features], hidden),
        );
        Ok(Self {
            q,
            hidden,
            features,
            w_in,
            b_in,
            v_in,
            encoder,
            decoder,
            w_score,
            u_score,
            b_score,
            v_score,
            w_out,
            b_out,
        })
    }

    pub fn covariates(&self) -> usize {
        self.q
    }

    pub fn features(&self) -> usize {
        self.features
    }

    /// Attention weights `α` (`[batch × Q]`, rows sum to 1) and the weighted
    /// input `α ∘ x`.
    pub fn input_attention(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        x: Var,
        target: Var,
    ) -> Result<(Var, Var)> {
        let shape = tape.shape(x).to_vec();
        if shape.len() != 2 || shape[1] != self.q {
            return Err(NetworkError::Config(format!(
                "covariate step shape {shape:?}, expected [batch × {}]",
                self.q
            )));
        }
        let batch = shape[0];
        let a = self.q;
        let w = tape.reshape(bound.get(self.w_in), vec![self.q * a])?;
        let b = tape.reshape(bound.get(self.b_in), vec![1, self.q * a])?;
        let v = tape.reshape(bound.get(self.v_in), vec![a, 1])?;
        let xr = tape.repeat_cols(x, a)?;
        let wx = tape.mul_row(xr, w)?;
        let bg = tape.matmul(target, b)?;
        let pre = tape.add(wx, bg)?;
        let act = tape.tanh(pre)?;
        let act = tape.reshape(act, vec![batch * self.q, a])?;
        let e = tape.matmul(act, v)?;
        let e = tape.reshape(e, vec![batch, self.q])?;
        let alpha = tape.softmax(e)?;
        let weighted = tape.mul(alpha, x)?;
        Ok((alpha, weighted))
    }

    /// `covariates[k]` is `[batch × Q]`, `target[k]` is `[batch × 1]`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        covariates: &[Var],
        target: &[Var],
        horizon: usize,
        bias_inside_gate: bool,
    ) -> Result<AttentionOutput> {
        if covariates.is_empty() || covariates.len() != target.len() {
            return Err(NetworkError::Config(format!(
                "{} covariate steps vs {} target steps",
                covariates.len(),
                target.len()
            )));
        }
        if horizon == 0 {
            return Err(NetworkError::Config("horizon must be at least 1".into()));
        }
        let batch = tape.shape(covariates[0])[0];
        let mut alphas = Vec::with_capacity(covariates.len());
        let mut inputs = Vec::with_capacity(covariates.len());
        for (&x, &g) in covariates.iter().zip(target) {
            let (alpha, weighted) = self.input_attention(tape, bound, x, g)?;
            alphas.push(alpha);
            inputs.push(weighted);
        }
        let enc = self
            .encoder
            .forward(tape, bound, &inputs, None, bias_inside_gate)?;
        let zero = tape.zeros(vec![batch, 1]);
        let dec_inputs = vec![zero; horizon];
        let dec =
            self.decoder
                .forward(tape, bound, &dec_inputs, Some(enc.last), bias_inside_gate)?;
        let h_dec = dec.last.h;

        let query = tape.matmul_nt(h_dec, bound.get(self.u_score))?;
        let query = tape.add_row(query, bound.get(self.b_score))?;
        let v = tape.reshape(bound.get(self.v_score), vec![self.hidden, 1])?;
        let w = bound.get(self.w_score);
        let mut scores = Vec::with_capacity(enc.hidden.len());
        for &h in &enc.hidden {
            let k = tape.matmul_nt(h, w)?;
            let s = tape.add(k, query)?;
            let s = tape.tanh(s)?;
            scores.push(tape.matmul(s, v)?);
        }
        let scores = tape.concat_cols(&scores)?;
        let beta = tape.softmax(scores)?;
        let mut context: Option<Var> = None;
        for (k, &h) in enc.hidden.iter().enumerate() {
            let b = tape.slice_cols(beta, k, 1)?;
            let term = tape.mul_col(h, b)?;
            context = Some(match context {
                Some(c) => tape.add(c, term)?,
                None => term,
            });
        }
        let context = context.expect("at least one encoder step");
        let value = linear(tape, context, bound.get(self.w_out), bound.get(self.b_out))?;
        Ok(AttentionOutput {
            value,
            alphas,
            beta,
            decoder_state: h_dec,
        })
    }
}

pub(crate) fn no_covariates() -> NetworkError {
    NetworkError::Config(
        "no covariates selected (Q = 0); disable the extraneous-variable branch".into(),
    )
}
