//! Dense `f64` tensors and a tape for reverse-mode differentiation.
//!
//! A [`Tape`] records every operation applied to its [`Var`] handles. Values
//! live on the tape; [`Tape::backward`] walks the records in reverse and
//! accumulates gradients. Parameters are kept outside the tape as plain
//! [`Tensor`]s and bound as leaves for each forward pass.
//!
//! Shapes are row-major. A scalar has shape `[]`. There is no implicit
//! broadcasting: row/column broadcasts are explicit ops (`add_row`,
//! `mul_row`, `mul_col`) and the only scalar-tensor op is `scale_by`.

use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: {msg}")]
    Config { op: &'static str, msg: String },
    #[error("contract violation: {0}")]
    Contract(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// A dense array with an optional gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if numel(&shape) != data.len() {
            return Err(TensorError::Shape {
                op: "tensor",
                lhs: shape,
                rhs: vec![data.len()],
            });
        }
        Ok(Self {
            shape,
            data,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = numel(&shape);
        Self {
            shape,
            data: vec![0.0; n],
            grad: None,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![],
            data: vec![value],
            grad: None,
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
            grad: None,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        match &mut self.grad {
            Some(g) => g.iter_mut().for_each(|x| *x = 0.0),
            None => self.grad = Some(vec![0.0; self.data.len()]),
        }
    }

    /// Adds `g` into the gradient buffer, allocating it if needed.
    pub fn accumulate_grad(&mut self, g: &[f64]) -> Result<()> {
        if g.len() != self.data.len() {
            return Err(TensorError::Shape {
                op: "accumulate_grad",
                lhs: self.shape.clone(),
                rhs: vec![g.len()],
            });
        }
        let buf = self.grad.get_or_insert_with(|| vec![0.0; g.len()]);
        for (b, x) in buf.iter_mut().zip(g) {
            *b += x;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

impl Var {
    pub fn index(&self) -> usize {
        self.index
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul { a: usize, b: usize, trans_b: bool },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow { a: usize, row: usize },
    MulRow { a: usize, row: usize },
    MulCol { a: usize, col: usize },
    Scale(usize, f64),
    ScaleBy { a: usize, s: usize },
    Sigmoid(usize),
    Tanh(usize),
    Abs(usize),
    Softmax { a: usize, cols: usize },
    Concat { parts: Vec<usize>, axis_cols: bool },
    SliceCols { a: usize, start: usize },
    Reshape(usize),
    RepeatCols { a: usize, times: usize },
    Sum(usize),
    Mean(usize),
    Conv1d { input: usize, kernel: usize },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul { .. } => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddRow { .. } => "add_row",
            Op::MulRow { .. } => "mul_row",
            Op::MulCol { .. } => "mul_col",
            Op::Scale(..) => "scale",
            Op::ScaleBy { .. } => "scale_by",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Abs(_) => "abs",
            Op::Softmax { .. } => "softmax",
            Op::Concat { .. } => "concat",
            Op::SliceCols { .. } => "slice_cols",
            Op::Reshape(_) => "reshape",
            Op::RepeatCols { .. } => "repeat_cols",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::Conv1d { .. } => "conv1d",
        }
    }

    fn inputs(&self) -> Vec<usize> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul { a, b, .. } => vec![*a, *b],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::AddRow { a, row } | Op::MulRow { a, row } => vec![*a, *row],
            Op::MulCol { a, col } => vec![*a, *col],
            Op::ScaleBy { a, s } => vec![*a, *s],
            Op::Conv1d { input, kernel } => vec![*input, *kernel],
            Op::Concat { parts, .. } => parts.clone(),
            Op::Scale(a, _)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Abs(a)
            | Op::Softmax { a, .. }
            | Op::SliceCols { a, .. }
            | Op::Reshape(a)
            | Op::RepeatCols { a, .. }
            | Op::Sum(a)
            | Op::Mean(a) => vec![*a],
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
}

/// Summary of one recorded operation, exposed for inspection in tests.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub op: &'static str,
    pub inputs: Vec<usize>,
    pub output: usize,
}

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Computation record for one forward/backward pass.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `c = a·b + beta·c` with arbitrary strides on `a` and `b`; `c` is dense row-major.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|x| *x *= beta);
        return;
    }
    // SAFETY: the strides describe matrices that lie within the given slices,
    // which callers guarantee via prior shape checks; `c` is dense m×n.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn records(&self) -> Vec<Record> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| Record {
                op: n.op.name(),
                inputs: n.op.inputs(),
                output: i,
            })
            .collect()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(numel(&shape), value.len());
        self.nodes.push(Node { shape, value, op });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn check(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(TensorError::Contract(format!(
                "variable {} does not belong to tape {}",
                v.index, self.id
            )));
        }
        Ok(v.index)
    }

    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(t.shape.clone(), t.data.clone(), Op::Leaf)
    }

    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Result<Var> {
        if numel(&shape) != data.len() {
            return Err(TensorError::Shape {
                op: "constant",
                lhs: shape,
                rhs: vec![data.len()],
            });
        }
        Ok(self.push(shape, data, Op::Leaf))
    }

    pub fn zeros(&mut self, shape: Vec<usize>) -> Var {
        let n = numel(&shape);
        self.push(shape, vec![0.0; n], Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.index].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.index].shape
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.index];
        Tensor {
            shape: n.shape.clone(),
            data: n.value.clone(),
            grad: self.grads.get(v.index).cloned().flatten(),
        }
    }

    /// Gradient of the last `backward` loss with respect to `v`; zeros if unreachable.
    pub fn grad(&self, v: Var) -> Vec<f64> {
        match self.grads.get(v.index).and_then(|g| g.as_ref()) {
            Some(g) => g.clone(),
            None => vec![0.0; self.nodes[v.index].value.len()],
        }
    }

    fn dims2(&self, i: usize, op: &'static str) -> Result<(usize, usize)> {
        match self.nodes[i].shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            s => Err(TensorError::Config {
                op,
                msg: format!("expected a matrix, got shape {s:?}"),
            }),
        }
    }

    fn same_shape(&self, a: usize, b: usize, op: &'static str) -> Result<()> {
        if self.nodes[a].shape != self.nodes[b].shape {
            return Err(TensorError::Shape {
                op,
                lhs: self.nodes[a].shape.clone(),
                rhs: self.nodes[b].shape.clone(),
            });
        }
        Ok(())
    }

    /// `a[m×k] · b[k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a[m×k] · b[n×k]ᵀ`, used for `x·Wᵀ` with weights stored `out × in`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (ai, bi) = (self.check(a)?, self.check(b)?);
        let (m, k) = self.dims2(ai, "matmul")?;
        let (br, bc) = self.dims2(bi, "matmul")?;
        let (kb, n) = if trans_b { (bc, br) } else { (br, bc) };
        if k != kb {
            return Err(TensorError::Shape {
                op: "matmul",
                lhs: self.nodes[ai].shape.clone(),
                rhs: self.nodes[bi].shape.clone(),
            });
        }
        let mut out = vec![0.0; m * n];
        let bs = if trans_b { (1, k) } else { (n, 1) };
        gemm(
            m,
            k,
            n,
            &self.nodes[ai].value,
            (k, 1),
            &self.nodes[bi].value,
            bs,
            0.0,
            &mut out,
        );
        Ok(self.push(
            vec![m, n],
            out,
            Op::MatMul {
                a: ai,
                b: bi,
                trans_b,
            },
        ))
    }

    fn zip_op(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        let (ai, bi) = (self.check(a)?, self.check(b)?);
        self.same_shape(ai, bi, op.name())?;
        let out = self.nodes[ai]
            .value
            .iter()
            .zip(&self.nodes[bi].value)
            .map(|(x, y)| f(*x, *y))
            .collect();
        let shape = self.nodes[ai].shape.clone();
        Ok(self.push(shape, out, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_op(a, b, Op::Add(a.index, b.index), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_op(a, b, Op::Sub(a.index, b.index), |x, y| x - y)
    }

    /// Hadamard product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_op(a, b, Op::Mul(a.index, b.index), |x, y| x * y)
    }

    fn row_op(&mut self, a: Var, row: Var, add: bool) -> Result<Var> {
        let (ai, ri) = (self.check(a)?, self.check(row)?);
        let name = if add { "add_row" } else { "mul_row" };
        let n = match self.nodes[ai].shape.as_slice() {
            [n] => *n,
            [_, n] => *n,
            s => {
                return Err(TensorError::Config {
                    op: name,
                    msg: format!("expected vector or matrix, got {s:?}"),
                })
            }
        };
        if self.nodes[ri].value.len() != n || self.nodes[ri].shape.len() != 1 {
            return Err(TensorError::Shape {
                op: name,
                lhs: self.nodes[ai].shape.clone(),
                rhs: self.nodes[ri].shape.clone(),
            });
        }
        let r = &self.nodes[ri].value;
        let out: Vec<f64> = self.nodes[ai]
            .value
            .chunks(n)
            .flat_map(|chunk| {
                chunk
                    .iter()
                    .zip(r)
                    .map(move |(x, y)| if add { x + y } else { x * y })
            })
            .collect();
        let shape = self.nodes[ai].shape.clone();
        let op = if add {
            Op::AddRow { a: ai, row: ri }
        } else {
            Op::MulRow { a: ai, row: ri }
        };
        Ok(self.push(shape, out, op))
    }

    /// Adds a length-`n` vector to every row of an `m×n` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.row_op(a, row, true)
    }

    /// Multiplies every row of an `m×n` matrix elementwise by a length-`n` vector.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.row_op(a, row, false)
    }

    /// Scales row `i` of an `m×n` matrix by `col[i]` (`col` is `[m]` or `[m×1]`).
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (ai, ci) = (self.check(a)?, self.check(col)?);
        let (m, n) = self.dims2(ai, "mul_col")?;
        if self.nodes[ci].value.len() != m {
            return Err(TensorError::Shape {
                op: "mul_col",
                lhs: self.nodes[ai].shape.clone(),
                rhs: self.nodes[ci].shape.clone(),
            });
        }
        let c = &self.nodes[ci].value;
        let mut out = self.nodes[ai].value.clone();
        for (i, row) in out.chunks_mut(n).enumerate() {
            row.iter_mut().for_each(|x| *x *= c[i]);
        }
        Ok(self.push(vec![m, n], out, Op::MulCol { a: ai, col: ci }))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let ai = self.check(a)?;
        let out = self.nodes[ai].value.iter().map(|x| x * c).collect();
        let shape = self.nodes[ai].shape.clone();
        Ok(self.push(shape, out, Op::Scale(ai, c)))
    }

    /// Multiplies every entry of `a` by the single value held in `s`.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Result<Var> {
        let (ai, si) = (self.check(a)?, self.check(s)?);
        if self.nodes[si].value.len() != 1 {
            return Err(TensorError::Shape {
                op: "scale_by",
                lhs: self.nodes[ai].shape.clone(),
                rhs: self.nodes[si].shape.clone(),
            });
        }
        let c = self.nodes[si].value[0];
        let out = self.nodes[ai].value.iter().map(|x| x * c).collect();
        let shape = self.nodes[ai].shape.clone();
        Ok(self.push(shape, out, Op::ScaleBy { a: ai, s: si }))
    }

    fn map_op(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Result<Var> {
        let ai = self.check(a)?;
        let out = self.nodes[ai].value.iter().map(|x| f(*x)).collect();
        let shape = self.nodes[ai].shape.clone();
        Ok(self.push(shape, out, op))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.map_op(a, Op::Sigmoid(a.index), sigmoid_scalar)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.map_op(a, Op::Tanh(a.index), f64::tanh)
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.map_op(a, Op::Abs(a.index), f64::abs)
    }

    /// Softmax over a vector, or over each row of a matrix.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let ai = self.check(a)?;
        let cols = match self.nodes[ai].shape.as_slice() {
            [n] => *n,
            [_, n] => *n,
            s => {
                return Err(TensorError::Config {
                    op: "softmax",
                    msg: format!("expected vector or matrix, got {s:?}"),
                })
            }
        };
        if cols == 0 {
            return Err(TensorError::Config {
                op: "softmax",
                msg: "softmax over zero entries".into(),
            });
        }
        let mut out = self.nodes[ai].value.clone();
        for row in out.chunks_mut(cols) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                total += *x;
            }
            row.iter_mut().for_each(|x| *x /= total);
        }
        let shape = self.nodes[ai].shape.clone();
        Ok(self.push(shape, out, Op::Softmax { a: ai, cols }))
    }

    /// Concatenates rank-1 tensors end to end.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut idx = Vec::with_capacity(parts.len());
        let mut out = Vec::new();
        for p in parts {
            let i = self.check(*p)?;
            if self.nodes[i].shape.len() != 1 {
                return Err(TensorError::Config {
                    op: "concat",
                    msg: format!("expected vectors, got {:?}", self.nodes[i].shape),
                });
            }
            out.extend_from_slice(&self.nodes[i].value);
            idx.push(i);
        }
        let n = out.len();
        Ok(self.push(
            vec![n],
            out,
            Op::Concat {
                parts: idx,
                axis_cols: false,
            },
        ))
    }

    /// Concatenates matrices with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(TensorError::Config {
                op: "concat_cols",
                msg: "nothing to concatenate".into(),
            });
        }
        let mut idx = Vec::with_capacity(parts.len());
        let mut widths = Vec::with_capacity(parts.len());
        let first = self.check(parts[0])?;
        let (m, _) = self.dims2(first, "concat_cols")?;
        for p in parts {
            let i = self.check(*p)?;
            let (r, c) = self.dims2(i, "concat_cols")?;
            if r != m {
                return Err(TensorError::Shape {
                    op: "concat_cols",
                    lhs: self.nodes[first].shape.clone(),
                    rhs: self.nodes[i].shape.clone(),
                });
            }
            idx.push(i);
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * total);
        for r in 0..m {
            for (&i, &w) in idx.iter().zip(&widths) {
                out.extend_from_slice(&self.nodes[i].value[r * w..(r + 1) * w]);
            }
        }
        Ok(self.push(
            vec![m, total],
            out,
            Op::Concat {
                parts: idx,
                axis_cols: true,
            },
        ))
    }

    /// Stacks matrices with equal column counts vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(TensorError::Config {
                op: "concat_rows",
                msg: "nothing to concatenate".into(),
            });
        }
        let first = self.check(parts[0])?;
        let (_, n) = self.dims2(first, "concat_rows")?;
        let mut idx = Vec::with_capacity(parts.len());
        let mut rows = 0;
        let mut out = Vec::new();
        for p in parts {
            let i = self.check(*p)?;
            let (r, c) = self.dims2(i, "concat_rows")?;
            if c != n {
                return Err(TensorError::Shape {
                    op: "concat_rows",
                    lhs: self.nodes[first].shape.clone(),
                    rhs: self.nodes[i].shape.clone(),
                });
            }
            out.extend_from_slice(&self.nodes[i].value);
            rows += r;
            idx.push(i);
        }
        // Row stacking of row-major matrices is plain concatenation of data,
        // so the rank-1 backward path applies unchanged.
        Ok(self.push(
            vec![rows, n],
            out,
            Op::Concat {
                parts: idx,
                axis_cols: false,
            },
        ))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let ai = self.check(a)?;
        let (m, n) = self.dims2(ai, "slice_cols")?;
        if start + len > n {
            return Err(TensorError::Config {
                op: "slice_cols",
                msg: format!(
                    "columns {start}..{} out of range for width {n}",
                    start + len
                ),
            });
        }
        let v = &self.nodes[ai].value;
        let mut out = Vec::with_capacity(m * len);
        for r in 0..m {
            out.extend_from_slice(&v[r * n + start..r * n + start + len]);
        }
        Ok(self.push(vec![m, len], out, Op::SliceCols { a: ai, start }))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let ai = self.check(a)?;
        if numel(&shape) != self.nodes[ai].value.len() {
            return Err(TensorError::Shape {
                op: "reshape",
                lhs: self.nodes[ai].shape.clone(),
                rhs: shape,
            });
        }
        let out = self.nodes[ai].value.clone();
        Ok(self.push(shape, out, Op::Reshape(ai)))
    }

    /// Repeats each column `times` times: `[m×n] → [m×(n·times)]`.
    pub fn repeat_cols(&mut self, a: Var, times: usize) -> Result<Var> {
        let ai = self.check(a)?;
        let (m, n) = self.dims2(ai, "repeat_cols")?;
        let v = &self.nodes[ai].value;
        let mut out = Vec::with_capacity(m * n * times);
        for x in v {
            out.extend(std::iter::repeat_n(*x, times));
        }
        Ok(self.push(vec![m, n * times], out, Op::RepeatCols { a: ai, times }))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let ai = self.check(a)?;
        let s = self.nodes[ai].value.iter().sum();
        Ok(self.push(vec![], vec![s], Op::Sum(ai)))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let ai = self.check(a)?;
        let n = self.nodes[ai].value.len();
        if n == 0 {
            return Err(TensorError::Config {
                op: "mean",
                msg: "mean of an empty tensor".into(),
            });
        }
        let s: f64 = self.nodes[ai].value.iter().sum();
        Ok(self.push(vec![], vec![s / n as f64], Op::Mean(ai)))
    }

    /// Same-padded 1-D cross-correlation of a vector, or of each row of a
    /// matrix, with an odd-length kernel.
    pub fn conv1d(&mut self, input: Var, kernel: Var) -> Result<Var> {
        let (ii, ki) = (self.check(input)?, self.check(kernel)?);
        let (rows, len) = match self.nodes[ii].shape.as_slice() {
            [l] => (1, *l),
            [r, l] => (*r, *l),
            s => {
                return Err(TensorError::Config {
                    op: "conv1d",
                    msg: format!("expected vector or matrix input, got {s:?}"),
                })
            }
        };
        if self.nodes[ki].shape.len() != 1 {
            return Err(TensorError::Config {
                op: "conv1d",
                msg: format!("kernel must be a vector, got {:?}", self.nodes[ki].shape),
            });
        }
        let k = self.nodes[ki].value.len();
        if k.is_multiple_of(2) {
            return Err(TensorError::Config {
                op: "conv1d",
                msg: format!("kernel size must be odd, got {k}"),
            });
        }
        if k > len {
            return Err(TensorError::Config {
                op: "conv1d",
                msg: format!("kernel size {k} exceeds input length {len}"),
            });
        }
        let r = k / 2;
        let x = &self.nodes[ii].value;
        let w = &self.nodes[ki].value;
        let mut out = vec![0.0; rows * len];
        for b in 0..rows {
            let xr = &x[b * len..(b + 1) * len];
            let yr = &mut out[b * len..(b + 1) * len];
            for (i, y) in yr.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (j, wj) in w.iter().enumerate() {
                    let p = i + j;
                    if p >= r && p - r < len {
                        acc += wj * xr[p - r];
                    }
                }
                *y = acc;
            }
        }
        let shape = self.nodes[ii].shape.clone();
        Ok(self.push(
            shape,
            out,
            Op::Conv1d {
                input: ii,
                kernel: ki,
            },
        ))
    }

    /// Reverse pass from a scalar loss. Previous gradients are discarded.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let li = self.check(loss)?;
        if self.nodes[li].value.len() != 1 {
            return Err(TensorError::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.nodes[li].shape
            )));
        }
        self.grads = vec![None; self.nodes.len()];
        self.grads[li] = Some(vec![1.0]);
        for i in (0..=li).rev() {
            let Some(gy) = self.grads[i].take() else {
                continue;
            };
            self.backprop_node(i, &gy);
            self.grads[i] = Some(gy);
        }
        Ok(())
    }

    fn acc(&mut self, i: usize) -> &mut Vec<f64> {
        // sized from the shape: values may be temporarily taken during backprop
        let n = numel(&self.nodes[i].shape);
        self.grads[i].get_or_insert_with(|| vec![0.0; n])
    }

    fn backprop_node(&mut self, i: usize, gy: &[f64]) {
        let op = self.nodes[i].op.clone();
        match op {
            Op::Leaf => {}
            Op::MatMul { a, b, trans_b } => {
                let (m, k) = (self.nodes[a].shape[0], self.nodes[a].shape[1]);
                let n = self.nodes[i].shape[1];
                // dA = dY · (B or Bᵀ)ᵀ
                let bv = std::mem::take(&mut self.nodes[b].value);
                {
                    let ga = self.acc(a);
                    let bs = if trans_b { (k, 1) } else { (1, n) };
                    gemm(m, n, k, gy, (n, 1), &bv, bs, 1.0, ga);
                }
                self.nodes[b].value = bv;
                let av = std::mem::take(&mut self.nodes[a].value);
                {
                    let gb = self.acc(b);
                    if trans_b {
                        // dB[n×k] = dYᵀ · A
                        gemm(n, m, k, gy, (1, n), &av, (k, 1), 1.0, gb);
                    } else {
                        // dB[k×n] = Aᵀ · dY
                        gemm(k, m, n, &av, (1, k), gy, (n, 1), 1.0, gb);
                    }
                }
                self.nodes[a].value = av;
            }
            Op::Add(a, b) => {
                add_into(self.acc(a), gy);
                add_into(self.acc(b), gy);
            }
            Op::Sub(a, b) => {
                add_into(self.acc(a), gy);
                let gb = self.acc(b);
                gb.iter_mut().zip(gy).for_each(|(g, d)| *g -= d);
            }
            Op::Mul(a, b) => {
                let bv = std::mem::take(&mut self.nodes[b].value);
                self.acc(a)
                    .iter_mut()
                    .zip(gy.iter().zip(&bv))
                    .for_each(|(g, (d, y))| *g += d * y);
                self.nodes[b].value = bv;
                let av = std::mem::take(&mut self.nodes[a].value);
                self.acc(b)
                    .iter_mut()
                    .zip(gy.iter().zip(&av))
                    .for_each(|(g, (d, x))| *g += d * x);
                self.nodes[a].value = av;
            }
            Op::AddRow { a, row } => {
                add_into(self.acc(a), gy);
                let n = self.nodes[row].value.len();
                let gr = self.acc(row);
                for chunk in gy.chunks(n) {
                    add_into(gr, chunk);
                }
            }
            Op::MulRow { a, row } => {
                let n = self.nodes[row].value.len();
                let rv = std::mem::take(&mut self.nodes[row].value);
                {
                    let ga = self.acc(a);
                    for (gchunk, dchunk) in ga.chunks_mut(n).zip(gy.chunks(n)) {
                        for ((g, d), r) in gchunk.iter_mut().zip(dchunk).zip(&rv) {
                            *g += d * r;
                        }
                    }
                }
                self.nodes[row].value = rv;
                let av = std::mem::take(&mut self.nodes[a].value);
                {
                    let gr = self.acc(row);
                    for (dchunk, xchunk) in gy.chunks(n).zip(av.chunks(n)) {
                        for ((g, d), x) in gr.iter_mut().zip(dchunk).zip(xchunk) {
                            *g += d * x;
                        }
                    }
                }
                self.nodes[a].value = av;
            }
            Op::MulCol { a, col } => {
                let n = self.nodes[i].shape[1];
                let cv = std::mem::take(&mut self.nodes[col].value);
                {
                    let ga = self.acc(a);
                    for (r, (gchunk, dchunk)) in ga.chunks_mut(n).zip(gy.chunks(n)).enumerate() {
                        for (g, d) in gchunk.iter_mut().zip(dchunk) {
                            *g += d * cv[r];
                        }
                    }
                }
                self.nodes[col].value = cv;
                let av = std::mem::take(&mut self.nodes[a].value);
                {
                    let gc = self.acc(col);
                    for (r, (dchunk, xchunk)) in gy.chunks(n).zip(av.chunks(n)).enumerate() {
                        gc[r] += dchunk.iter().zip(xchunk).map(|(d, x)| d * x).sum::<f64>();
                    }
                }
                self.nodes[a].value = av;
            }
            Op::Scale(a, c) => {
                self.acc(a)
                    .iter_mut()
                    .zip(gy)
                    .for_each(|(g, d)| *g += d * c);
            }
            Op::ScaleBy { a, s } => {
                let c = self.nodes[s].value[0];
                self.acc(a)
                    .iter_mut()
                    .zip(gy)
                    .for_each(|(g, d)| *g += d * c);
                let dot: f64 = gy
                    .iter()
                    .zip(&self.nodes[a].value)
                    .map(|(d, x)| d * x)
                    .sum();
                self.acc(s)[0] += dot;
            }
            Op::Sigmoid(a) => {
                let y = std::mem::take(&mut self.nodes[i].value);
                self.acc(a)
                    .iter_mut()
                    .zip(gy.iter().zip(&y))
                    .for_each(|(g, (d, y))| *g += d * y * (1.0 - y));
                self.nodes[i].value = y;
            }
            Op::Tanh(a) => {
                let y = std::mem::take(&mut self.nodes[i].value);
                self.acc(a)
                    .iter_mut()
                    .zip(gy.iter().zip(&y))
                    .for_each(|(g, (d, y))| *g += d * (1.0 - y * y));
                self.nodes[i].value = y;
            }
            Op::Abs(a) => {
                let x = std::mem::take(&mut self.nodes[a].value);
                self.acc(a)
                    .iter_mut()
                    .zip(gy.iter().zip(&x))
                    .for_each(|(g, (d, x))| {
                        // subgradient 0 at the kink
                        let s = if *x > 0.0 {
                            1.0
                        } else if *x < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                        *g += d * s;
                    });
                self.nodes[a].value = x;
            }
            Op::Softmax { a, cols } => {
                let y = std::mem::take(&mut self.nodes[i].value);
                {
                    let ga = self.acc(a);
                    for ((gchunk, dchunk), ychunk) in
                        ga.chunks_mut(cols).zip(gy.chunks(cols)).zip(y.chunks(cols))
                    {
                        let dot: f64 = dchunk.iter().zip(ychunk).map(|(d, y)| d * y).sum();
                        for ((g, d), y) in gchunk.iter_mut().zip(dchunk).zip(ychunk) {
                            *g += y * (d - dot);
                        }
                    }
                }
                self.nodes[i].value = y;
            }
            Op::Concat { parts, axis_cols } => {
                if axis_cols {
                    let m = self.nodes[i].shape[0];
                    let total = self.nodes[i].shape[1];
                    let mut offset = 0;
                    for p in parts {
                        let w = self.nodes[p].shape[1];
                        let gp = self.acc(p);
                        for r in 0..m {
                            add_into(
                                &mut gp[r * w..(r + 1) * w],
                                &gy[r * total + offset..r * total + offset + w],
                            );
                        }
                        offset += w;
                    }
                } else {
                    let mut offset = 0;
                    for p in parts {
                        let len = self.nodes[p].value.len();
                        add_into(self.acc(p), &gy[offset..offset + len]);
                        offset += len;
                    }
                }
            }
            Op::SliceCols { a, start } => {
                let n = self.nodes[a].shape[1];
                let len = self.nodes[i].shape[1];
                let ga = self.acc(a);
                for (r, dchunk) in gy.chunks(len).enumerate() {
                    add_into(&mut ga[r * n + start..r * n + start + len], dchunk);
                }
            }
            Op::Reshape(a) => add_into(self.acc(a), gy),
            Op::RepeatCols { a, times } => {
                let ga = self.acc(a);
                for (g, chunk) in ga.iter_mut().zip(gy.chunks(times)) {
                    *g += chunk.iter().sum::<f64>();
                }
            }
            Op::Sum(a) => {
                let d = gy[0];
                self.acc(a).iter_mut().for_each(|g| *g += d);
            }
            Op::Mean(a) => {
                let n = self.nodes[a].value.len() as f64;
                let d = gy[0] / n;
                self.acc(a).iter_mut().for_each(|g| *g += d);
            }
            Op::Conv1d { input, kernel } => {
                let len = *self.nodes[input].shape.last().unwrap_or(&0);
                let k = self.nodes[kernel].value.len();
                let r = k / 2;
                let w = std::mem::take(&mut self.nodes[kernel].value);
                {
                    let gx = self.acc(input);
                    for (gxr, dyr) in gx.chunks_mut(len).zip(gy.chunks(len)) {
                        for (idx, d) in dyr.iter().enumerate() {
                            for (j, wj) in w.iter().enumerate() {
                                let p = idx + j;
                                if p >= r && p - r < len {
                                    gxr[p - r] += d * wj;
                                }
                            }
                        }
                    }
                }
                self.nodes[kernel].value = w;
                let x = std::mem::take(&mut self.nodes[input].value);
                {
                    let gw = self.acc(kernel);
                    for (xr, dyr) in x.chunks(len).zip(gy.chunks(len)) {
                        for (idx, d) in dyr.iter().enumerate() {
                            for (j, g) in gw.iter_mut().enumerate() {
                                let p = idx + j;
                                if p >= r && p - r < len {
                                    *g += d * xr[p - r];
                                }
                            }
                        }
                    }
                }
                self.nodes[input].value = x;
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}
