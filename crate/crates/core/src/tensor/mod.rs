//! Reverse-mode automatic differentiation over dense row-major tensors.
//!
//! The design is a classic Wengert tape: every operation appends a node
//! holding its output values plus the ids of its inputs, and [`DiffTensor`]
//! is a cheap handle (tape pointer + node id). Calling
//! [`DiffTensor::backward`] on a scalar output walks the tape once in
//! reverse and fills in gradients for every node, leaves included.
//!
//! Reductions and matrix kernels accumulate strictly sequentially, so a
//! forward pass is bit-identical across runs for identical inputs. Nothing
//! here is parallel on purpose; tensors in this project are small and
//! reproducibility is part of the contract.

mod grad_check;
mod ops;
mod scalar;

pub use grad_check::grad_check;
pub use scalar::Scalar;

use std::cell::RefCell;
use std::rc::Rc;

use thiserror::Error;

/// Errors surfaced by tape construction, operations and backward passes.
#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: expected {expected}, got shape {shape:?}")]
    WrongRank {
        op: &'static str,
        expected: &'static str,
        shape: Vec<usize>,
    },
    #[error("{op}: expected {expected} values, got {got}")]
    LengthMismatch {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{op}: operands live on different tapes")]
    TapeMismatch { op: &'static str },
    #[error("backward requires a scalar output, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("tape already consumed by a backward pass; build a fresh tape instead of resetting")]
    TapeConsumed,
    #[error("{op}: non-finite value encountered")]
    NonFinite { op: &'static str },
    #[error("{op}: input outside the log domain (all values must be > 0)")]
    LogDomain { op: &'static str },
    #[error("{op}: axis {axis} out of range for rank {rank}")]
    InvalidAxis {
        op: &'static str,
        axis: usize,
        rank: usize,
    },
    #[error("{op}: {detail}")]
    Invalid { op: &'static str, detail: String },
}

/// Recorded operation. Payloads are input node ids plus whatever constants
/// the backward rule needs; everything else is recomputed from node values.
#[derive(Debug, Clone)]
enum Op<F> {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Matmul(usize, usize),
    MatVec(usize, usize),
    AddRowVec(usize, usize),
    AddColVec(usize, usize),
    BroadcastCols(usize),
    ConcatRows(usize, usize),
    ConcatCols(usize, usize),
    SliceRows { src: usize, start: usize },
    SliceCols { src: usize, start: usize },
    Transpose(usize),
    Reshape(usize),
    Neg(usize),
    Scale(usize, F),
    AddScalar(usize, F),
    Relu(usize),
    Sigmoid(usize),
    Softplus(usize),
    Exp(usize),
    Ln(usize),
    Abs(usize),
    Clamp { src: usize, lo: F, hi: F },
    SmoothL1 { src: usize, delta: F },
    SoftmaxRows(usize),
    Gap(usize),
    Sum(usize),
    Mean(usize),
}

#[derive(Debug)]
struct Node<F> {
    shape: Vec<usize>,
    values: Vec<F>,
    grad: Option<Vec<F>>,
    op: Op<F>,
}

#[derive(Debug, Default)]
struct TapeInner<F> {
    nodes: Vec<Node<F>>,
    consumed: bool,
}

/// Ordered record of operations. Node ids are indices into the record, so
/// every id appears exactly once and all inputs of a node precede it; the
/// reverse walk in [`DiffTensor::backward`] relies on that ordering.
///
/// A tape is single-use: after one backward pass it refuses further
/// recording. Training code builds one tape per step and drops it.
#[derive(Debug, Clone, Default)]
pub struct Tape<F: Scalar> {
    inner: Rc<RefCell<TapeInner<F>>>,
}

impl<F: Scalar> Tape<F> {
    pub fn new() -> Self {
        Tape {
            inner: Rc::new(RefCell::new(TapeInner {
                nodes: Vec::new(),
                consumed: false,
            })),
        }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Record an input tensor. `values` length must match the shape product.
    pub fn leaf(
        &self,
        shape: &[usize],
        values: Vec<F>,
    ) -> Result<DiffTensor<F>, TensorError> {
        let numel: usize = shape.iter().product();
        if values.len() != numel {
            return Err(TensorError::LengthMismatch {
                op: "leaf",
                expected: numel,
                got: values.len(),
            });
        }
        self.record(shape.to_vec(), values, Op::Leaf)
    }

    /// Rank-0 input holding a single value.
    pub fn scalar(&self, value: F) -> DiffTensor<F> {
        self.record(Vec::new(), vec![value], Op::Leaf)
            .expect("scalar leaf cannot fail")
    }

    /// Rank-1 input.
    pub fn vector(&self, values: &[F]) -> DiffTensor<F> {
        self.record(vec![values.len()], values.to_vec(), Op::Leaf)
            .expect("vector leaf cannot fail")
    }

    /// Rank-2 input in row-major order.
    pub fn matrix(
        &self,
        rows: usize,
        cols: usize,
        values: Vec<F>,
    ) -> Result<DiffTensor<F>, TensorError> {
        self.leaf(&[rows, cols], values)
    }

    fn record(
        &self,
        shape: Vec<usize>,
        values: Vec<F>,
        op: Op<F>,
    ) -> Result<DiffTensor<F>, TensorError> {
        let mut inner = self.inner.borrow_mut();
        if inner.consumed {
            return Err(TensorError::TapeConsumed);
        }
        let id = inner.nodes.len();
        inner.nodes.push(Node {
            shape,
            values,
            grad: None,
            op,
        });
        Ok(DiffTensor {
            id,
            tape: self.clone(),
        })
    }

    fn same_tape(&self, other: &Tape<F>) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }
}

/// Handle to a node on a [`Tape`]. Cloning is cheap; the values live on the
/// tape itself.
#[derive(Debug, Clone)]
pub struct DiffTensor<F: Scalar> {
    id: usize,
    tape: Tape<F>,
}

impl<F: Scalar> DiffTensor<F> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &Tape<F> {
        &self.tape
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.inner.borrow().nodes[self.id].shape.clone()
    }

    pub fn numel(&self) -> usize {
        self.tape.inner.borrow().nodes[self.id].shape.iter().product()
    }

    /// Copy of the forward values, row-major.
    pub fn values(&self) -> Vec<F> {
        self.tape.inner.borrow().nodes[self.id].values.clone()
    }

    /// The single value of a rank-0 or one-element tensor.
    pub fn item(&self) -> Result<F, TensorError> {
        let inner = self.tape.inner.borrow();
        let node = &inner.nodes[self.id];
        if node.values.len() != 1 {
            return Err(TensorError::NotScalar {
                shape: node.shape.clone(),
            });
        }
        Ok(node.values[0])
    }

    /// Gradient populated by a prior backward pass, if any.
    pub fn grad(&self) -> Option<Vec<F>> {
        self.tape.inner.borrow().nodes[self.id].grad.clone()
    }

    /// Reverse pass seeded with d(self)/d(self) = 1. Fills gradients on
    /// every node of the tape and consumes the tape; a second call (or any
    /// further recording) is an error.
    pub fn backward(&self) -> Result<(), TensorError> {
        let mut inner = self.tape.inner.borrow_mut();
        if inner.consumed {
            return Err(TensorError::TapeConsumed);
        }
        {
            let node = &inner.nodes[self.id];
            if node.values.len() != 1 {
                return Err(TensorError::NotScalar {
                    shape: node.shape.clone(),
                });
            }
        }
        inner.consumed = true;

        let n = inner.nodes.len();
        let mut grads: Vec<Vec<F>> = inner
            .nodes
            .iter()
            .map(|node| vec![F::zero(); node.values.len()])
            .collect();
        grads[self.id][0] = F::one();

        for id in (0..n).rev() {
            // Inputs always have smaller ids, so taking the output gradient
            // out of the table never aliases the slots written below.
            let g = std::mem::take(&mut grads[id]);
            accumulate(&inner.nodes, id, &g, &mut grads);
            grads[id] = g;
        }

        for (node, grad) in inner.nodes.iter_mut().zip(grads) {
            node.grad = Some(grad);
        }
        Ok(())
    }
}

fn rows_cols(shape: &[usize]) -> (usize, usize) {
    debug_assert_eq!(shape.len(), 2);
    (shape[0], shape[1])
}

/// Apply the local gradient rule of node `id`, adding contributions from the
/// output gradient `g` into the input slots of `grads`.
fn accumulate<F: Scalar>(nodes: &[Node<F>], id: usize, g: &[F], grads: &mut [Vec<F>]) {
    let node = &nodes[id];
    match node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            for (d, &gi) in grads[a].iter_mut().zip(g) {
                *d += gi;
            }
            for (d, &gi) in grads[b].iter_mut().zip(g) {
                *d += gi;
            }
        }
        Op::Sub(a, b) => {
            for (d, &gi) in grads[a].iter_mut().zip(g) {
                *d += gi;
            }
            for (d, &gi) in grads[b].iter_mut().zip(g) {
                *d -= gi;
            }
        }
        Op::Mul(a, b) => {
            let (va, vb) = (&nodes[a].values, &nodes[b].values);
            for ((d, &gi), &x) in grads[a].iter_mut().zip(g).zip(vb) {
                *d += gi * x;
            }
            for ((d, &gi), &x) in grads[b].iter_mut().zip(g).zip(va) {
                *d += gi * x;
            }
        }
        Op::Div(a, b) => {
            let (va, vb) = (&nodes[a].values, &nodes[b].values);
            for ((d, &gi), &den) in grads[a].iter_mut().zip(g).zip(vb) {
                *d += gi / den;
            }
            for (((d, &gi), &num), &den) in grads[b].iter_mut().zip(g).zip(va).zip(vb) {
                *d -= gi * num / (den * den);
            }
        }
        Op::Matmul(a, b) => {
            // C = A (m x k) . B (k x n); dA = G . B^T, dB = A^T . G.
            let (m, k) = rows_cols(&nodes[a].shape);
            let (_, ncols) = rows_cols(&nodes[b].shape);
            let va = &nodes[a].values;
            let vb = &nodes[b].values;
            for i in 0..m {
                let grow = &g[i * ncols..(i + 1) * ncols];
                let da = &mut grads[a][i * k..(i + 1) * k];
                for (l, d) in da.iter_mut().enumerate() {
                    let brow = &vb[l * ncols..(l + 1) * ncols];
                    let mut acc = F::zero();
                    for (&gi, &bi) in grow.iter().zip(brow) {
                        acc += gi * bi;
                    }
                    *d += acc;
                }
            }
            for i in 0..m {
                let arow = &va[i * k..(i + 1) * k];
                let grow = &g[i * ncols..(i + 1) * ncols];
                for (l, &ail) in arow.iter().enumerate() {
                    let db = &mut grads[b][l * ncols..(l + 1) * ncols];
                    for (d, &gi) in db.iter_mut().zip(grow) {
                        *d += ail * gi;
                    }
                }
            }
        }
        Op::MatVec(w, x) => {
            // y = W (m x k) . x (k); dW[i][j] += g[i] x[j], dx[j] += W[i][j] g[i].
            let (m, k) = rows_cols(&nodes[w].shape);
            let vw = &nodes[w].values;
            let vx = &nodes[x].values;
            for i in 0..m {
                let gi = g[i];
                let dw = &mut grads[w][i * k..(i + 1) * k];
                for (d, &xj) in dw.iter_mut().zip(vx) {
                    *d += gi * xj;
                }
                let wrow = &vw[i * k..(i + 1) * k];
                let dx = &mut grads[x];
                for (d, &wij) in dx.iter_mut().zip(wrow) {
                    *d += gi * wij;
                }
            }
        }
        Op::AddRowVec(mat, vecid) => {
            let (rows, cols) = rows_cols(&nodes[mat].shape);
            for (d, &gi) in grads[mat].iter_mut().zip(g) {
                *d += gi;
            }
            for i in 0..rows {
                let grow = &g[i * cols..(i + 1) * cols];
                for (d, &gi) in grads[vecid].iter_mut().zip(grow) {
                    *d += gi;
                }
            }
        }
        Op::AddColVec(mat, vecid) => {
            let (rows, cols) = rows_cols(&nodes[mat].shape);
            for (d, &gi) in grads[mat].iter_mut().zip(g) {
                *d += gi;
            }
            for i in 0..rows {
                let grow = &g[i * cols..(i + 1) * cols];
                let mut acc = F::zero();
                for &gi in grow {
                    acc += gi;
                }
                grads[vecid][i] += acc;
            }
        }
        Op::BroadcastCols(vecid) => {
            let (rows, cols) = rows_cols(&node.shape);
            for i in 0..rows {
                let grow = &g[i * cols..(i + 1) * cols];
                let mut acc = F::zero();
                for &gi in grow {
                    acc += gi;
                }
                grads[vecid][i] += acc;
            }
        }
        Op::ConcatRows(a, b) => {
            let na = nodes[a].values.len();
            for (d, &gi) in grads[a].iter_mut().zip(&g[..na]) {
                *d += gi;
            }
            for (d, &gi) in grads[b].iter_mut().zip(&g[na..]) {
                *d += gi;
            }
        }
        Op::ConcatCols(a, b) => {
            let (rows, ca) = rows_cols(&nodes[a].shape);
            let (_, cb) = rows_cols(&nodes[b].shape);
            let cols = ca + cb;
            for i in 0..rows {
                let grow = &g[i * cols..(i + 1) * cols];
                for (d, &gi) in grads[a][i * ca..(i + 1) * ca].iter_mut().zip(&grow[..ca]) {
                    *d += gi;
                }
                for (d, &gi) in grads[b][i * cb..(i + 1) * cb].iter_mut().zip(&grow[ca..]) {
                    *d += gi;
                }
            }
        }
        Op::SliceRows { src, start } => {
            let (_, cols) = rows_cols(&nodes[src].shape);
            let offset = start * cols;
            for (d, &gi) in grads[src][offset..offset + g.len()].iter_mut().zip(g) {
                *d += gi;
            }
        }
        Op::SliceCols { src, start } => {
            let (rows, src_cols) = rows_cols(&nodes[src].shape);
            let (_, out_cols) = rows_cols(&node.shape);
            for i in 0..rows {
                let grow = &g[i * out_cols..(i + 1) * out_cols];
                let dst = &mut grads[src][i * src_cols + start..i * src_cols + start + out_cols];
                for (d, &gi) in dst.iter_mut().zip(grow) {
                    *d += gi;
                }
            }
        }
        Op::Transpose(a) => {
            let (rows, cols) = rows_cols(&node.shape);
            // Output is rows x cols, source is cols x rows.
            for i in 0..rows {
                for j in 0..cols {
                    grads[a][j * rows + i] += g[i * cols + j];
                }
            }
        }
        Op::Reshape(a) => {
            for (d, &gi) in grads[a].iter_mut().zip(g) {
                *d += gi;
            }
        }
        Op::Neg(a) => {
            for (d, &gi) in grads[a].iter_mut().zip(g) {
                *d -= gi;
            }
        }
        Op::Scale(a, c) => {
            for (d, &gi) in grads[a].iter_mut().zip(g) {
                *d += gi * c;
            }
        }
        Op::AddScalar(a, _) => {
            for (d, &gi) in grads[a].iter_mut().zip(g) {
                *d += gi;
            }
        }
        Op::Relu(a) => {
            let va = &nodes[a].values;
            for ((d, &gi), &x) in grads[a].iter_mut().zip(g).zip(va) {
                if x > F::zero() {
                    *d += gi;
                }
            }
        }
        Op::Sigmoid(a) => {
            for ((d, &gi), &y) in grads[a].iter_mut().zip(g).zip(&node.values) {
                *d += gi * y * (F::one() - y);
            }
        }
        Op::Softplus(a) => {
            let va = &nodes[a].values;
            for ((d, &gi), &x) in grads[a].iter_mut().zip(g).zip(va) {
                *d += gi * sigmoid_scalar(x);
            }
        }
        Op::Exp(a) => {
            for ((d, &gi), &y) in grads[a].iter_mut().zip(g).zip(&node.values) {
                *d += gi * y;
            }
        }
        Op::Ln(a) => {
            let va = &nodes[a].values;
            for ((d, &gi), &x) in grads[a].iter_mut().zip(g).zip(va) {
                *d += gi / x;
            }
        }
        Op::Abs(a) => {
            let va = &nodes[a].values;
            for ((d, &gi), &x) in grads[a].iter_mut().zip(g).zip(va) {
                if x > F::zero() {
                    *d += gi;
                } else if x < F::zero() {
                    *d -= gi;
                }
            }
        }
        Op::Clamp { src, lo, hi } => {
            let va = &nodes[src].values;
            for ((d, &gi), &x) in grads[src].iter_mut().zip(g).zip(va) {
                if x >= lo && x <= hi {
                    *d += gi;
                }
            }
        }
        Op::SmoothL1 { src, delta } => {
            let va = &nodes[src].values;
            for ((d, &gi), &x) in grads[src].iter_mut().zip(g).zip(va) {
                let slope = (x / delta).max(-F::one()).min(F::one());
                *d += gi * slope;
            }
        }
        Op::SoftmaxRows(a) => {
            let cols = *node.shape.last().unwrap_or(&1);
            let y = &node.values;
            for (row, grow) in g.chunks_exact(cols).enumerate() {
                let yrow = &y[row * cols..(row + 1) * cols];
                let mut dot = F::zero();
                for (&gi, &yi) in grow.iter().zip(yrow) {
                    dot += gi * yi;
                }
                let da = &mut grads[a][row * cols..(row + 1) * cols];
                for ((d, &gi), &yi) in da.iter_mut().zip(grow).zip(yrow) {
                    *d += yi * (gi - dot);
                }
            }
        }
        Op::Gap(a) => {
            let (rows, cols) = rows_cols(&nodes[a].shape);
            let inv = F::one() / F::from_f64(cols as f64);
            for i in 0..rows {
                let gi = g[i] * inv;
                for d in &mut grads[a][i * cols..(i + 1) * cols] {
                    *d += gi;
                }
            }
        }
        Op::Sum(a) => {
            let gi = g[0];
            for d in grads[a].iter_mut() {
                *d += gi;
            }
        }
        Op::Mean(a) => {
            let gi = g[0] / F::from_f64(nodes[a].values.len() as f64);
            for d in grads[a].iter_mut() {
                *d += gi;
            }
        }
    }
}

/// Numerically stable logistic, shared by the sigmoid and softplus rules.
pub(crate) fn sigmoid_scalar<F: Scalar>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// Stable softplus: ln(1 + e^x) without overflow for large |x|.
pub(crate) fn softplus_scalar<F: Scalar>(x: F) -> F {
    x.max(F::zero()) + (-x.abs()).exp().ln_1p()
}
