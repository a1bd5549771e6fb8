//! Forward implementations of the recorded operations.
//!
//! Every method validates shapes eagerly and returns an error naming the
//! offending shapes rather than panicking; the training loop treats any of
//! these as a bug in model wiring, but the CLI surfaces them as exit codes.

use super::{rows_cols, sigmoid_scalar, softplus_scalar, DiffTensor, Op, Scalar, TensorError};

impl<F: Scalar> DiffTensor<F> {
    fn check_same_tape(&self, other: &Self, op: &'static str) -> Result<(), TensorError> {
        if self.tape.same_tape(&other.tape) {
            Ok(())
        } else {
            Err(TensorError::TapeMismatch { op })
        }
    }

    fn node_data(&self) -> (Vec<usize>, Vec<F>) {
        let inner = self.tape.inner.borrow();
        let node = &inner.nodes[self.id];
        (node.shape.clone(), node.values.clone())
    }

    fn eltwise_binary(
        &self,
        other: &Self,
        op_name: &'static str,
        op: Op<F>,
        f: impl Fn(F, F) -> F,
    ) -> Result<Self, TensorError> {
        self.check_same_tape(other, op_name)?;
        let (shape, out) = {
            let inner = self.tape.inner.borrow();
            let a = &inner.nodes[self.id];
            let b = &inner.nodes[other.id];
            if a.shape != b.shape {
                return Err(TensorError::ShapeMismatch {
                    op: op_name,
                    lhs: a.shape.clone(),
                    rhs: b.shape.clone(),
                });
            }
            let out: Vec<F> = a
                .values
                .iter()
                .zip(&b.values)
                .map(|(&x, &y)| f(x, y))
                .collect();
            (a.shape.clone(), out)
        };
        self.tape.record(shape, out, op)
    }

    fn eltwise_unary(
        &self,
        op: Op<F>,
        f: impl Fn(F) -> F,
    ) -> Result<Self, TensorError> {
        let (shape, values) = self.node_data();
        let out: Vec<F> = values.iter().map(|&x| f(x)).collect();
        self.tape.record(shape, out, op)
    }

    // ── elementwise arithmetic ──

    pub fn add(&self, other: &Self) -> Result<Self, TensorError> {
        self.eltwise_binary(other, "add", Op::Add(self.id, other.id), |x, y| x + y)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, TensorError> {
        self.eltwise_binary(other, "sub", Op::Sub(self.id, other.id), |x, y| x - y)
    }

    pub fn mul(&self, other: &Self) -> Result<Self, TensorError> {
        self.eltwise_binary(other, "mul", Op::Mul(self.id, other.id), |x, y| x * y)
    }

    pub fn div(&self, other: &Self) -> Result<Self, TensorError> {
        self.eltwise_binary(other, "div", Op::Div(self.id, other.id), |x, y| x / y)
    }

    pub fn neg(&self) -> Result<Self, TensorError> {
        self.eltwise_unary(Op::Neg(self.id), |x| -x)
    }

    pub fn scale(&self, c: F) -> Result<Self, TensorError> {
        self.eltwise_unary(Op::Scale(self.id, c), |x| x * c)
    }

    pub fn add_scalar(&self, c: F) -> Result<Self, TensorError> {
        self.eltwise_unary(Op::AddScalar(self.id, c), |x| x + c)
    }

    // ── activations and pointwise nonlinearities ──

    pub fn relu(&self) -> Result<Self, TensorError> {
        self.eltwise_unary(Op::Relu(self.id), |x| x.max(F::zero()))
    }

    pub fn sigmoid(&self) -> Result<Self, TensorError> {
        self.eltwise_unary(Op::Sigmoid(self.id), sigmoid_scalar)
    }

    pub fn softplus(&self) -> Result<Self, TensorError> {
        self.eltwise_unary(Op::Softplus(self.id), softplus_scalar)
    }

    pub fn exp(&self) -> Result<Self, TensorError> {
        self.eltwise_unary(Op::Exp(self.id), |x| x.exp())
    }

    /// Natural log. The whole input must be strictly positive; this op backs
    /// the Gaussian divergence terms where a zero would poison the tape.
    pub fn ln(&self) -> Result<Self, TensorError> {
        {
            let inner = self.tape.inner.borrow();
            let node = &inner.nodes[self.id];
            if node.values.iter().any(|v| *v <= F::zero()) {
                return Err(TensorError::LogDomain { op: "ln" });
            }
        }
        self.eltwise_unary(Op::Ln(self.id), |x| x.ln())
    }

    pub fn abs(&self) -> Result<Self, TensorError> {
        self.eltwise_unary(Op::Abs(self.id), |x| x.abs())
    }

    pub fn clamp(&self, lo: F, hi: F) -> Result<Self, TensorError> {
        if !(lo <= hi) {
            return Err(TensorError::Invalid {
                op: "clamp",
                detail: format!("lower bound {lo} exceeds upper bound {hi}"),
            });
        }
        self.eltwise_unary(Op::Clamp { src: self.id, lo, hi }, |x| x.max(lo).min(hi))
    }

    /// Elementwise smooth-l1 with knee `delta`: quadratic inside the knee,
    /// linear outside. `delta` must be positive.
    pub fn smooth_l1(&self, delta: F) -> Result<Self, TensorError> {
        if !(delta > F::zero()) {
            return Err(TensorError::Invalid {
                op: "smooth_l1",
                detail: format!("delta must be positive, got {delta}"),
            });
        }
        let half = F::from_f64(0.5);
        self.eltwise_unary(Op::SmoothL1 { src: self.id, delta }, |x| {
            if x.abs() < delta {
                half * x * x / delta
            } else {
                x.abs() - half * delta
            }
        })
    }

    // ── linear algebra ──

    /// Row-major matrix product, (m x k) . (k x n) -> (m x n).
    pub fn matmul(&self, other: &Self) -> Result<Self, TensorError> {
        self.check_same_tape(other, "matmul")?;
        let (shape, out) = {
            let inner = self.tape.inner.borrow();
            let a = &inner.nodes[self.id];
            let b = &inner.nodes[other.id];
            if a.shape.len() != 2 {
                return Err(TensorError::WrongRank {
                    op: "matmul",
                    expected: "rank-2 left operand",
                    shape: a.shape.clone(),
                });
            }
            if b.shape.len() != 2 || a.shape[1] != b.shape[0] {
                return Err(TensorError::ShapeMismatch {
                    op: "matmul",
                    lhs: a.shape.clone(),
                    rhs: b.shape.clone(),
                });
            }
            let (m, k) = rows_cols(&a.shape);
            let n = b.shape[1];
            let mut out = vec![F::zero(); m * n];
            for i in 0..m {
                let arow = &a.values[i * k..(i + 1) * k];
                let orow = &mut out[i * n..(i + 1) * n];
                for (l, &ail) in arow.iter().enumerate() {
                    let brow = &b.values[l * n..(l + 1) * n];
                    for (o, &blj) in orow.iter_mut().zip(brow) {
                        *o += ail * blj;
                    }
                }
            }
            (vec![m, n], out)
        };
        self.tape.record(shape, out, Op::Matmul(self.id, other.id))
    }

    /// Matrix-vector product, (m x k) . (k) -> (m).
    pub fn matvec(&self, x: &Self) -> Result<Self, TensorError> {
        self.check_same_tape(x, "matvec")?;
        let (shape, out) = {
            let inner = self.tape.inner.borrow();
            let w = &inner.nodes[self.id];
            let v = &inner.nodes[x.id];
            if w.shape.len() != 2 || v.shape.len() != 1 || w.shape[1] != v.shape[0] {
                return Err(TensorError::ShapeMismatch {
                    op: "matvec",
                    lhs: w.shape.clone(),
                    rhs: v.shape.clone(),
                });
            }
            let (m, k) = rows_cols(&w.shape);
            let mut out = vec![F::zero(); m];
            for i in 0..m {
                let wrow = &w.values[i * k..(i + 1) * k];
                let mut acc = F::zero();
                for (&wij, &xj) in wrow.iter().zip(&v.values) {
                    acc += wij * xj;
                }
                out[i] = acc;
            }
            (vec![m], out)
        };
        self.tape.record(shape, out, Op::MatVec(self.id, x.id))
    }

    pub fn transpose(&self) -> Result<Self, TensorError> {
        let (shape, values) = self.node_data();
        if shape.len() != 2 {
            return Err(TensorError::WrongRank {
                op: "transpose",
                expected: "rank-2 input",
                shape,
            });
        }
        let (rows, cols) = rows_cols(&shape);
        let mut out = vec![F::zero(); rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                out[j * rows + i] = values[i * cols + j];
            }
        }
        self.tape.record(vec![cols, rows], out, Op::Transpose(self.id))
    }

    /// Reinterpret the buffer under a new shape with the same element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self, TensorError> {
        let (old_shape, values) = self.node_data();
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                lhs: old_shape,
                rhs: shape.to_vec(),
            });
        }
        self.tape.record(shape.to_vec(), values, Op::Reshape(self.id))
    }

    // ── broadcasts over one axis ──

    /// Add a length-`cols` vector to every row of a (rows x cols) matrix.
    pub fn add_row_vec(&self, v: &Self) -> Result<Self, TensorError> {
        self.check_same_tape(v, "add_row_vec")?;
        let (shape, out) = {
            let inner = self.tape.inner.borrow();
            let m = &inner.nodes[self.id];
            let vec = &inner.nodes[v.id];
            if m.shape.len() != 2 || vec.shape.len() != 1 || vec.shape[0] != m.shape[1] {
                return Err(TensorError::ShapeMismatch {
                    op: "add_row_vec",
                    lhs: m.shape.clone(),
                    rhs: vec.shape.clone(),
                });
            }
            let (rows, cols) = rows_cols(&m.shape);
            let mut out = Vec::with_capacity(rows * cols);
            for i in 0..rows {
                let mrow = &m.values[i * cols..(i + 1) * cols];
                for (&x, &b) in mrow.iter().zip(&vec.values) {
                    out.push(x + b);
                }
            }
            (m.shape.clone(), out)
        };
        self.tape.record(shape, out, Op::AddRowVec(self.id, v.id))
    }

    /// Add a length-`rows` vector down the rows: entry i is added to every
    /// element of row i.
    pub fn add_col_vec(&self, v: &Self) -> Result<Self, TensorError> {
        self.check_same_tape(v, "add_col_vec")?;
        let (shape, out) = {
            let inner = self.tape.inner.borrow();
            let m = &inner.nodes[self.id];
            let vec = &inner.nodes[v.id];
            if m.shape.len() != 2 || vec.shape.len() != 1 || vec.shape[0] != m.shape[0] {
                return Err(TensorError::ShapeMismatch {
                    op: "add_col_vec",
                    lhs: m.shape.clone(),
                    rhs: vec.shape.clone(),
                });
            }
            let (rows, cols) = rows_cols(&m.shape);
            let mut out = Vec::with_capacity(rows * cols);
            for i in 0..rows {
                let b = vec.values[i];
                for &x in &m.values[i * cols..(i + 1) * cols] {
                    out.push(x + b);
                }
            }
            (m.shape.clone(), out)
        };
        self.tape.record(shape, out, Op::AddColVec(self.id, v.id))
    }

    /// Tile a length-n vector into an (n x cols) matrix whose row i repeats
    /// entry i.
    pub fn broadcast_cols(&self, cols: usize) -> Result<Self, TensorError> {
        let (shape, values) = self.node_data();
        if shape.len() != 1 {
            return Err(TensorError::WrongRank {
                op: "broadcast_cols",
                expected: "rank-1 input",
                shape,
            });
        }
        if cols == 0 {
            return Err(TensorError::Invalid {
                op: "broadcast_cols",
                detail: "column count must be positive".into(),
            });
        }
        let rows = shape[0];
        let mut out = Vec::with_capacity(rows * cols);
        for &v in &values {
            out.extend(std::iter::repeat(v).take(cols));
        }
        self.tape
            .record(vec![rows, cols], out, Op::BroadcastCols(self.id))
    }

    // ── stacking and slicing ──

    /// Stack two matrices with equal column counts, self on top.
    pub fn concat_rows(&self, other: &Self) -> Result<Self, TensorError> {
        self.check_same_tape(other, "concat_rows")?;
        let (shape, out) = {
            let inner = self.tape.inner.borrow();
            let a = &inner.nodes[self.id];
            let b = &inner.nodes[other.id];
            if a.shape.len() != 2 || b.shape.len() != 2 || a.shape[1] != b.shape[1] {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_rows",
                    lhs: a.shape.clone(),
                    rhs: b.shape.clone(),
                });
            }
            let mut out = Vec::with_capacity(a.values.len() + b.values.len());
            out.extend_from_slice(&a.values);
            out.extend_from_slice(&b.values);
            (vec![a.shape[0] + b.shape[0], a.shape[1]], out)
        };
        self.tape.record(shape, out, Op::ConcatRows(self.id, other.id))
    }

    /// Stack two matrices with equal row counts side by side, self on the left.
    pub fn concat_cols(&self, other: &Self) -> Result<Self, TensorError> {
        self.check_same_tape(other, "concat_cols")?;
        let (shape, out) = {
            let inner = self.tape.inner.borrow();
            let a = &inner.nodes[self.id];
            let b = &inner.nodes[other.id];
            if a.shape.len() != 2 || b.shape.len() != 2 || a.shape[0] != b.shape[0] {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_cols",
                    lhs: a.shape.clone(),
                    rhs: b.shape.clone(),
                });
            }
            let (rows, ca) = rows_cols(&a.shape);
            let cb = b.shape[1];
            let mut out = Vec::with_capacity(rows * (ca + cb));
            for i in 0..rows {
                out.extend_from_slice(&a.values[i * ca..(i + 1) * ca]);
                out.extend_from_slice(&b.values[i * cb..(i + 1) * cb]);
            }
            (vec![rows, ca + cb], out)
        };
        self.tape.record(shape, out, Op::ConcatCols(self.id, other.id))
    }

    /// Contiguous row slice `[start, start + len)`.
    pub fn slice_rows(&self, start: usize, len: usize) -> Result<Self, TensorError> {
        let (shape, values) = self.node_data();
        if shape.len() != 2 {
            return Err(TensorError::WrongRank {
                op: "slice_rows",
                expected: "rank-2 input",
                shape,
            });
        }
        let (rows, cols) = rows_cols(&shape);
        if len == 0 || start + len > rows {
            return Err(TensorError::Invalid {
                op: "slice_rows",
                detail: format!("range {start}..{} out of {rows} rows", start + len),
            });
        }
        let out = values[start * cols..(start + len) * cols].to_vec();
        self.tape
            .record(vec![len, cols], out, Op::SliceRows { src: self.id, start })
    }

    /// Contiguous column slice `[start, start + len)`.
    pub fn slice_cols(&self, start: usize, len: usize) -> Result<Self, TensorError> {
        let (shape, values) = self.node_data();
        if shape.len() != 2 {
            return Err(TensorError::WrongRank {
                op: "slice_cols",
                expected: "rank-2 input",
                shape,
            });
        }
        let (rows, cols) = rows_cols(&shape);
        if len == 0 || start + len > cols {
            return Err(TensorError::Invalid {
                op: "slice_cols",
                detail: format!("range {start}..{} out of {cols} columns", start + len),
            });
        }
        let mut out = Vec::with_capacity(rows * len);
        for i in 0..rows {
            out.extend_from_slice(&values[i * cols + start..i * cols + start + len]);
        }
        self.tape
            .record(vec![rows, len], out, Op::SliceCols { src: self.id, start })
    }

    // ── softmax and reductions ──

    /// Softmax along `axis`. Rank-1 tensors use axis 0; rank-2 tensors
    /// normalize rows with axis 1 or columns with axis 0. Inputs must be
    /// finite. The max-shift form keeps the result invariant to adding a
    /// constant to the whole axis.
    pub fn softmax(&self, axis: usize) -> Result<Self, TensorError> {
        let (shape, _) = self.node_data();
        {
            let inner = self.tape.inner.borrow();
            if inner.nodes[self.id].values.iter().any(|v| !v.is_finite()) {
                return Err(TensorError::NonFinite { op: "softmax" });
            }
        }
        match (shape.len(), axis) {
            (1, 0) => self.softmax_rows(),
            (2, 1) => self.softmax_rows(),
            (2, 0) => self.transpose()?.softmax_rows()?.transpose(),
            (rank, _) => Err(TensorError::InvalidAxis {
                op: "softmax",
                axis,
                rank,
            }),
        }
    }

    fn softmax_rows(&self) -> Result<Self, TensorError> {
        let (shape, values) = self.node_data();
        let cols = *shape.last().unwrap_or(&0);
        let mut out = Vec::with_capacity(values.len());
        for row in values.chunks_exact(cols.max(1)) {
            let mut mx = row[0];
            for &x in row {
                if x > mx {
                    mx = x;
                }
            }
            let mut denom = F::zero();
            let start = out.len();
            for &x in row {
                let e = (x - mx).exp();
                denom += e;
                out.push(e);
            }
            for o in &mut out[start..] {
                *o = *o / denom;
            }
        }
        self.tape.record(shape, out, Op::SoftmaxRows(self.id))
    }

    /// Global average pooling over the spatial axis: (channels x spatial)
    /// -> (channels), each entry the mean of its row.
    pub fn gap(&self) -> Result<Self, TensorError> {
        let (shape, values) = self.node_data();
        if shape.len() != 2 {
            return Err(TensorError::WrongRank {
                op: "gap",
                expected: "rank-2 input (channels x spatial)",
                shape,
            });
        }
        let (rows, cols) = rows_cols(&shape);
        let inv = F::one() / F::from_f64(cols as f64);
        let mut out = Vec::with_capacity(rows);
        for row in values.chunks_exact(cols) {
            let mut acc = F::zero();
            for &x in row {
                acc += x;
            }
            out.push(acc * inv);
        }
        self.tape.record(vec![rows], out, Op::Gap(self.id))
    }

    /// Sum of all elements, yielding a rank-0 tensor.
    pub fn sum(&self) -> Result<Self, TensorError> {
        let (_, values) = self.node_data();
        let mut acc = F::zero();
        for &x in &values {
            acc += x;
        }
        self.tape.record(Vec::new(), vec![acc], Op::Sum(self.id))
    }

    /// Mean of all elements, yielding a rank-0 tensor.
    pub fn mean(&self) -> Result<Self, TensorError> {
        let (_, values) = self.node_data();
        if values.is_empty() {
            return Err(TensorError::Invalid {
                op: "mean",
                detail: "mean of an empty tensor".into(),
            });
        }
        let mut acc = F::zero();
        for &x in &values {
            acc += x;
        }
        let mean = acc / F::from_f64(values.len() as f64);
        self.tape.record(Vec::new(), vec![mean], Op::Mean(self.id))
    }
}
