//! Record-and-replay reverse-mode differentiation.
//!
//! A [`Tape`] owns every tensor produced during one forward pass. Each
//! operation appends a node holding its output value and the references
//! needed to replay the chain rule; [`Tape::backward`] consumes the tape
//! and walks the log in reverse, accumulating a gradient for every
//! `param` leaf. One tape per forward pass, no graph reuse.

use super::scalar::Scalar;
use super::tensor::{Tensor, TensorError};

/// Handle to a node on a tape. Only valid for the tape that created it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Clamp bound for the binary cross-entropy op: probabilities are pinned
/// to `[BCE_EPS, 1 - BCE_EPS]` before the logs.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// C = A·B with A m×k, B k×n.
    Matmul { a: Var, b: Var },
    /// C = A·Bᵀ with A m×k, B n×k.
    MatmulTransB { a: Var, b: Var },
    /// y = x·W with x a length-k vector and W k×n.
    VecMat { x: Var, w: Var },
    Add { a: Var, b: Var },
    /// Matrix plus a vector broadcast over rows (bias add).
    AddRow { m: Var, v: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, c: f64 },
    Concat { inputs: Vec<Var>, axis: usize },
    /// Extract row `index` of a matrix as a vector.
    Row { x: Var, index: usize },
    SliceRows { x: Var, start: usize, len: usize },
    SliceCols { x: Var, start: usize, len: usize },
    Softmax { x: Var, axis: usize },
    LayerNorm { x: Var, gain: Var, bias: Var, eps: f64 },
    Gelu { x: Var },
    Sigmoid { x: Var },
    /// Sum of all elements to a scalar.
    Sum { x: Var },
    /// Sum of several scalars to one scalar.
    SumVars { xs: Vec<Var> },
    /// Binary cross-entropy of a single probability against a fixed label.
    Bce { p: Var, y: f64 },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op,
    needs_grad: bool,
}

pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Per-leaf gradients produced by [`Tape::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the loss w.r.t. `v`. A tracked leaf that the loss does
    /// not depend on gets an explicit zero tensor of its own shape.
    pub fn grad(&self, v: Var) -> Tensor<T> {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(self.shapes[v.0].clone()),
        }
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Record an input that does not require a gradient.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Record a trainable leaf; `backward` will produce a gradient for it.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    fn push(&mut self, value: Tensor<T>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn child(&mut self, value: Tensor<T>, op: Op, inputs: &[Var]) -> Var {
        let needs = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.push(value, op, needs)
    }

    // ── Forward operations ───────────────────────────────────────────

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[0] {
            return Err(TensorError::DimMismatch {
                op: "matmul",
                left: av.shape().to_vec(),
                right: bv.shape().to_vec(),
            });
        }
        let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
        let out = matmul(av.data(), bv.data(), m, k, n);
        let t = Tensor::new(vec![m, n], out)?;
        Ok(self.child(t, Op::Matmul { a, b }, &[a, b]))
    }

    pub fn matmul_trans_b(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[1] {
            return Err(TensorError::DimMismatch {
                op: "matmul_trans_b",
                left: av.shape().to_vec(),
                right: bv.shape().to_vec(),
            });
        }
        let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[0]);
        let out = matmul_tb(av.data(), bv.data(), m, k, n);
        let t = Tensor::new(vec![m, n], out)?;
        Ok(self.child(t, Op::MatmulTransB { a, b }, &[a, b]))
    }

    pub fn vecmat(&mut self, x: Var, w: Var) -> Result<Var, TensorError> {
        let (xv, wv) = (self.value(x), self.value(w));
        if xv.rank() != 1 || wv.rank() != 2 || xv.len() != wv.shape()[0] {
            return Err(TensorError::DimMismatch {
                op: "vecmat",
                left: xv.shape().to_vec(),
                right: wv.shape().to_vec(),
            });
        }
        let (k, n) = (wv.shape()[0], wv.shape()[1]);
        let out = matmul(xv.data(), wv.data(), 1, k, n);
        Ok(self.child(Tensor::vector(out), Op::VecMat { x, w }, &[x, w]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(TensorError::DimMismatch {
                op: "add",
                left: av.shape().to_vec(),
                right: bv.shape().to_vec(),
            });
        }
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| x + y)
            .collect();
        let t = Tensor::new(av.shape().to_vec(), data)?;
        Ok(self.child(t, Op::Add { a, b }, &[a, b]))
    }

    pub fn add_row(&mut self, m: Var, v: Var) -> Result<Var, TensorError> {
        let (mv, vv) = (self.value(m), self.value(v));
        if mv.rank() != 2 || vv.rank() != 1 || mv.shape()[1] != vv.len() {
            return Err(TensorError::DimMismatch {
                op: "add_row",
                left: mv.shape().to_vec(),
                right: vv.shape().to_vec(),
            });
        }
        let cols = vv.len();
        let mut data = mv.data().to_vec();
        for row in data.chunks_mut(cols) {
            for (d, &b) in row.iter_mut().zip(vv.data()) {
                *d += b;
            }
        }
        let t = Tensor::new(mv.shape().to_vec(), data)?;
        Ok(self.child(t, Op::AddRow { m, v }, &[m, v]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(TensorError::DimMismatch {
                op: "mul",
                left: av.shape().to_vec(),
                right: bv.shape().to_vec(),
            });
        }
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| x * y)
            .collect();
        let t = Tensor::new(av.shape().to_vec(), data)?;
        Ok(self.child(t, Op::Mul { a, b }, &[a, b]))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let cc = T::from_f64(c);
        let t = self.value(x).map(|v| v * cc);
        self.child(t, Op::Scale { x, c }, &[x])
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, TensorError> {
        assert!(!inputs.is_empty(), "concat of zero tensors");
        let first = self.value(inputs[0]).shape().to_vec();
        let rank = first.len();
        if axis >= rank {
            return Err(TensorError::AxisOutOfRange {
                op: "concat",
                axis,
                rank,
            });
        }
        let mut axis_total = 0usize;
        for &v in inputs {
            let s = self.value(v).shape();
            if s.len() != rank
                || s.iter()
                    .zip(&first)
                    .enumerate()
                    .any(|(i, (a, b))| i != axis && a != b)
            {
                return Err(TensorError::DimMismatch {
                    op: "concat",
                    left: first.clone(),
                    right: s.to_vec(),
                });
            }
            axis_total += s[axis];
        }
        let mut out_shape = first.clone();
        out_shape[axis] = axis_total;

        // Row-major copy: an outer index runs over dims before `axis`,
        // an inner stride over dims after it.
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut data = vec![T::zero(); out_shape.iter().product()];
        let out_axis_stride = axis_total * inner;
        let mut offset = 0usize;
        for &v in inputs {
            let s = self.value(v).shape().to_vec();
            let a_len = s[axis] * inner;
            let src = self.value(v).data();
            for o in 0..outer {
                let dst = &mut data[o * out_axis_stride + offset..];
                dst[..a_len].copy_from_slice(&src[o * a_len..(o + 1) * a_len]);
            }
            offset += a_len;
        }
        let t = Tensor::new(out_shape, data)?;
        Ok(self.child(
            t,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            inputs,
        ))
    }

    pub fn row(&mut self, x: Var, index: usize) -> Result<Var, TensorError> {
        let xv = self.value(x);
        if xv.rank() != 2 {
            return Err(TensorError::BadShape {
                op: "row",
                expected: "a rank-2 tensor",
                shape: xv.shape().to_vec(),
            });
        }
        if index >= xv.shape()[0] {
            return Err(TensorError::IndexOutOfRange {
                op: "row",
                index,
                len: xv.shape()[0],
            });
        }
        let t = Tensor::vector(xv.row(index).to_vec());
        Ok(self.child(t, Op::Row { x, index }, &[x]))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        let xv = self.value(x);
        if xv.rank() != 2 || start + len > xv.shape()[0] {
            return Err(TensorError::BadShape {
                op: "slice_rows",
                expected: "a rank-2 tensor covering the row range",
                shape: xv.shape().to_vec(),
            });
        }
        let cols = xv.shape()[1];
        let data = xv.data()[start * cols..(start + len) * cols].to_vec();
        let t = Tensor::new(vec![len, cols], data)?;
        Ok(self.child(t, Op::SliceRows { x, start, len }, &[x]))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        let xv = self.value(x);
        if xv.rank() != 2 || start + len > xv.shape()[1] {
            return Err(TensorError::BadShape {
                op: "slice_cols",
                expected: "a rank-2 tensor covering the column range",
                shape: xv.shape().to_vec(),
            });
        }
        let (rows, cols) = (xv.shape()[0], xv.shape()[1]);
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&xv.data()[r * cols + start..r * cols + start + len]);
        }
        let t = Tensor::new(vec![rows, len], data)?;
        Ok(self.child(t, Op::SliceCols { x, start, len }, &[x]))
    }

    /// Softmax along `axis`, computed with max subtraction. Supported for
    /// rank-1 and rank-2 tensors (all the model needs).
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var, TensorError> {
        let xv = self.value(x);
        let rank = xv.rank();
        if rank == 0 || rank > 2 || axis >= rank {
            return Err(TensorError::AxisOutOfRange {
                op: "softmax",
                axis,
                rank,
            });
        }
        let t = softmax_forward(xv, axis);
        Ok(self.child(t, Op::Softmax { x, axis }, &[x]))
    }

    /// Per-row layer normalization over the last axis, then `gain ⊙ x̂ + bias`.
    pub fn layer_norm(
        &mut self,
        x: Var,
        gain: Var,
        bias: Var,
        eps: f64,
    ) -> Result<Var, TensorError> {
        let (xv, gv, bv) = (self.value(x), self.value(gain), self.value(bias));
        let d = xv.cols();
        if xv.rank() == 0 || xv.rank() > 2 || gv.shape() != [d] || bv.shape() != [d] {
            return Err(TensorError::DimMismatch {
                op: "layer_norm",
                left: xv.shape().to_vec(),
                right: gv.shape().to_vec(),
            });
        }
        let rows = xv.rows();
        let mut data = Vec::with_capacity(xv.len());
        for r in 0..rows {
            let row = &xv.data()[r * d..(r + 1) * d];
            let (mean, inv_std) = row_moments(row, eps);
            for (i, &v) in row.iter().enumerate() {
                let norm = (v - mean) * inv_std;
                data.push(gv.data()[i] * norm + bv.data()[i]);
            }
        }
        let t = Tensor::new(xv.shape().to_vec(), data)?;
        Ok(self.child(t, Op::LayerNorm { x, gain, bias, eps }, &[x, gain, bias]))
    }

    /// Elementwise GELU (tanh approximation).
    pub fn gelu(&mut self, x: Var) -> Var {
        let t = self.value(x).map(gelu_scalar);
        self.child(t, Op::Gelu { x }, &[x])
    }

    /// Elementwise logistic sigmoid, computed without large exponentials.
    pub fn sigmoid(&mut self, x: Var) -> Var {
        let t = self.value(x).map(sigmoid_scalar);
        self.child(t, Op::Sigmoid { x }, &[x])
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let mut acc = T::zero();
        for &v in self.value(x).data() {
            acc += v;
        }
        self.child(Tensor::scalar(acc), Op::Sum { x }, &[x])
    }

    /// Sum of several one-element tensors, as a scalar.
    pub fn sum_vars(&mut self, xs: &[Var]) -> Var {
        let mut acc = T::zero();
        for &v in xs {
            debug_assert_eq!(self.value(v).len(), 1);
            acc += self.value(v).data()[0];
        }
        self.child(Tensor::scalar(acc), Op::SumVars { xs: xs.to_vec() }, xs)
    }

    /// Binary cross-entropy `−[y·log p + (1−y)·log(1−p)]` of one probability
    /// against label `y`, with `p` clamped to `[BCE_EPS, 1−BCE_EPS]`.
    pub fn bce(&mut self, p: Var, y: bool) -> Result<Var, TensorError> {
        let pv = self.value(p);
        if pv.len() != 1 {
            return Err(TensorError::BadShape {
                op: "bce",
                expected: "a one-element probability",
                shape: pv.shape().to_vec(),
            });
        }
        let yf = if y { 1.0 } else { 0.0 };
        let pc = pv.data()[0].as_f64().clamp(BCE_EPS, 1.0 - BCE_EPS);
        let loss = -(yf * pc.ln() + (1.0 - yf) * (1.0 - pc).ln());
        Ok(self.child(
            Tensor::scalar(T::from_f64(loss)),
            Op::Bce { p, y: yf },
            &[p],
        ))
    }

    // ── Backward pass ────────────────────────────────────────────────

    /// Replay the record in reverse, producing the gradient of the scalar
    /// `loss` for every `param` leaf. Consumes the tape: one record, one
    /// backward pass.
    pub fn backward(self, loss: Var) -> Result<Gradients<T>, TensorError> {
        let loss_shape = self.value(loss).shape();
        if !loss_shape.is_empty() && loss_shape != [1] {
            return Err(TensorError::NonScalarLoss {
                shape: loss_shape.to_vec(),
            });
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Tensor<T>>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(
            self.nodes[loss.0].value.shape().to_vec(),
            T::one(),
        ));

        for i in (0..n).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(dout) = grads[i].take() else {
                continue;
            };
            self.backward_node(i, &dout, &mut grads);
            // Leaves keep their accumulated gradient.
            if matches!(self.nodes[i].op, Op::Leaf) {
                grads[i] = Some(dout);
            }
        }

        let shapes = self
            .nodes
            .iter()
            .map(|nd| nd.value.shape().to_vec())
            .collect();
        Ok(Gradients { grads, shapes })
    }

    fn backward_node(&self, i: usize, dout: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let accumulate = |grads: &mut [Option<Tensor<T>>], v: Var, upd: Vec<T>, shape: &[usize]| {
            match &mut grads[v.0] {
                Some(existing) => {
                    for (e, u) in existing.data_mut().iter_mut().zip(&upd) {
                        *e += *u;
                    }
                }
                slot => {
                    *slot = Some(
                        Tensor::new(shape.to_vec(), upd).expect("gradient shape mismatch"),
                    );
                }
            }
        };
        let needs = |v: Var| self.nodes[v.0].needs_grad;

        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Matmul { a, b } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k) = (av.shape()[0], av.shape()[1]);
                let n = bv.shape()[1];
                if needs(*a) {
                    // dA = dC·Bᵀ
                    let da = matmul_tb(dout.data(), bv.data(), m, n, k);
                    accumulate(grads, *a, da, av.shape());
                }
                if needs(*b) {
                    // dB = Aᵀ·dC
                    let db = matmul_ta(av.data(), dout.data(), m, k, n);
                    accumulate(grads, *b, db, bv.shape());
                }
            }
            Op::MatmulTransB { a, b } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k) = (av.shape()[0], av.shape()[1]);
                let n = bv.shape()[0];
                if needs(*a) {
                    // dA = dC·B
                    let da = matmul(dout.data(), bv.data(), m, n, k);
                    accumulate(grads, *a, da, av.shape());
                }
                if needs(*b) {
                    // dB = dCᵀ·A
                    let db = matmul_ta(dout.data(), av.data(), m, n, k);
                    accumulate(grads, *b, db, bv.shape());
                }
            }
            Op::VecMat { x, w } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (k, n) = (wv.shape()[0], wv.shape()[1]);
                if needs(*x) {
                    // dx = W·dy
                    let mut dx = vec![T::zero(); k];
                    for (l, d) in dx.iter_mut().enumerate() {
                        let wrow = &wv.data()[l * n..(l + 1) * n];
                        let mut acc = T::zero();
                        for (wj, dj) in wrow.iter().zip(dout.data()) {
                            acc += *wj * *dj;
                        }
                        *d = acc;
                    }
                    accumulate(grads, *x, dx, xv.shape());
                }
                if needs(*w) {
                    // dW = x ⊗ dy
                    let mut dw = vec![T::zero(); k * n];
                    for (l, &xl) in xv.data().iter().enumerate() {
                        for (j, &dj) in dout.data().iter().enumerate() {
                            dw[l * n + j] = xl * dj;
                        }
                    }
                    accumulate(grads, *w, dw, wv.shape());
                }
            }
            Op::Add { a, b } => {
                if needs(*a) {
                    accumulate(grads, *a, dout.data().to_vec(), dout.shape());
                }
                if needs(*b) {
                    accumulate(grads, *b, dout.data().to_vec(), dout.shape());
                }
            }
            Op::AddRow { m, v } => {
                if needs(*m) {
                    accumulate(grads, *m, dout.data().to_vec(), dout.shape());
                }
                if needs(*v) {
                    let cols = self.value(*v).len();
                    let mut dv = vec![T::zero(); cols];
                    for row in dout.data().chunks(cols) {
                        for (d, &g) in dv.iter_mut().zip(row) {
                            *d += g;
                        }
                    }
                    accumulate(grads, *v, dv, self.value(*v).shape());
                }
            }
            Op::Mul { a, b } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if needs(*a) {
                    let da = dout
                        .data()
                        .iter()
                        .zip(bv.data())
                        .map(|(&d, &y)| d * y)
                        .collect();
                    accumulate(grads, *a, da, av.shape());
                }
                if needs(*b) {
                    let db = dout
                        .data()
                        .iter()
                        .zip(av.data())
                        .map(|(&d, &x)| d * x)
                        .collect();
                    accumulate(grads, *b, db, bv.shape());
                }
            }
            Op::Scale { x, c } => {
                if needs(*x) {
                    let cc = T::from_f64(*c);
                    let dx = dout.data().iter().map(|&d| d * cc).collect();
                    accumulate(grads, *x, dx, self.value(*x).shape());
                }
            }
            Op::Concat { inputs, axis } => {
                let out_shape = self.nodes[i].value.shape();
                let outer: usize = out_shape[..*axis].iter().product();
                let inner: usize = out_shape[*axis + 1..].iter().product();
                let out_axis_stride = out_shape[*axis] * inner;
                let mut offset = 0usize;
                for &v in inputs {
                    let s = self.value(v).shape().to_vec();
                    let a_len = s[*axis] * inner;
                    if needs(v) {
                        let mut dv = vec![T::zero(); self.value(v).len()];
                        for o in 0..outer {
                            let src = &dout.data()[o * out_axis_stride + offset..];
                            dv[o * a_len..(o + 1) * a_len].copy_from_slice(&src[..a_len]);
                        }
                        accumulate(grads, v, dv, &s);
                    }
                    offset += a_len;
                }
            }
            Op::Row { x, index } => {
                if needs(*x) {
                    let xv = self.value(*x);
                    let cols = xv.shape()[1];
                    let mut dx = vec![T::zero(); xv.len()];
                    dx[index * cols..(index + 1) * cols].copy_from_slice(dout.data());
                    accumulate(grads, *x, dx, xv.shape());
                }
            }
            Op::SliceRows { x, start, len } => {
                if needs(*x) {
                    let xv = self.value(*x);
                    let cols = xv.shape()[1];
                    let mut dx = vec![T::zero(); xv.len()];
                    dx[start * cols..(start + len) * cols].copy_from_slice(dout.data());
                    accumulate(grads, *x, dx, xv.shape());
                }
            }
            Op::SliceCols { x, start, len } => {
                if needs(*x) {
                    let xv = self.value(*x);
                    let (rows, cols) = (xv.shape()[0], xv.shape()[1]);
                    let mut dx = vec![T::zero(); xv.len()];
                    for r in 0..rows {
                        dx[r * cols + start..r * cols + start + len]
                            .copy_from_slice(&dout.data()[r * len..(r + 1) * len]);
                    }
                    accumulate(grads, *x, dx, xv.shape());
                }
            }
            Op::Softmax { x, axis } => {
                if needs(*x) {
                    let y = &self.nodes[i].value;
                    let dx = softmax_backward(y, dout, *axis);
                    accumulate(grads, *x, dx, y.shape());
                }
            }
            Op::LayerNorm { x, gain, bias, eps } => {
                let xv = self.value(*x);
                let gv = self.value(*gain);
                let d = xv.cols();
                let rows = xv.rows();
                let mut dx = vec![T::zero(); xv.len()];
                let mut dgain = vec![T::zero(); d];
                let mut dbias = vec![T::zero(); d];
                let inv_d = T::from_f64(1.0 / d as f64);
                for r in 0..rows {
                    let row = &xv.data()[r * d..(r + 1) * d];
                    let do_row = &dout.data()[r * d..(r + 1) * d];
                    let (mean, inv_std) = row_moments(row, *eps);
                    // dxhat, and the two lane means the VJP needs.
                    let mut mean_dxhat = T::zero();
                    let mut mean_dxhat_xhat = T::zero();
                    let mut xhat = vec![T::zero(); d];
                    let mut dxhat = vec![T::zero(); d];
                    for idx in 0..d {
                        xhat[idx] = (row[idx] - mean) * inv_std;
                        dxhat[idx] = do_row[idx] * gv.data()[idx];
                        mean_dxhat += dxhat[idx];
                        mean_dxhat_xhat += dxhat[idx] * xhat[idx];
                        dgain[idx] += do_row[idx] * xhat[idx];
                        dbias[idx] += do_row[idx];
                    }
                    mean_dxhat *= inv_d;
                    mean_dxhat_xhat *= inv_d;
                    for idx in 0..d {
                        dx[r * d + idx] =
                            inv_std * (dxhat[idx] - mean_dxhat - xhat[idx] * mean_dxhat_xhat);
                    }
                }
                if needs(*x) {
                    accumulate(grads, *x, dx, xv.shape());
                }
                if needs(*gain) {
                    accumulate(grads, *gain, dgain, &[d]);
                }
                if needs(*bias) {
                    accumulate(grads, *bias, dbias, &[d]);
                }
            }
            Op::Gelu { x } => {
                if needs(*x) {
                    let xv = self.value(*x);
                    let dx = dout
                        .data()
                        .iter()
                        .zip(xv.data())
                        .map(|(&d, &v)| d * gelu_grad_scalar(v))
                        .collect();
                    accumulate(grads, *x, dx, xv.shape());
                }
            }
            Op::Sigmoid { x } => {
                if needs(*x) {
                    let y = &self.nodes[i].value;
                    let dx = dout
                        .data()
                        .iter()
                        .zip(y.data())
                        .map(|(&d, &s)| d * s * (T::one() - s))
                        .collect();
                    accumulate(grads, *x, dx, self.value(*x).shape());
                }
            }
            Op::Sum { x } => {
                if needs(*x) {
                    let g = dout.data()[0];
                    let xv = self.value(*x);
                    accumulate(grads, *x, vec![g; xv.len()], xv.shape());
                }
            }
            Op::SumVars { xs } => {
                let g = dout.data()[0];
                for &v in xs {
                    if needs(v) {
                        accumulate(grads, v, vec![g], self.value(v).shape());
                    }
                }
            }
            Op::Bce { p, y } => {
                if needs(*p) {
                    let praw = self.value(*p).data()[0].as_f64();
                    let pc = praw_clamp(praw);
                    // Zero slope where the clamp is active.
                    let slope = if (praw - pc).abs() > 0.0 {
                        0.0
                    } else {
                        (pc - y) / (pc * (1.0 - pc))
                    };
                    let g = dout.data()[0] * T::from_f64(slope);
                    accumulate(grads, *p, vec![g], self.value(*p).shape());
                }
            }
        }
    }
}

fn praw_clamp(p: f64) -> f64 {
    p.clamp(BCE_EPS, 1.0 - BCE_EPS)
}

// ── Kernels ──────────────────────────────────────────────────────────

/// C = A·B, A m×k, B k×n.
fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (l, &av) in arow.iter().enumerate() {
            let brow = &b[l * n..(l + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
    c
}

/// C = A·Bᵀ, A m×k, B n×k.
fn matmul_tb<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = T::zero();
            for (&x, &y) in arow.iter().zip(brow) {
                acc += x * y;
            }
            c[i * n + j] = acc;
        }
    }
    c
}

/// C = Aᵀ·B, A m×k, B m×n → C k×n.
fn matmul_ta<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); k * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * n..(i + 1) * n];
        for (l, &av) in arow.iter().enumerate() {
            let crow = &mut c[l * n..(l + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
    c
}

/// Mean and 1/√(var+eps) of one lane, biased variance.
fn row_moments<T: Scalar>(row: &[T], eps: f64) -> (T, T) {
    let inv_n = T::from_f64(1.0 / row.len() as f64);
    let mut mean = T::zero();
    for &v in row {
        mean += v;
    }
    mean = mean * inv_n;
    let mut var = T::zero();
    for &v in row {
        let d = v - mean;
        var += d * d;
    }
    var = var * inv_n;
    let inv_std = T::one() / (var + T::from_f64(eps)).sqrt();
    (mean, inv_std)
}

fn softmax_forward<T: Scalar>(x: &Tensor<T>, axis: usize) -> Tensor<T> {
    let shape = x.shape().to_vec();
    let mut data = x.data().to_vec();
    for_each_lane(&shape, axis, |offset, stride, len| {
        let mut max = T::neg_infinity();
        for i in 0..len {
            let v = data[offset + i * stride];
            if v > max {
                max = v;
            }
        }
        let mut sum = T::zero();
        for i in 0..len {
            let e = (data[offset + i * stride] - max).exp();
            data[offset + i * stride] = e;
            sum += e;
        }
        for i in 0..len {
            data[offset + i * stride] /= sum;
        }
    });
    Tensor::new(shape, data).expect("softmax preserves shape")
}

fn softmax_backward<T: Scalar>(y: &Tensor<T>, dout: &Tensor<T>, axis: usize) -> Vec<T> {
    let shape = y.shape().to_vec();
    let mut dx = vec![T::zero(); y.len()];
    for_each_lane(&shape, axis, |offset, stride, len| {
        let mut dot = T::zero();
        for i in 0..len {
            let idx = offset + i * stride;
            dot += dout.data()[idx] * y.data()[idx];
        }
        for i in 0..len {
            let idx = offset + i * stride;
            dx[idx] = y.data()[idx] * (dout.data()[idx] - dot);
        }
    });
    dx
}

/// Visit every 1-D lane of a rank-1/rank-2 tensor along `axis` as
/// (offset, stride, len).
fn for_each_lane(shape: &[usize], axis: usize, mut f: impl FnMut(usize, usize, usize)) {
    match (shape.len(), axis) {
        (1, 0) => f(0, 1, shape[0]),
        (2, 1) => {
            for r in 0..shape[0] {
                f(r * shape[1], 1, shape[1]);
            }
        }
        (2, 0) => {
            for c in 0..shape[1] {
                f(c, shape[1], shape[0]);
            }
        }
        _ => unreachable!("lane iteration only defined for rank 1 and 2"),
    }
}

pub(crate) fn gelu_scalar<T: Scalar>(x: T) -> T {
    let c = T::from_f64(0.7978845608028654); // √(2/π)
    let k = T::from_f64(0.044715);
    let half = T::from_f64(0.5);
    let u = c * (x + k * x * x * x);
    half * x * (T::one() + u.tanh())
}

pub(crate) fn gelu_grad_scalar<T: Scalar>(x: T) -> T {
    let c = T::from_f64(0.7978845608028654);
    let k = T::from_f64(0.044715);
    let half = T::from_f64(0.5);
    let three = T::from_f64(3.0);
    let u = c * (x + k * x * x * x);
    let t = u.tanh();
    let du = c * (T::one() + three * k * x * x);
    half * (T::one() + t) + half * x * (T::one() - t * t) * du
}

pub(crate) fn sigmoid_scalar<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
