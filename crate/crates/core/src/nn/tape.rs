//! Reverse-mode automatic differentiation over matrices.
//!
//! Every operation appends a node holding its value; `backward` walks the
//! nodes in reverse and accumulates adjoints. Only nodes that depend on a
//! leaf created with `requires_grad` carry gradients.

use super::matrix::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Min(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Exp(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    Sum(Var),
    Mean(Var),
    RowSum(Var),
    Cols(Var, usize),
    LogSoftmax(Var),
    Pick(Var, Vec<usize>),
    BroadcastRows(Var),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`], indexed by variable.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros shaped like it when the loss does not
    /// depend on `v`.
    pub fn get_or_zeros(&self, v: Var, rows: usize, cols: usize) -> Matrix {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(rows, cols))
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.get(0, 0)
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn grad_flag(&self, inputs: &[Var]) -> bool {
        inputs.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf without gradient (inputs, targets).
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b));
        let g = self.grad_flag(&[a, b]);
        self.push(value, Op::MatMul(a, b), g)
    }

    /// `a + b` with the single-row `b` broadcast over rows of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let bias = self.value(b);
        assert_eq!(bias.rows(), 1, "add_row expects a row vector");
        let mut value = self.value(a).clone();
        assert_eq!(value.cols(), bias.cols(), "add_row width");
        let bias = bias.row(0).to_vec();
        for r in 0..value.rows() {
            for (x, b) in value.row_mut(r).iter_mut().zip(&bias) {
                *x += b;
            }
        }
        let g = self.grad_flag(&[a, b]);
        self.push(value, Op::AddRow(a, b), g)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let g = self.grad_flag(&[a, b]);
        self.push(value, Op::Add(a, b), g)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let g = self.grad_flag(&[a, b]);
        self.push(value, Op::Sub(a, b), g)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let g = self.grad_flag(&[a, b]);
        self.push(value, Op::Mul(a, b), g)
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), f64::min);
        let g = self.grad_flag(&[a, b]);
        self.push(value, Op::Min(a, b), g)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a).map(|x| x * k);
        let g = self.grad_flag(&[a]);
        self.push(value, Op::Scale(a, k), g)
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a).map(|x| x + k);
        let g = self.grad_flag(&[a]);
        self.push(value, Op::AddScalar(a), g)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        let g = self.grad_flag(&[a]);
        self.push(value, Op::Tanh(a), g)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::exp);
        let g = self.grad_flag(&[a]);
        self.push(value, Op::Exp(a), g)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x * x);
        let g = self.grad_flag(&[a]);
        self.push(value, Op::Square(a), g)
    }

    /// Clamp into `[lo, hi]`; gradient passes only strictly inside.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let value = self.value(a).map(|x| x.clamp(lo, hi));
        let g = self.grad_flag(&[a]);
        self.push(value, Op::Clamp(a, lo, hi), g)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::from_vec(1, 1, vec![self.value(a).sum()]);
        let g = self.grad_flag(&[a]);
        self.push(value, Op::Sum(a), g)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let value = Matrix::from_vec(1, 1, vec![m.sum() / m.len() as f64]);
        let g = self.grad_flag(&[a]);
        self.push(value, Op::Mean(a), g)
    }

    /// Sum over columns: `r x c -> r x 1`.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let value = Matrix::column((0..m.rows()).map(|r| m.row(r).iter().sum()).collect());
        let g = self.grad_flag(&[a]);
        self.push(value, Op::RowSum(a), g)
    }

    /// Columns `[start, start + len)`.
    pub fn cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let m = self.value(a);
        assert!(start + len <= m.cols(), "column slice out of range");
        let mut data = Vec::with_capacity(m.rows() * len);
        for r in 0..m.rows() {
            data.extend_from_slice(&m.row(r)[start..start + len]);
        }
        let value = Matrix::from_vec(m.rows(), len, data);
        let g = self.grad_flag(&[a]);
        self.push(value, Op::Cols(a, start), g)
    }

    /// Row-wise log-softmax.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let mut value = m.clone();
        for r in 0..m.rows() {
            let row = value.row_mut(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            for x in row.iter_mut() {
                *x -= lse;
            }
        }
        let g = self.grad_flag(&[a]);
        self.push(value, Op::LogSoftmax(a), g)
    }

    /// One column per row: `out[r] = a[r, idx[r]]`.
    pub fn pick(&mut self, a: Var, idx: Vec<usize>) -> Var {
        let m = self.value(a);
        assert_eq!(idx.len(), m.rows(), "pick index count");
        let value = Matrix::column(idx.iter().enumerate().map(|(r, &c)| m.get(r, c)).collect());
        let g = self.grad_flag(&[a]);
        self.push(value, Op::Pick(a, idx), g)
    }

    /// Repeats a single-row matrix `rows` times.
    pub fn broadcast_rows(&mut self, a: Var, rows: usize) -> Var {
        let m = self.value(a);
        assert_eq!(m.rows(), 1, "broadcast_rows expects a row vector");
        let mut data = Vec::with_capacity(rows * m.cols());
        for _ in 0..rows {
            data.extend_from_slice(m.row(0));
        }
        let value = Matrix::from_vec(rows, m.cols(), data);
        let g = self.grad_flag(&[a]);
        self.push(value, Op::BroadcastRows(a), g)
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.nodes.is_empty() || loss.0 >= self.nodes.len() {
            return Err(Error::BackwardWithoutForward);
        }
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(Error::DimensionMismatch {
                expected: 1,
                actual: shape.0 * shape.1,
                context: "backward expects a scalar loss",
            });
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let needs = |v: Var| self.nodes[v.0].needs_grad;
        let mut acc = |v: Var, delta: Matrix| match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&delta),
            slot @ None => *slot = Some(delta),
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if needs(*a) {
                    acc(*a, g.matmul_t(self.value(*b)));
                }
                if needs(*b) {
                    acc(*b, self.value(*a).t_matmul(g));
                }
            }
            Op::AddRow(a, b) => {
                if needs(*a) {
                    acc(*a, g.clone());
                }
                if needs(*b) {
                    let mut col_sums = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (s, x) in col_sums.row_mut(0).iter_mut().zip(g.row(r)) {
                            *s += x;
                        }
                    }
                    acc(*b, col_sums);
                }
            }
            Op::Add(a, b) => {
                if needs(*a) {
                    acc(*a, g.clone());
                }
                if needs(*b) {
                    acc(*b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                if needs(*a) {
                    acc(*a, g.clone());
                }
                if needs(*b) {
                    acc(*b, g.map(|x| -x));
                }
            }
            Op::Mul(a, b) => {
                if needs(*a) {
                    acc(*a, g.zip_map(self.value(*b), |x, y| x * y));
                }
                if needs(*b) {
                    acc(*b, g.zip_map(self.value(*a), |x, y| x * y));
                }
            }
            Op::Min(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let take_a = va.zip_map(vb, |x, y| if x <= y { 1.0 } else { 0.0 });
                if needs(*a) {
                    acc(*a, g.zip_map(&take_a, |x, m| x * m));
                }
                if needs(*b) {
                    acc(*b, g.zip_map(&take_a, |x, m| x * (1.0 - m)));
                }
            }
            Op::Scale(a, k) => acc(*a, g.map(|x| x * k)),
            Op::AddScalar(a) => acc(*a, g.clone()),
            Op::Tanh(a) => acc(*a, g.zip_map(&node.value, |x, y| x * (1.0 - y * y))),
            Op::Exp(a) => acc(*a, g.zip_map(&node.value, |x, y| x * y)),
            Op::Square(a) => acc(*a, g.zip_map(self.value(*a), |x, y| 2.0 * x * y)),
            Op::Clamp(a, lo, hi) => {
                let mask = self
                    .value(*a)
                    .map(|x| if x > *lo && x < *hi { 1.0 } else { 0.0 });
                acc(*a, g.zip_map(&mask, |x, m| x * m));
            }
            Op::Sum(a) => {
                let (r, c) = self.value(*a).shape();
                acc(*a, Matrix::filled(r, c, g.get(0, 0)));
            }
            Op::Mean(a) => {
                let (r, c) = self.value(*a).shape();
                acc(*a, Matrix::filled(r, c, g.get(0, 0) / (r * c) as f64));
            }
            Op::RowSum(a) => {
                let (r, c) = self.value(*a).shape();
                let mut d = Matrix::zeros(r, c);
                for i in 0..r {
                    d.row_mut(i).fill(g.get(i, 0));
                }
                acc(*a, d);
            }
            Op::Cols(a, start) => {
                let (r, c) = self.value(*a).shape();
                let mut d = Matrix::zeros(r, c);
                for i in 0..r {
                    d.row_mut(i)[*start..*start + g.cols()].copy_from_slice(g.row(i));
                }
                acc(*a, d);
            }
            Op::LogSoftmax(a) => {
                let y = &node.value;
                let mut d = g.clone();
                for i in 0..y.rows() {
                    let gsum: f64 = g.row(i).iter().sum();
                    for (dx, ly) in d.row_mut(i).iter_mut().zip(y.row(i)) {
                        *dx -= ly.exp() * gsum;
                    }
                }
                acc(*a, d);
            }
            Op::Pick(a, idx) => {
                let (r, c) = self.value(*a).shape();
                let mut d = Matrix::zeros(r, c);
                for (i, &col) in idx.iter().enumerate() {
                    d.set(i, col, g.get(i, 0));
                }
                acc(*a, d);
            }
            Op::BroadcastRows(a) => {
                let mut d = Matrix::zeros(1, g.cols());
                for i in 0..g.rows() {
                    for (s, x) in d.row_mut(0).iter_mut().zip(g.row(i)) {
                        *s += x;
                    }
                }
                acc(*a, d);
            }
        }
    }
}
