//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Nodes are appended
//! in evaluation order, so parents always precede children and a single
//! reverse sweep computes exact gradients. Binary elementwise operations
//! broadcast any operand dimension of size 1.

mod matrix;

use alloc::vec::Vec;

pub use matrix::Matrix;
use matrix::{gemm_nt, gemm_tn};

use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
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
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Sqrt(Var),
    Sum(Var),
    Mean(Var),
    SumRows(Var),
    SumCols(Var),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    Slice { x: Var, r0: usize, c0: usize },
    SelectRows(Var, Vec<usize>),
    Transpose(Var),
    Bce { logits: Var, targets: Vec<f64>, weights: Vec<f64> },
}

#[derive(Debug, Clone)]
struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

/// Operation record of one forward pass.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn broadcast_shape(op: &'static str, a: (usize, usize), b: (usize, usize)) -> Result<(usize, usize)> {
    let dim = |x: usize, y: usize| match (x, y) {
        _ if x == y => Some(x),
        (1, y) => Some(y),
        (x, 1) => Some(x),
        _ => None,
    };
    match (dim(a.0, b.0), dim(a.1, b.1)) {
        (Some(r), Some(c)) => Ok((r, c)),
        _ => Err(Error::Shape { op, lhs: a, rhs: b }),
    }
}

#[inline]
fn bidx(i: usize, n: usize) -> usize {
    if n == 1 {
        0
    } else {
        i
    }
}

fn broadcast_zip(a: &Matrix, b: &Matrix, shape: (usize, usize), f: impl Fn(f64, f64) -> f64) -> Matrix {
    if a.shape() == b.shape() {
        return a.zip_map(b, f);
    }
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    if (ar, ac) == shape && br == 1 && bc == ac {
        // row-vector bias, the common case
        let mut out = a.clone();
        for row in out.as_mut_slice().chunks_mut(ac) {
            for (x, y) in row.iter_mut().zip(b.as_slice()) {
                *x = f(*x, *y);
            }
        }
        return out;
    }
    Matrix::from_fn(shape.0, shape.1, |i, j| f(a[(bidx(i, ar), bidx(j, ac))], b[(bidx(i, br), bidx(j, bc))]))
}

/// Sums `g` down to `shape` along broadcast dimensions.
fn reduce_to(g: &Matrix, shape: (usize, usize)) -> Matrix {
    if g.shape() == shape {
        return g.clone();
    }
    let mut out = Matrix::zeros(shape.0, shape.1);
    for i in 0..g.rows() {
        for j in 0..g.cols() {
            out[(bidx(i, shape.0), bidx(j, shape.1))] += g[(i, j)];
        }
    }
    out
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + libm::log1p(libm::exp(-x.abs()))
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
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

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn unary(&mut self, x: Var, value: Matrix, op: Op) -> Var {
        let g = self.needs_grad(x);
        self.push(value, op, g)
    }

    /// Trainable leaf.
    pub fn param(&mut self, m: Matrix) -> Var {
        self.push(m, Op::Leaf, true)
    }

    /// Leaf that receives no gradient.
    pub fn constant(&mut self, m: Matrix) -> Var {
        self.push(m, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let g = self.needs_grad(a) || self.needs_grad(b);
        Ok(self.push(value, Op::MatMul(a, b), g))
    }

    fn binary(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let shape = broadcast_shape(name, self.shape(a), self.shape(b))?;
        let value = broadcast_zip(self.value(a), self.value(b), shape, f);
        let g = self.needs_grad(a) || self.needs_grad(b);
        Ok(self.push(value, op, g))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let v = self.value(x).map(|a| a * s);
        self.unary(x, v, Op::Scale(x, s))
    }

    pub fn add_scalar(&mut self, x: Var, s: f64) -> Var {
        let v = self.value(x).map(|a| a + s);
        self.unary(x, v, Op::AddScalar(x))
    }

    /// `1 - x`.
    pub fn one_minus(&mut self, x: Var) -> Var {
        let n = self.scale(x, -1.0);
        self.add_scalar(n, 1.0)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.value(x).map(sigmoid);
        self.unary(x, v, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let v = self.value(x).map(libm::tanh);
        self.unary(x, v, Op::Tanh(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let v = self.value(x).map(libm::exp);
        self.unary(x, v, Op::Exp(x))
    }

    pub fn log(&mut self, x: Var) -> Var {
        let v = self.value(x).map(libm::log);
        self.unary(x, v, Op::Log(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|a| a * a);
        self.unary(x, v, Op::Square(x))
    }

    /// Square root; its gradient at 0 is taken as 0.
    pub fn sqrt(&mut self, x: Var) -> Var {
        let v = self.value(x).map(libm::sqrt);
        self.unary(x, v, Op::Sqrt(x))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let v = Matrix::scalar(self.value(x).sum());
        self.unary(x, v, Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let m = self.value(x);
        let v = Matrix::scalar(m.sum() / m.len() as f64);
        self.unary(x, v, Op::Mean(x))
    }

    /// Column sums, `1 x cols`.
    pub fn sum_rows(&mut self, x: Var) -> Var {
        let m = self.value(x);
        let mut v = Matrix::zeros(1, m.cols());
        for i in 0..m.rows() {
            for (o, a) in v.as_mut_slice().iter_mut().zip(m.row(i)) {
                *o += a;
            }
        }
        self.unary(x, v, Op::SumRows(x))
    }

    /// Row sums, `rows x 1`.
    pub fn sum_cols(&mut self, x: Var) -> Var {
        let m = self.value(x);
        let v = Matrix::column((0..m.rows()).map(|i| m.row(i).iter().sum()).collect());
        self.unary(x, v, Op::SumCols(x))
    }

    /// Column means, `1 x cols`.
    pub fn mean_rows(&mut self, x: Var) -> Var {
        let n = self.shape(x).0 as f64;
        let s = self.sum_rows(x);
        self.scale(s, 1.0 / n)
    }

    /// Per-column variance across rows, `1 x cols`; divides by `n - 1` when `unbiased`.
    pub fn var_rows(&mut self, x: Var, unbiased: bool) -> Result<Var> {
        let n = self.shape(x).0;
        let mu = self.mean_rows(x);
        let c = self.sub(x, mu)?;
        let sq = self.square(c);
        let s = self.sum_rows(sq);
        let denom = if unbiased { n.saturating_sub(1).max(1) } else { n.max(1) };
        Ok(self.scale(s, 1.0 / denom as f64))
    }

    /// Unbiased covariance of the columns of `x`, `cols x cols`.
    pub fn covariance(&mut self, x: Var) -> Result<Var> {
        let n = self.shape(x).0;
        let mu = self.mean_rows(x);
        let c = self.sub(x, mu)?;
        let ct = self.transpose(c);
        let p = self.matmul(ct, c)?;
        Ok(self.scale(p, 1.0 / n.saturating_sub(1).max(1) as f64))
    }

    pub fn concat_rows(&mut self, xs: &[Var]) -> Result<Var> {
        let Some(&first) = xs.first() else {
            return Err(Error::Invalid("concat_rows of nothing".into()));
        };
        let cols = self.shape(first).1;
        let mut data = Vec::new();
        let mut rows = 0;
        for &x in xs {
            let m = self.value(x);
            if m.cols() != cols {
                return Err(Error::Shape { op: "concat_rows", lhs: self.shape(first), rhs: m.shape() });
            }
            data.extend_from_slice(m.as_slice());
            rows += m.rows();
        }
        let g = xs.iter().any(|&x| self.needs_grad(x));
        Ok(self.push(Matrix::from_vec(rows, cols, data)?, Op::ConcatRows(xs.to_vec()), g))
    }

    pub fn concat_cols(&mut self, xs: &[Var]) -> Result<Var> {
        let Some(&first) = xs.first() else {
            return Err(Error::Invalid("concat_cols of nothing".into()));
        };
        let rows = self.shape(first).0;
        for &x in xs {
            if self.shape(x).0 != rows {
                return Err(Error::Shape { op: "concat_cols", lhs: self.shape(first), rhs: self.shape(x) });
            }
        }
        let cols: usize = xs.iter().map(|&x| self.shape(x).1).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for &x in xs {
                data.extend_from_slice(self.value(x).row(i));
            }
        }
        let g = xs.iter().any(|&x| self.needs_grad(x));
        Ok(self.push(Matrix::from_vec(rows, cols, data)?, Op::ConcatCols(xs.to_vec()), g))
    }

    /// Block `[r0, r0 + rows) x [c0, c0 + cols)`.
    pub fn slice(&mut self, x: Var, r0: usize, rows: usize, c0: usize, cols: usize) -> Result<Var> {
        let m = self.value(x);
        if r0 + rows > m.rows() || c0 + cols > m.cols() {
            return Err(Error::Shape { op: "slice", lhs: m.shape(), rhs: (r0 + rows, c0 + cols) });
        }
        let v = if c0 == 0 && cols == m.cols() {
            Matrix::from_vec(rows, cols, m.as_slice()[r0 * cols..(r0 + rows) * cols].to_vec())?
        } else {
            Matrix::from_fn(rows, cols, |i, j| m[(r0 + i, c0 + j)])
        };
        Ok(self.unary(x, v, Op::Slice { x, r0, c0 }))
    }

    /// Gathers rows by index; repeated indices are allowed.
    pub fn select_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let m = self.value(x);
        if let Some(&bad) = idx.iter().find(|&&i| i >= m.rows()) {
            return Err(Error::Shape { op: "select_rows", lhs: m.shape(), rhs: (bad, 0) });
        }
        let mut data = Vec::with_capacity(idx.len() * m.cols());
        for &i in idx {
            data.extend_from_slice(m.row(i));
        }
        let v = Matrix::from_vec(idx.len(), m.cols(), data)?;
        Ok(self.unary(x, v, Op::SelectRows(x, idx.to_vec())))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let v = self.value(x).transpose();
        self.unary(x, v, Op::Transpose(x))
    }

    /// `sum_i w_i * BCE(sigmoid(z_i), y_i)` for an `n x 1` logit column.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64], weights: &[f64]) -> Result<Var> {
        let z = self.value(logits);
        if z.cols() != 1 || z.rows() != targets.len() || weights.len() != targets.len() {
            return Err(Error::Shape { op: "bce_with_logits", lhs: z.shape(), rhs: (targets.len(), weights.len()) });
        }
        let v: f64 = z
            .as_slice()
            .iter()
            .zip(targets)
            .zip(weights)
            .map(|((&z, &y), &w)| w * (softplus(z) - z * y))
            .sum();
        let op = Op::Bce { logits, targets: targets.to_vec(), weights: weights.to_vec() };
        Ok(self.unary(logits, Matrix::scalar(v), op))
    }

    /// Exact gradients of the scalar `loss` with respect to every trainable leaf.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(Error::NonScalarLoss(shape));
        }
        let mut grads: Vec<Option<Matrix>> = alloc::vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }
        let grads = self
            .nodes
            .iter()
            .zip(grads)
            .map(|(n, g)| match (&n.op, n.needs_grad) {
                (Op::Leaf, true) => Some(g.unwrap_or_else(|| Matrix::zeros(n.value.rows(), n.value.cols()))),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let nodes = &self.nodes;
        let mut acc = |v: Var, d: Matrix| {
            if !nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(x) => x.add_assign(&d),
                slot => *slot = Some(d),
            }
        };
        let val = |v: Var| &nodes[v.0].value;
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if nodes[a.0].needs_grad {
                    let mut ga = Matrix::zeros(val(*a).rows(), val(*a).cols());
                    gemm_nt(g, val(*b), &mut ga);
                    acc(*a, ga);
                }
                if nodes[b.0].needs_grad {
                    let mut gb = Matrix::zeros(val(*b).rows(), val(*b).cols());
                    gemm_tn(val(*a), g, &mut gb);
                    acc(*b, gb);
                }
            }
            Op::Add(a, b) => {
                acc(*a, reduce_to(g, val(*a).shape()));
                acc(*b, reduce_to(g, val(*b).shape()));
            }
            Op::Sub(a, b) => {
                acc(*a, reduce_to(g, val(*a).shape()));
                let mut gb = reduce_to(g, val(*b).shape());
                gb.scale_assign(-1.0);
                acc(*b, gb);
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                if nodes[a.0].needs_grad {
                    acc(*a, reduce_to(&broadcast_zip(g, vb, g.shape(), |x, y| x * y), va.shape()));
                }
                if nodes[b.0].needs_grad {
                    acc(*b, reduce_to(&broadcast_zip(g, va, g.shape(), |x, y| x * y), vb.shape()));
                }
            }
            Op::Scale(x, s) => acc(*x, g.map(|a| a * s)),
            Op::AddScalar(x) => acc(*x, g.clone()),
            Op::Sigmoid(x) => acc(*x, g.zip_map(y, |g, y| g * y * (1.0 - y))),
            Op::Tanh(x) => acc(*x, g.zip_map(y, |g, y| g * (1.0 - y * y))),
            Op::Exp(x) => acc(*x, g.zip_map(y, |g, y| g * y)),
            Op::Log(x) => acc(*x, g.zip_map(val(*x), |g, x| g / x)),
            Op::Square(x) => acc(*x, g.zip_map(val(*x), |g, x| 2.0 * g * x)),
            Op::Sqrt(x) => acc(*x, g.zip_map(y, |g, y| if y > 0.0 { g / (2.0 * y) } else { 0.0 })),
            Op::Sum(x) => {
                let (r, c) = val(*x).shape();
                acc(*x, Matrix::filled(r, c, g.item()));
            }
            Op::Mean(x) => {
                let (r, c) = val(*x).shape();
                acc(*x, Matrix::filled(r, c, g.item() / (r * c) as f64));
            }
            Op::SumRows(x) | Op::SumCols(x) => {
                let (r, c) = val(*x).shape();
                acc(*x, Matrix::from_fn(r, c, |i, j| g[(bidx(i, g.rows()), bidx(j, g.cols()))]));
            }
            Op::ConcatRows(xs) => {
                let mut r0 = 0;
                for &x in xs {
                    let (r, c) = val(x).shape();
                    if nodes[x.0].needs_grad {
                        let part = g.as_slice()[r0 * c..(r0 + r) * c].to_vec();
                        acc(x, Matrix::from_vec(r, c, part).expect("block shape"));
                    }
                    r0 += r;
                }
            }
            Op::ConcatCols(xs) => {
                let mut c0 = 0;
                for &x in xs {
                    let (r, c) = val(x).shape();
                    if nodes[x.0].needs_grad {
                        acc(x, Matrix::from_fn(r, c, |i, j| g[(i, c0 + j)]));
                    }
                    c0 += c;
                }
            }
            Op::Slice { x, r0, c0 } => {
                let (r, c) = val(*x).shape();
                let mut gx = Matrix::zeros(r, c);
                for i in 0..g.rows() {
                    for j in 0..g.cols() {
                        gx[(r0 + i, c0 + j)] = g[(i, j)];
                    }
                }
                acc(*x, gx);
            }
            Op::SelectRows(x, idx) => {
                let (r, c) = val(*x).shape();
                let mut gx = Matrix::zeros(r, c);
                for (k, &i) in idx.iter().enumerate() {
                    for j in 0..c {
                        gx[(i, j)] += g[(k, j)];
                    }
                }
                acc(*x, gx);
            }
            Op::Transpose(x) => acc(*x, g.transpose()),
            Op::Bce { logits, targets, weights } => {
                let s = g.item();
                let z = val(*logits);
                let d = z
                    .as_slice()
                    .iter()
                    .zip(targets)
                    .zip(weights)
                    .map(|((&z, &y), &w)| s * w * (sigmoid(z) - y))
                    .collect();
                acc(*logits, Matrix::column(d));
            }
        }
    }
}

/// Gradients of trainable leaves from one backward sweep.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient of a trainable leaf; zero if the loss does not depend on it.
    pub fn get(&self, v: Var) -> &Matrix {
        self.grads[v.0].as_ref().expect("gradients exist only for trainable leaves")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn sigmoid_value_and_slope() {
        let mut t = Tape::new();
        let x = t.param(Matrix::scalar(0.0));
        let y = t.sigmoid(x);
        assert_eq!(t.value(y).item(), 0.5);
        let g = t.backward(y).unwrap();
        assert!(close(g.get(x).item(), 0.25));
    }

    #[test]
    fn mean_distributes() {
        let mut t = Tape::new();
        let x = t.param(Matrix::row_vector(vec![1.0, 2.0, 3.0]));
        let m = t.mean(x);
        assert_eq!(t.value(m).item(), 2.0);
        let g = t.backward(m).unwrap();
        assert!(g.get(x).as_slice().iter().all(|&v| close(v, 1.0 / 3.0)));
    }

    #[test]
    fn matmul_shape_error_names_op() {
        let mut t = Tape::new();
        let a = t.param(Matrix::zeros(2, 3));
        let b = t.param(Matrix::zeros(4, 2));
        assert_eq!(t.matmul(a, b), Err(Error::Shape { op: "matmul", lhs: (2, 3), rhs: (4, 2) }));
    }

    #[test]
    fn sum_of_squares_and_unused() {
        let mut t = Tape::new();
        let w = t.param(Matrix::row_vector(vec![1.0, 2.0]));
        let unused = t.param(Matrix::zeros(2, 2));
        let ww = t.mul(w, w).unwrap();
        let l = t.sum(ww);
        let g = t.backward(l).unwrap();
        assert_eq!(g.get(w).as_slice(), &[2.0, 4.0]);
        assert_eq!(g.get(unused), &Matrix::zeros(2, 2));
        assert_eq!(t.backward(ww).unwrap_err(), Error::NonScalarLoss((1, 2)));
    }

    #[test]
    fn broadcasting_reduces_gradients() {
        let mut t = Tape::new();
        let x = t.param(Matrix::from_fn(3, 2, |i, j| (i + j) as f64));
        let b = t.param(Matrix::row_vector(vec![1.0, -1.0]));
        let s = t.param(Matrix::scalar(2.0));
        let y = t.add(x, b).unwrap();
        let y = t.mul(y, s).unwrap();
        let l = t.sum(y);
        let g = t.backward(l).unwrap();
        assert_eq!(g.get(b).as_slice(), &[6.0, 6.0]);
        assert_eq!(g.get(s).item(), t.value(x).sum() + 0.0);
        assert!(g.get(x).as_slice().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn select_rows_scatters() {
        let mut t = Tape::new();
        let x = t.param(Matrix::from_fn(3, 1, |i, _| i as f64));
        let y = t.select_rows(x, &[2, 0, 2]).unwrap();
        let l = t.sum(y);
        let g = t.backward(l).unwrap();
        assert_eq!(g.get(x).as_slice(), &[1.0, 0.0, 2.0]);
    }

    #[test]
    fn bce_matches_formula() {
        let mut t = Tape::new();
        let z = t.param(Matrix::column(vec![0.0, 2.0]));
        let l = t.bce_with_logits(z, &[1.0, 0.0], &[1.0, 0.5]).unwrap();
        let expect = libm::log(2.0) + 0.5 * libm::log(1.0 + libm::exp(2.0));
        assert!(close(t.value(l).item(), expect));
        let g = t.backward(l).unwrap();
        assert!(close(g.get(z)[(0, 0)], -0.5));
        assert!(close(g.get(z)[(1, 0)], 0.5 * sigmoid(2.0)));
    }
}
