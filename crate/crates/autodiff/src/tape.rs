//! Operation tape for reverse-mode differentiation.
//!
//! Every op appends a node holding the forward value; when any input
//! requires gradients, the node records which operation produced it so the
//! backward pass can route adjoints. A tape is single-use: `backward`
//! consumes it for gradient purposes and a second call errors.

use std::rc::Rc;

use crate::dtype::Dtype;
use crate::error::AdError;
use crate::kernels as k;
use crate::tensor::Tensor;

/// Handle to a tensor on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Matmul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, T),
    ScaleRows(Var, Rc<Vec<T>>),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    GatherRows(Var, Rc<Vec<usize>>),
    ScatterAddRows(Var, Rc<Vec<usize>>),
    SumAll(Var),
    Tanh(Var),
    Sigmoid(Var),
    LeakyRelu(Var, T),
    Sin(Var),
    Cos(Var),
    Ln1p(Var),
    Square(Var),
    Abs(Var),
    Neg(Var),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    grad: Option<Tensor<T>>,
    requires_grad: bool,
    op: Op<T>,
}

#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    consumed: bool,
}

impl<T: Dtype> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), consumed: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Gradient of a variable after `backward`; lazily allocated, so absent
    /// for variables the loss does not depend on.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        // nothing upstream needs gradients: store the value, forget the op
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node { value, grad: None, requires_grad, op });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn mismatch(op: &'static str, detail: String) -> AdError {
        AdError::ShapeMismatch { op, detail }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.rows() {
            return Err(Self::mismatch("matmul", format!("{:?} x {:?}", va.shape(), vb.shape())));
        }
        let out = k::matmul(va, false, vb, false);
        Ok(self.push(out, Op::Matmul(a, b), self.needs(&[a, b])))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(&Tensor<T>, &Tensor<T>) -> Tensor<T>,
        op: Op<T>,
    ) -> Result<Var, AdError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Self::mismatch(name, format!("{:?} vs {:?}", va.shape(), vb.shape())));
        }
        let out = f(va, vb);
        Ok(self.push(out, op, self.needs(&[a, b])))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.binary("add", a, b, k::add, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.binary("sub", a, b, k::sub, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.binary("mul", a, b, k::mul, Op::Mul(a, b))
    }

    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var, AdError> {
        let (vx, vb) = (self.value(x), self.value(bias));
        if vb.rows() != 1 || vx.cols() != vb.cols() {
            return Err(Self::mismatch("add_bias", format!("{:?} + {:?}", vx.shape(), vb.shape())));
        }
        let out = k::add_bias(vx, vb);
        Ok(self.push(out, Op::AddBias(x, bias), self.needs(&[x, bias])))
    }

    pub fn scale(&mut self, x: Var, s: T) -> Var {
        let out = k::scale(self.value(x), s);
        self.push(out, Op::Scale(x, s), self.needs(&[x]))
    }

    pub fn scale_rows(&mut self, x: Var, weights: Rc<Vec<T>>) -> Result<Var, AdError> {
        if self.value(x).rows() != weights.len() {
            return Err(Self::mismatch(
                "scale_rows",
                format!("{:?} with {} weights", self.value(x).shape(), weights.len()),
            ));
        }
        let out = k::scale_rows(self.value(x), &weights);
        Ok(self.push(out, Op::ScaleRows(x, weights), self.needs(&[x])))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, AdError> {
        if parts.is_empty() {
            return Err(Self::mismatch("concat_cols", "empty part list".into()));
        }
        let rows = self.value(parts[0]).rows();
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return Err(Self::mismatch("concat_cols", "row counts differ".into()));
        }
        let tensors: Vec<&Tensor<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let out = k::concat_cols(&tensors);
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), self.needs(parts)))
    }

    pub fn slice_cols(&mut self, x: Var, lo: usize, hi: usize) -> Result<Var, AdError> {
        let v = self.value(x);
        if lo > hi || hi > v.cols() {
            return Err(Self::mismatch("slice_cols", format!("{lo}..{hi} of {:?}", v.shape())));
        }
        let out = k::slice_cols(v, lo, hi);
        Ok(self.push(out, Op::SliceCols(x, lo), self.needs(&[x])))
    }

    pub fn gather_rows(&mut self, x: Var, idx: Rc<Vec<usize>>) -> Result<Var, AdError> {
        let rows = self.value(x).rows();
        if idx.iter().any(|&i| i >= rows) {
            return Err(Self::mismatch("gather_rows", format!("index out of {rows} rows")));
        }
        let out = k::gather_rows(self.value(x), &idx);
        Ok(self.push(out, Op::GatherRows(x, idx), self.needs(&[x])))
    }

    pub fn scatter_add_rows(
        &mut self,
        x: Var,
        idx: Rc<Vec<usize>>,
        out_rows: usize,
    ) -> Result<Var, AdError> {
        let v = self.value(x);
        if v.rows() != idx.len() || idx.iter().any(|&i| i >= out_rows) {
            return Err(Self::mismatch(
                "scatter_add_rows",
                format!("{} rows, {} indices, {out_rows} outputs", v.rows(), idx.len()),
            ));
        }
        let out = k::scatter_add_rows(v, &idx, out_rows);
        Ok(self.push(out, Op::ScatterAddRows(x, idx), self.needs(&[x])))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let out = k::sum_all(self.value(x));
        self.push(out, Op::SumAll(x), self.needs(&[x]))
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let len = self.value(x).len().max(1);
        let s = self.sum_all(x);
        self.scale(s, T::one() / T::from_usize(len))
    }

    fn unary(&mut self, x: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let out = self.value(x).map(f);
        self.push(out, op, self.needs(&[x]))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.tanh(), Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, k::sigmoid, Op::Sigmoid(x))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: T) -> Var {
        self.unary(x, |v| k::leaky_relu(v, slope), Op::LeakyRelu(x, slope))
    }

    pub fn sin(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.sin(), Op::Sin(x))
    }

    pub fn cos(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.cos(), Op::Cos(x))
    }

    pub fn ln1p(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.ln_1p(), Op::Ln1p(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, |v| v * v, Op::Square(x))
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.abs(), Op::Abs(x))
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.unary(x, |v| -v, Op::Neg(x))
    }

    /// Reverse pass from a scalar loss: fills `grad` for every reachable
    /// variable that requires gradients. Consumes the tape's one backward.
    pub fn backward(&mut self, loss: Var) -> Result<(), AdError> {
        if self.consumed {
            return Err(AdError::TapeReused);
        }
        let shape = self.value(loss).shape();
        if shape != [1, 1] {
            return Err(AdError::NonScalarLoss { rows: shape[0], cols: shape[1] });
        }
        self.consumed = true;
        self.nodes[loss.0].grad = Some(Tensor::scalar(T::one()));

        for i in (0..=loss.0).rev() {
            if self.nodes[i].grad.is_none() || matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let g = self.nodes[i].grad.take().expect("checked above");
            let deltas = self.adjoints(i, &g);
            self.nodes[i].grad = Some(g);
            for (v, delta) in deltas {
                if !self.nodes[v.0].requires_grad {
                    continue;
                }
                match &mut self.nodes[v.0].grad {
                    Some(acc) => k::add_into(acc, &delta),
                    slot @ None => *slot = Some(delta),
                }
            }
        }
        Ok(())
    }

    /// Adjoint contributions of node `i` with output gradient `g`.
    fn adjoints(&self, i: usize, g: &Tensor<T>) -> Vec<(Var, Tensor<T>)> {
        let value = |v: Var| &self.nodes[v.0].value;
        let out = &self.nodes[i].value;
        match &self.nodes[i].op {
            Op::Leaf => Vec::new(),
            Op::Matmul(a, b) => vec![
                (*a, k::matmul(g, false, value(*b), true)),
                (*b, k::matmul(value(*a), true, g, false)),
            ],
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, k::scale(g, -T::one()))],
            Op::Mul(a, b) => {
                vec![(*a, k::mul(g, value(*b))), (*b, k::mul(g, value(*a)))]
            }
            Op::AddBias(x, bias) => vec![(*x, g.clone()), (*bias, k::col_sum(g))],
            Op::Scale(x, s) => vec![(*x, k::scale(g, *s))],
            Op::ScaleRows(x, w) => vec![(*x, k::scale_rows(g, w))],
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                let mut deltas = Vec::with_capacity(parts.len());
                for &p in parts {
                    let w = value(p).cols();
                    deltas.push((p, k::slice_cols(g, offset, offset + w)));
                    offset += w;
                }
                deltas
            }
            Op::SliceCols(x, lo) => {
                vec![(*x, k::unslice_cols(g, *lo, value(*x).cols()))]
            }
            Op::GatherRows(x, idx) => {
                vec![(*x, k::scatter_add_rows(g, idx, value(*x).rows()))]
            }
            Op::ScatterAddRows(x, idx) => vec![(*x, k::gather_rows(g, idx))],
            Op::SumAll(x) => {
                let v = value(*x);
                vec![(*x, Tensor::full(v.rows(), v.cols(), g.scalar_value()))]
            }
            Op::Tanh(x) => {
                let d = k::zip(g, out, |gv, y| gv * (T::one() - y * y));
                vec![(*x, d)]
            }
            Op::Sigmoid(x) => {
                let d = k::zip(g, out, |gv, y| gv * y * (T::one() - y));
                vec![(*x, d)]
            }
            Op::LeakyRelu(x, slope) => {
                let d = k::zip(g, value(*x), |gv, v| {
                    if v > T::zero() {
                        gv
                    } else {
                        gv * *slope
                    }
                });
                vec![(*x, d)]
            }
            Op::Sin(x) => vec![(*x, k::zip(g, value(*x), |gv, v| gv * v.cos()))],
            Op::Cos(x) => vec![(*x, k::zip(g, value(*x), |gv, v| -gv * v.sin()))],
            Op::Ln1p(x) => {
                vec![(*x, k::zip(g, value(*x), |gv, v| gv / (T::one() + v)))]
            }
            Op::Square(x) => {
                let two = T::from_f64(2.0);
                vec![(*x, k::zip(g, value(*x), |gv, v| two * v * gv))]
            }
            Op::Abs(x) => {
                let d = k::zip(g, value(*x), |gv, v| {
                    if v > T::zero() {
                        gv
                    } else if v < T::zero() {
                        -gv
                    } else {
                        T::zero()
                    }
                });
                vec![(*x, d)]
            }
            Op::Neg(x) => vec![(*x, k::scale(g, -T::one()))],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]), false);
        let i = tape.leaf(Tensor::identity(2), false);
        let c = tape.matmul(a, i).unwrap();
        assert_eq!(tape.value(c).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn leaky_relu_negative_side() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::scalar(-1.0), false);
        let y = tape.leaky_relu(x, 0.01);
        assert_eq!(tape.value(y).scalar_value(), -0.01);
    }

    #[test]
    fn grad_of_sum_is_ones() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_rows(&[vec![1.0, 2.0, 3.0]]), true);
        let loss = tape.sum_all(x);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn grad_of_sin_at_zero_is_one() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::scalar(0.0), true);
        let y = tape.sin(x);
        let loss = tape.sum_all(y);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap().scalar_value(), 1.0);
    }

    #[test]
    fn scatter_then_gather_matches_dense_adjacency_multiply() {
        // 4-node graph; messages pushed along edges equal A * X computed
        // densely (oracle: hand-rolled dense multiply)
        let edges: Vec<(usize, usize)> = vec![(0, 1), (1, 0), (1, 2), (2, 1), (2, 3), (3, 2)];
        let x = Tensor::from_rows(&[
            vec![1.0, 0.5],
            vec![-2.0, 1.0],
            vec![0.25, 3.0],
            vec![4.0, -1.0],
        ]);
        let mut adj = [[0.0f64; 4]; 4];
        for &(s, d) in &edges {
            adj[d][s] += 1.0;
        }
        let mut expect = [[0.0f64; 4]; 2 + 2];
        for r in 0..4 {
            for c in 0..2 {
                for j in 0..4 {
                    expect[r][c] += adj[r][j] * x.at(j, c);
                }
            }
        }

        let mut tape = Tape::<f64>::new();
        let xs = tape.leaf(x, false);
        let src: Rc<Vec<usize>> = Rc::new(edges.iter().map(|e| e.0).collect());
        let dst: Rc<Vec<usize>> = Rc::new(edges.iter().map(|e| e.1).collect());
        let msgs = tape.gather_rows(xs, src).unwrap();
        let agg = tape.scatter_add_rows(msgs, dst, 4).unwrap();
        for r in 0..4 {
            for c in 0..2 {
                assert!((tape.value(agg).at(r, c) - expect[r][c]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn backward_twice_errors() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::scalar(2.0), true);
        let loss = tape.square(x);
        tape.backward(loss).unwrap();
        assert!(matches!(tape.backward(loss), Err(AdError::TapeReused)));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_rows(&[vec![1.0, 2.0]]), true);
        assert!(matches!(tape.backward(x), Err(AdError::NonScalarLoss { rows: 1, cols: 2 })));
    }

    #[test]
    fn shape_mismatch_reported() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::zeros(2, 3), false);
        let b = tape.leaf(Tensor::zeros(2, 2), false);
        assert!(matches!(tape.matmul(a, b), Err(AdError::ShapeMismatch { op: "matmul", .. })));
        assert!(matches!(tape.add(a, b), Err(AdError::ShapeMismatch { op: "add", .. })));
    }

    #[test]
    fn backward_is_linear() {
        // grad(2f + 3g) = 2 grad f + 3 grad g
        let x0 = Tensor::from_rows(&[vec![0.3, -0.7, 1.1]]);
        let grad_of = |wf: f64, wg: f64| -> Vec<f64> {
            let mut tape = Tape::<f64>::new();
            let x = tape.leaf(x0.clone(), true);
            let f = {
                let s = tape.sin(x);
                tape.sum_all(s)
            };
            let g = {
                let sq = tape.square(x);
                tape.sum_all(sq)
            };
            let fs = tape.scale(f, wf);
            let gs = tape.scale(g, wg);
            let loss = tape.add(fs, gs).unwrap();
            tape.backward(loss).unwrap();
            tape.grad(x).unwrap().data().to_vec()
        };
        let gf = grad_of(1.0, 0.0);
        let gg = grad_of(0.0, 1.0);
        let combined = grad_of(2.0, 3.0);
        for i in 0..3 {
            assert!((combined[i] - (2.0 * gf[i] + 3.0 * gg[i])).abs() < 1e-12);
        }
    }
}
