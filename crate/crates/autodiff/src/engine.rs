//! One forward implementation, two execution modes.
//!
//! [`Engine`] is the op surface a model's forward pass is written against.
//! A [`Tape`] implements it by recording nodes for the backward pass; the
//! [`EvalEngine`] implements it by computing eagerly on reference-counted
//! tensors, which keeps inference memory proportional to the live working
//! set instead of the whole op history.

use std::rc::Rc;

use crate::dtype::Dtype;
use crate::kernels as k;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub trait Engine<T: Dtype> {
    type V: Clone;

    fn constant(&mut self, t: Tensor<T>) -> Self::V;
    /// A trainable leaf: gradients flow to it on a tape, identical to
    /// `constant` for eager evaluation.
    fn param(&mut self, t: Tensor<T>) -> Self::V;
    fn to_tensor(&self, v: &Self::V) -> Tensor<T>;

    fn matmul(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn add(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn sub(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn mul(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn add_bias(&mut self, x: &Self::V, bias: &Self::V) -> Self::V;
    fn scale(&mut self, x: &Self::V, s: T) -> Self::V;
    fn scale_rows(&mut self, x: &Self::V, weights: Rc<Vec<T>>) -> Self::V;
    fn concat_cols(&mut self, parts: &[Self::V]) -> Self::V;
    fn slice_cols(&mut self, x: &Self::V, lo: usize, hi: usize) -> Self::V;
    fn gather_rows(&mut self, x: &Self::V, idx: Rc<Vec<usize>>) -> Self::V;
    fn scatter_add_rows(&mut self, x: &Self::V, idx: Rc<Vec<usize>>, out_rows: usize) -> Self::V;
    fn sum_all(&mut self, x: &Self::V) -> Self::V;
    fn tanh(&mut self, x: &Self::V) -> Self::V;
    fn sigmoid(&mut self, x: &Self::V) -> Self::V;
    fn leaky_relu(&mut self, x: &Self::V, slope: T) -> Self::V;
    fn sin(&mut self, x: &Self::V) -> Self::V;
    fn cos(&mut self, x: &Self::V) -> Self::V;
    fn ln1p(&mut self, x: &Self::V) -> Self::V;
    fn square(&mut self, x: &Self::V) -> Self::V;
    fn neg(&mut self, x: &Self::V) -> Self::V;
}

impl<T: Dtype> Engine<T> for Tape<T> {
    type V = Var;

    fn constant(&mut self, t: Tensor<T>) -> Var {
        self.leaf(t, false)
    }

    fn param(&mut self, t: Tensor<T>) -> Var {
        self.leaf(t, true)
    }

    fn to_tensor(&self, v: &Var) -> Tensor<T> {
        self.value(*v).clone()
    }

    fn matmul(&mut self, a: &Var, b: &Var) -> Var {
        Tape::matmul(self, *a, *b).expect("matmul shapes")
    }

    fn add(&mut self, a: &Var, b: &Var) -> Var {
        Tape::add(self, *a, *b).expect("add shapes")
    }

    fn sub(&mut self, a: &Var, b: &Var) -> Var {
        Tape::sub(self, *a, *b).expect("sub shapes")
    }

    fn mul(&mut self, a: &Var, b: &Var) -> Var {
        Tape::mul(self, *a, *b).expect("mul shapes")
    }

    fn add_bias(&mut self, x: &Var, bias: &Var) -> Var {
        Tape::add_bias(self, *x, *bias).expect("add_bias shapes")
    }

    fn scale(&mut self, x: &Var, s: T) -> Var {
        Tape::scale(self, *x, s)
    }

    fn scale_rows(&mut self, x: &Var, weights: Rc<Vec<T>>) -> Var {
        Tape::scale_rows(self, *x, weights).expect("scale_rows shapes")
    }

    fn concat_cols(&mut self, parts: &[Var]) -> Var {
        Tape::concat_cols(self, parts).expect("concat shapes")
    }

    fn slice_cols(&mut self, x: &Var, lo: usize, hi: usize) -> Var {
        Tape::slice_cols(self, *x, lo, hi).expect("slice range")
    }

    fn gather_rows(&mut self, x: &Var, idx: Rc<Vec<usize>>) -> Var {
        Tape::gather_rows(self, *x, idx).expect("gather indices")
    }

    fn scatter_add_rows(&mut self, x: &Var, idx: Rc<Vec<usize>>, out_rows: usize) -> Var {
        Tape::scatter_add_rows(self, *x, idx, out_rows).expect("scatter indices")
    }

    fn sum_all(&mut self, x: &Var) -> Var {
        Tape::sum_all(self, *x)
    }

    fn tanh(&mut self, x: &Var) -> Var {
        Tape::tanh(self, *x)
    }

    fn sigmoid(&mut self, x: &Var) -> Var {
        Tape::sigmoid(self, *x)
    }

    fn leaky_relu(&mut self, x: &Var, slope: T) -> Var {
        Tape::leaky_relu(self, *x, slope)
    }

    fn sin(&mut self, x: &Var) -> Var {
        Tape::sin(self, *x)
    }

    fn cos(&mut self, x: &Var) -> Var {
        Tape::cos(self, *x)
    }

    fn ln1p(&mut self, x: &Var) -> Var {
        Tape::ln1p(self, *x)
    }

    fn square(&mut self, x: &Var) -> Var {
        Tape::square(self, *x)
    }

    fn neg(&mut self, x: &Var) -> Var {
        Tape::neg(self, *x)
    }
}

/// Tape-free eager evaluation for inference.
#[derive(Debug, Default, Clone, Copy)]
pub struct EvalEngine;

impl<T: Dtype> Engine<T> for EvalEngine {
    type V = Rc<Tensor<T>>;

    fn constant(&mut self, t: Tensor<T>) -> Self::V {
        Rc::new(t)
    }

    fn param(&mut self, t: Tensor<T>) -> Self::V {
        Rc::new(t)
    }

    fn to_tensor(&self, v: &Self::V) -> Tensor<T> {
        (**v).clone()
    }

    fn matmul(&mut self, a: &Self::V, b: &Self::V) -> Self::V {
        Rc::new(k::matmul(a, false, b, false))
    }

    fn add(&mut self, a: &Self::V, b: &Self::V) -> Self::V {
        Rc::new(k::add(a, b))
    }

    fn sub(&mut self, a: &Self::V, b: &Self::V) -> Self::V {
        Rc::new(k::sub(a, b))
    }

    fn mul(&mut self, a: &Self::V, b: &Self::V) -> Self::V {
        Rc::new(k::mul(a, b))
    }

    fn add_bias(&mut self, x: &Self::V, bias: &Self::V) -> Self::V {
        Rc::new(k::add_bias(x, bias))
    }

    fn scale(&mut self, x: &Self::V, s: T) -> Self::V {
        Rc::new(k::scale(x, s))
    }

    fn scale_rows(&mut self, x: &Self::V, weights: Rc<Vec<T>>) -> Self::V {
        Rc::new(k::scale_rows(x, &weights))
    }

    fn concat_cols(&mut self, parts: &[Self::V]) -> Self::V {
        let refs: Vec<&Tensor<T>> = parts.iter().map(|p| p.as_ref()).collect();
        Rc::new(k::concat_cols(&refs))
    }

    fn slice_cols(&mut self, x: &Self::V, lo: usize, hi: usize) -> Self::V {
        Rc::new(k::slice_cols(x, lo, hi))
    }

    fn gather_rows(&mut self, x: &Self::V, idx: Rc<Vec<usize>>) -> Self::V {
        Rc::new(k::gather_rows(x, &idx))
    }

    fn scatter_add_rows(&mut self, x: &Self::V, idx: Rc<Vec<usize>>, out_rows: usize) -> Self::V {
        Rc::new(k::scatter_add_rows(x, &idx, out_rows))
    }

    fn sum_all(&mut self, x: &Self::V) -> Self::V {
        Rc::new(k::sum_all(x))
    }

    fn tanh(&mut self, x: &Self::V) -> Self::V {
        Rc::new(x.map(|v| v.tanh()))
    }

    fn sigmoid(&mut self, x: &Self::V) -> Self::V {
        Rc::new(x.map(k::sigmoid))
    }

    fn leaky_relu(&mut self, x: &Self::V, slope: T) -> Self::V {
        Rc::new(x.map(|v| k::leaky_relu(v, slope)))
    }

    fn sin(&mut self, x: &Self::V) -> Self::V {
        Rc::new(x.map(|v| v.sin()))
    }

    fn cos(&mut self, x: &Self::V) -> Self::V {
        Rc::new(x.map(|v| v.cos()))
    }

    fn ln1p(&mut self, x: &Self::V) -> Self::V {
        Rc::new(x.map(|v| v.ln_1p()))
    }

    fn square(&mut self, x: &Self::V) -> Self::V {
        Rc::new(x.map(|v| v * v))
    }

    fn neg(&mut self, x: &Self::V) -> Self::V {
        Rc::new(x.map(|v| -v))
    }
}
