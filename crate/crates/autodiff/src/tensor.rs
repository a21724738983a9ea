//! Dense 2-D tensors in row-major order. Vectors are 1 x n rows, scalars
//! are 1 x 1.

use crate::dtype::Dtype;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Dtype> Tensor<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length must equal rows*cols");
        Tensor { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn full(rows: usize, cols: usize, v: T) -> Self {
        Tensor { rows, cols, data: vec![v; rows * cols] }
    }

    pub fn scalar(v: T) -> Self {
        Tensor { rows: 1, cols: 1, data: vec![v] }
    }

    pub fn row_vector(data: Vec<T>) -> Self {
        Tensor { rows: 1, cols: data.len(), data }
    }

    pub fn column(data: Vec<T>) -> Self {
        Tensor { rows: data.len(), cols: 1, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            assert_eq!(row.len(), cols, "ragged rows");
            data.extend_from_slice(row);
        }
        Tensor { rows: rows.len(), cols, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = T::one();
        }
        t
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn at(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row_slice(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn scalar_value(&self) -> T {
        debug_assert!(self.is_scalar());
        self.data[0]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Tensor<T> {
        Tensor { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
