//! Shared computation kernels used by the taped forward pass, the tape-free
//! evaluation engine, and the backward pass. Shapes are asserted; callers
//! validate against the public error surface first.

use crate::dtype::Dtype;
use crate::tensor::Tensor;

/// C = A_view(m x k) * B_view(k x n). A transposed view reads the same
/// buffer with swapped strides.
pub fn matmul<T: Dtype>(a: &Tensor<T>, a_trans: bool, b: &Tensor<T>, b_trans: bool) -> Tensor<T> {
    let (m, k1) = if a_trans { (a.cols(), a.rows()) } else { (a.rows(), a.cols()) };
    let (k2, n) = if b_trans { (b.cols(), b.rows()) } else { (b.rows(), b.cols()) };
    assert_eq!(k1, k2, "matmul inner dims {k1} vs {k2}");
    let mut c = Tensor::zeros(m, n);
    if m == 0 || n == 0 || k1 == 0 {
        return c;
    }
    let (rsa, csa) = if a_trans { (1isize, a.cols() as isize) } else { (a.cols() as isize, 1) };
    let (rsb, csb) = if b_trans { (1isize, b.cols() as isize) } else { (b.cols() as isize, 1) };
    unsafe {
        T::gemm_raw(
            m,
            k1,
            n,
            T::one(),
            a.data().as_ptr(),
            rsa,
            csa,
            b.data().as_ptr(),
            rsb,
            csb,
            T::zero(),
            c.data_mut().as_mut_ptr(),
            n as isize,
            1,
        );
    }
    c
}

pub fn zip<T: Dtype>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    assert_eq!(a.shape(), b.shape(), "elementwise shape mismatch");
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.rows(), a.cols(), data)
}

pub fn add<T: Dtype>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    zip(a, b, |x, y| x + y)
}

pub fn sub<T: Dtype>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    zip(a, b, |x, y| x - y)
}

pub fn mul<T: Dtype>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    zip(a, b, |x, y| x * y)
}

/// Adds the accumulation buffer in place (gradient accumulation).
pub fn add_into<T: Dtype>(dst: &mut Tensor<T>, src: &Tensor<T>) {
    assert_eq!(dst.shape(), src.shape(), "accumulate shape mismatch");
    for (d, &s) in dst.data_mut().iter_mut().zip(src.data()) {
        *d += s;
    }
}

/// x(m x n) + bias(1 x n) broadcast over rows.
pub fn add_bias<T: Dtype>(x: &Tensor<T>, bias: &Tensor<T>) -> Tensor<T> {
    assert_eq!(bias.rows(), 1, "bias must be a row vector");
    assert_eq!(x.cols(), bias.cols(), "bias width mismatch");
    let mut out = x.clone();
    let n = x.cols();
    for r in 0..x.rows() {
        let row = &mut out.data_mut()[r * n..(r + 1) * n];
        for (v, &b) in row.iter_mut().zip(bias.data()) {
            *v += b;
        }
    }
    out
}

/// Column sums as a 1 x n row vector (the add_bias adjoint).
pub fn col_sum<T: Dtype>(x: &Tensor<T>) -> Tensor<T> {
    let n = x.cols();
    let mut out = Tensor::zeros(1, n);
    for r in 0..x.rows() {
        for c in 0..n {
            let v = out.at(0, c) + x.at(r, c);
            out.set(0, c, v);
        }
    }
    out
}

pub fn scale<T: Dtype>(x: &Tensor<T>, s: T) -> Tensor<T> {
    x.map(|v| v * s)
}

/// Multiplies every row r by weights[r].
pub fn scale_rows<T: Dtype>(x: &Tensor<T>, weights: &[T]) -> Tensor<T> {
    assert_eq!(x.rows(), weights.len(), "row weight count mismatch");
    let mut out = x.clone();
    let n = x.cols();
    for (r, &w) in weights.iter().enumerate() {
        for v in &mut out.data_mut()[r * n..(r + 1) * n] {
            *v *= w;
        }
    }
    out
}

pub fn concat_cols<T: Dtype>(parts: &[&Tensor<T>]) -> Tensor<T> {
    assert!(!parts.is_empty());
    let rows = parts[0].rows();
    let total: usize = parts.iter().map(|p| p.cols()).sum();
    let mut out = Tensor::zeros(rows, total);
    for r in 0..rows {
        let mut offset = 0;
        for p in parts {
            assert_eq!(p.rows(), rows, "concat row mismatch");
            let src = p.row_slice(r);
            out.data_mut()[r * total + offset..r * total + offset + src.len()]
                .copy_from_slice(src);
            offset += src.len();
        }
    }
    out
}

pub fn slice_cols<T: Dtype>(x: &Tensor<T>, lo: usize, hi: usize) -> Tensor<T> {
    assert!(lo <= hi && hi <= x.cols(), "column slice out of range");
    let mut out = Tensor::zeros(x.rows(), hi - lo);
    for r in 0..x.rows() {
        let src = &x.row_slice(r)[lo..hi];
        let w = hi - lo;
        out.data_mut()[r * w..(r + 1) * w].copy_from_slice(src);
    }
    out
}

/// Adds `src` back into the column range of a zero buffer shaped like the
/// slice input (the slice adjoint).
pub fn unslice_cols<T: Dtype>(src: &Tensor<T>, lo: usize, full_cols: usize) -> Tensor<T> {
    let mut out = Tensor::zeros(src.rows(), full_cols);
    let w = src.cols();
    for r in 0..src.rows() {
        out.data_mut()[r * full_cols + lo..r * full_cols + lo + w]
            .copy_from_slice(src.row_slice(r));
    }
    out
}

/// out[i, :] = x[idx[i], :]
pub fn gather_rows<T: Dtype>(x: &Tensor<T>, idx: &[usize]) -> Tensor<T> {
    let n = x.cols();
    let mut out = Tensor::zeros(idx.len(), n);
    for (r, &i) in idx.iter().enumerate() {
        assert!(i < x.rows(), "gather index {i} out of {}", x.rows());
        out.data_mut()[r * n..(r + 1) * n].copy_from_slice(x.row_slice(i));
    }
    out
}

/// out[idx[i], :] += x[i, :] into a fresh (out_rows x cols) buffer.
pub fn scatter_add_rows<T: Dtype>(x: &Tensor<T>, idx: &[usize], out_rows: usize) -> Tensor<T> {
    assert_eq!(x.rows(), idx.len(), "scatter index count mismatch");
    let n = x.cols();
    let mut out = Tensor::zeros(out_rows, n);
    for (r, &i) in idx.iter().enumerate() {
        assert!(i < out_rows, "scatter index {i} out of {out_rows}");
        let src = x.row_slice(r);
        let dst = &mut out.data_mut()[i * n..(i + 1) * n];
        for (d, &s) in dst.iter_mut().zip(src) {
            *d += s;
        }
    }
    out
}

pub fn sum_all<T: Dtype>(x: &Tensor<T>) -> Tensor<T> {
    Tensor::scalar(x.data().iter().copied().sum())
}

pub fn sigmoid<T: Dtype>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

pub fn leaky_relu<T: Dtype>(v: T, slope: T) -> T {
    if v > T::zero() {
        v
    } else {
        v * slope
    }
}
