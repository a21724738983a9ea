//! Linear solvers for the Newton step: dense LU with partial pivoting for
//! small systems, and a sparse Gaussian elimination with greedy min-degree
//! pivoting for large ones (power-flow Jacobians of radial and ring grids
//! stay very sparse under this ordering).

use std::collections::{BTreeMap, BTreeSet};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Singular;

/// Row-major sparse matrix used for Jacobians.
#[derive(Debug, Clone)]
pub struct SparseMatrix<T> {
    pub n: usize,
    /// per row: (column, value) sorted by column
    pub rows: Vec<Vec<(usize, T)>>,
}

impl<T: Scalar> SparseMatrix<T> {
    pub fn zero(n: usize) -> Self {
        SparseMatrix { n, rows: vec![Vec::new(); n] }
    }

    pub fn push(&mut self, i: usize, k: usize, v: T) {
        self.rows[i].push((k, v));
    }

    pub fn sort_rows(&mut self) {
        for row in &mut self.rows {
            row.sort_unstable_by_key(|e| e.0);
        }
    }

    pub fn to_dense(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.n * self.n];
        for (i, row) in self.rows.iter().enumerate() {
            for &(k, v) in row {
                out[i * self.n + k] += v;
            }
        }
        out
    }
}

/// In-place dense LU solve with partial pivoting. `a` is row-major n*n and
/// is destroyed; `b` is overwritten with the solution.
pub fn solve_dense<T: Scalar>(a: &mut [T], n: usize, b: &mut [T]) -> Result<(), Singular> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    for col in 0..n {
        let mut pivot = col;
        let mut best = a[col * n + col].abs();
        for row in col + 1..n {
            let v = a[row * n + col].abs();
            if v > best {
                best = v;
                pivot = row;
            }
        }
        if !(best > T::zero()) || !best.is_finite() {
            return Err(Singular);
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let d = a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] / d;
            if factor == T::zero() {
                continue;
            }
            for k in col + 1..n {
                let v = a[col * n + k];
                a[row * n + k] = a[row * n + k] - factor * v;
            }
            a[row * n + col] = T::zero();
            b[row] = b[row] - factor * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc = acc - a[col * n + k] * b[k];
        }
        b[col] = acc / a[col * n + col];
    }
    Ok(())
}

/// Sparse Gaussian elimination with greedy min-degree column selection and
/// threshold partial pivoting on rows. The right-hand side is eliminated
/// alongside the matrix, so no factors are stored.
pub fn solve_sparse<T: Scalar>(a: &SparseMatrix<T>, b: &[T]) -> Result<Vec<T>, Singular> {
    let n = a.n;
    debug_assert_eq!(b.len(), n);
    let mut rows: Vec<BTreeMap<usize, T>> = a
        .rows
        .iter()
        .map(|row| {
            let mut m = BTreeMap::new();
            for &(k, v) in row {
                *m.entry(k).or_insert(T::zero()) += v;
            }
            m
        })
        .collect();
    // rows holding a structural nonzero per column
    let mut col_rows: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for (i, row) in rows.iter().enumerate() {
        for (&k, _) in row {
            col_rows[k].insert(i);
        }
    }

    // prefer the diagonal unless an off-diagonal candidate is much larger
    let diag_threshold = T::from_f64(1e-3);
    let mut rhs = b.to_vec();
    let mut row_done = vec![false; n];
    let mut col_done = vec![false; n];
    // (pivot row, pivot column) in elimination order
    let mut order: Vec<(usize, usize)> = Vec::with_capacity(n);

    for _ in 0..n {
        // min-degree column among the active ones
        let mut pick: Option<(usize, usize)> = None; // (active count, column)
        for j in 0..n {
            if col_done[j] {
                continue;
            }
            let deg = col_rows[j].iter().filter(|&&i| !row_done[i]).count();
            if deg > 0 && pick.map_or(true, |(d, _)| deg < d) {
                pick = Some((deg, j));
                if deg == 1 {
                    break;
                }
            }
        }
        let (_, j) = pick.ok_or(Singular)?;

        // choose the pivot row: keep the diagonal when it is within a factor
        // of the column maximum, otherwise take the largest entry
        let mut best_row = usize::MAX;
        let mut best_mag = T::zero();
        let mut diag_mag = T::zero();
        for &i in &col_rows[j] {
            if row_done[i] {
                continue;
            }
            let mag = rows[i].get(&j).map_or_else(T::zero, |v| v.abs());
            if !mag.is_finite() {
                return Err(Singular);
            }
            if i == j {
                diag_mag = mag;
            }
            if mag > best_mag {
                best_mag = mag;
                best_row = i;
            }
        }
        if best_row == usize::MAX || best_mag == T::zero() {
            return Err(Singular);
        }
        let r = if diag_mag >= diag_threshold * best_mag && diag_mag > T::zero() { j } else { best_row };

        row_done[r] = true;
        col_done[j] = true;
        order.push((r, j));
        let d = rows[r][&j];
        let pivot_row: Vec<(usize, T)> =
            rows[r].iter().filter(|(&k, _)| !col_done[k]).map(|(&k, &v)| (k, v)).collect();
        let touched: Vec<usize> =
            col_rows[j].iter().copied().filter(|&i| !row_done[i]).collect();
        for i in touched {
            let aij = match rows[i].remove(&j) {
                Some(v) => v,
                None => continue,
            };
            let factor = aij / d;
            if factor == T::zero() {
                continue;
            }
            for &(k, v) in &pivot_row {
                let e = rows[i].entry(k).or_insert_with(|| {
                    col_rows[k].insert(i);
                    T::zero()
                });
                *e = *e - factor * v;
            }
            rhs[i] = rhs[i] - factor * rhs[r];
        }
    }

    let mut x = vec![T::zero(); n];
    for &(r, j) in order.iter().rev() {
        let mut acc = rhs[r];
        let mut diag = T::zero();
        for (&k, &v) in &rows[r] {
            if k == j {
                diag = v;
            } else {
                acc = acc - v * x[k];
            }
        }
        if diag == T::zero() || !diag.is_finite() {
            return Err(Singular);
        }
        x[j] = acc / diag;
    }
    Ok(x)
}
