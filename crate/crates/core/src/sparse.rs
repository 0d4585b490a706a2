//! Compressed sparse row matrices and the two SPD solvers used by the FEM
//! layer: an envelope (profile) Cholesky factorization and Jacobi-preconditioned
//! conjugate gradients.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets. Duplicates are summed
    /// in the order given, so the result is deterministic for a fixed input order.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, _, _) in triplets {
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        // Bucket by row, stable in input order.
        let mut next = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            let slot = next[r];
            cols[slot] = c;
            vals[slot] = v;
            next[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for r in 0..nrows {
            scratch.clear();
            scratch.extend((counts[r]..counts[r + 1]).map(|k| (cols[k], vals[k])));
            scratch.sort_by_key(|&(c, _)| c);
            let mut k = 0;
            while k < scratch.len() {
                let c = scratch[k].0;
                let mut sum = 0.0;
                while k < scratch.len() && scratch[k].0 == c {
                    sum += scratch[k].1;
                    k += 1;
                }
                col_idx.push(c);
                values.push(sum);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates `(col, value)` over the stored entries of `row`.
    pub fn row(&self, row: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        match self.col_idx[range.clone()].binary_search(&col) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`. Panics on dimension mismatch; see [`CsrMatrix::try_mul_vec`].
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *yi = acc;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn try_mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.ncols {
            return Err(invalid("vector length does not match matrix columns"));
        }
        Ok(self.mul_vec(x))
    }

    /// `Y = A X` for a block of `width` vectors stored dof-major: entry `j` of
    /// vector `b` lives at `x[j * width + b]`. The inner loop runs over the
    /// block, so it vectorizes.
    pub fn mul_block_into(&self, x: &[f64], width: usize, y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols * width);
        assert_eq!(y.len(), self.nrows * width);
        for (i, yi) in y.chunks_exact_mut(width).enumerate() {
            yi.fill(0.0);
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let a = self.values[k];
                let j = self.col_idx[k];
                for (o, v) in yi.iter_mut().zip(&x[j * width..(j + 1) * width]) {
                    *o += a * v;
                }
            }
        }
    }

    /// `x^T A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(self.nrows, self.ncols);
        let mut acc = 0.0;
        for (i, &xi) in x.iter().enumerate() {
            let mut row = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                row += self.values[k] * x[self.col_idx[k]];
            }
            acc += xi * row;
        }
        acc
    }

    /// Largest `|A_ij - A_ji|` over all stored entries.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                let d = (v - self.get(j, i)).abs();
                worst = worst.max(d);
            }
        }
        worst
    }

    /// Replaces each listed row and column by the corresponding identity row/column.
    pub fn constrain_identity(&mut self, constrained: &[bool]) {
        assert_eq!(constrained.len(), self.nrows);
        for i in 0..self.nrows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                if constrained[i] || constrained[j] {
                    self.values[k] = if i == j { 1.0 } else { 0.0 };
                }
            }
        }
    }
}

/// Envelope Cholesky factor `A = L L^T` of a symmetric positive definite matrix.
///
/// Row `i` of `L` is stored densely from its first structurally nonzero column
/// up to the diagonal. The lattice numbering keeps the envelope at `n + 1`
/// entries per row, so factorization costs `O(D n^2)`.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        if a.nrows != a.ncols {
            return Err(invalid("Cholesky needs a square matrix"));
        }
        let n = a.nrows;
        let mut first = Vec::with_capacity(n);
        let mut start = Vec::with_capacity(n + 1);
        start.push(0);
        for i in 0..n {
            let f = a
                .row(i)
                .filter(|&(j, v)| j <= i && v != 0.0)
                .map(|(j, _)| j)
                .min()
                .unwrap_or(i);
            first.push(f);
            let prev = start[i];
            start.push(prev + (i - f + 1));
        }
        let mut data = vec![0.0; start[n]];
        for i in 0..n {
            for (j, v) in a.row(i) {
                if j <= i && j >= first[i] {
                    data[start[i] + j - first[i]] = v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let row_i = &data[start[i] + k0 - fi..start[i] + j - fi];
                let row_j = &data[start[j] + k0 - fj..start[j] + j - fj];
                let dot: f64 = row_i.iter().zip(row_j).map(|(a, b)| a * b).sum();
                let s = data[start[i] + j - fi] - dot;
                if j < i {
                    let djj = data[start[j] + j - fj];
                    data[start[i] + j - fi] = s / djj;
                } else {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::NumericalFailure(alloc::format!(
                            "matrix not positive definite at pivot {i}"
                        )));
                    }
                    data[start[i] + i - fi] = libm::sqrt(s);
                }
            }
        }
        Ok(Self { first, start, data })
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(rhs.len(), n);
        let mut y = rhs.to_vec();
        // L y = b
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            let mut s = y[i];
            for k in fi..i {
                s -= row[k - fi] * y[k];
            }
            y[i] = s / row[i - fi];
        }
        // L^T x = y
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            let xi = y[i] / row[i - fi];
            y[i] = xi;
            for k in fi..i {
                y[k] -= row[k - fi] * xi;
            }
        }
        y
    }
}

/// Outcome of a conjugate-gradient solve.
#[derive(Debug, Clone)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned conjugate gradients for an SPD matrix, starting from zero.
pub fn conjugate_gradient(
    a: &CsrMatrix,
    b: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<CgSolution> {
    let n = a.nrows();
    if b.len() != n || a.ncols() != n {
        return Err(invalid("CG dimension mismatch"));
    }
    let b_norm = libm::sqrt(dot(b, b));
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(CgSolution {
            x,
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 0..max_iter {
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NumericalFailure(alloc::format!(
                "CG breakdown at iteration {it}"
            )));
        }
        let step = rz / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        let res = libm::sqrt(dot(&r, &r)) / b_norm;
        if res <= rel_tol {
            return Ok(CgSolution {
                x,
                iterations: it + 1,
                relative_residual: res,
            });
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NumericalFailure(alloc::format!(
        "CG did not reach relative residual {rel_tol:e} in {max_iter} iterations"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    #[test]
    fn triplets_sum_duplicates() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 0, 2.0), (0, 0, 3.0)]);
        assert_eq!(m.get(0, 0), 4.0);
        assert_eq!(m.get(1, 0), 2.0);
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn block_product_matches_columns() {
        let a = laplace_1d(6);
        let width = 3;
        let x: Vec<f64> = (0..6 * width).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut y = vec![0.0; 6 * width];
        a.mul_block_into(&x, width, &mut y);
        for b in 0..width {
            let col: Vec<f64> = (0..6).map(|j| x[j * width + b]).collect();
            let ref_y = a.mul_vec(&col);
            for j in 0..6 {
                assert!((y[j * width + b] - ref_y[j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn cholesky_and_cg_agree() {
        let a = laplace_1d(50);
        let b: Vec<f64> = (0..50).map(|i| (i as f64).sin() + 1.0).collect();
        let chol = EnvelopeCholesky::factor(&a).unwrap().solve(&b);
        let cg = conjugate_gradient(&a, &b, 1e-13, 500).unwrap();
        for (x, y) in chol.iter().zip(&cg.x) {
            assert!((x - y).abs() < 1e-9);
        }
        let r = a.mul_vec(&chol);
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)]);
        assert!(matches!(
            EnvelopeCholesky::factor(&a),
            Err(Error::NumericalFailure(_))
        ));
    }

    #[test]
    fn cg_reports_iteration_cap() {
        let a = laplace_1d(200);
        let b = vec![1.0; 200];
        assert!(conjugate_gradient(&a, &b, 1e-14, 3).is_err());
    }

    #[test]
    fn constrain_identity_keeps_symmetry() {
        let mut a = laplace_1d(5);
        a.constrain_identity(&[true, false, false, false, true]);
        assert_eq!(a.max_asymmetry(), 0.0);
        assert_eq!(a.get(0, 0), 1.0);
        assert_eq!(a.get(1, 0), 0.0);
        assert_eq!(a.get(2, 2), 2.0);
    }
}
