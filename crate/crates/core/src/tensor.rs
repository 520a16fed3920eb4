//! Dense row-major matrices and the decompositions the rest of the crate
//! leans on: one-sided Jacobi SVD, cyclic Jacobi symmetric eigensolver,
//! pairwise Euclidean distances and column centering.
//!
//! Everything here is deterministic: the same input always produces the
//! same bits, independent of thread count.

use std::fmt;

use crate::error::{Error, Result};

/// Sweep cap shared by both Jacobi solvers.
pub const MAX_SWEEPS: usize = 100;
/// Off-diagonal convergence threshold (relative).
pub const JACOBI_TOL: f64 = 1e-12;
/// Singular values below this fraction of the largest are treated as zero.
pub const RANK_TOL: f64 = 1e-12;

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data, rejecting bad lengths and
    /// non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite entry at ({}, {})",
                i / cols.max(1),
                i % cols.max(1)
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        let data = rows.iter().flatten().copied().collect();
        Matrix::from_vec(rows.len(), cols, data)
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Matrix::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::Shape(format!(
                "cannot subtract {:?} from {:?}",
                other.shape(),
                self.shape()
            )));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Keeps the first `k` columns.
    pub fn take_columns(&self, k: usize) -> Matrix {
        let k = k.min(self.cols);
        let mut out = Matrix::zeros(self.rows, k);
        for r in 0..self.rows {
            out.data[r * k..(r + 1) * k].copy_from_slice(&self.row(r)[..k]);
        }
        out
    }

    /// Keeps the rows listed in `idx`, in that order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Stacks `other` below `self`.
    pub fn vstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::Shape(format!(
                "cannot stack {} columns onto {}",
                other.cols, self.cols
            )));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Matrix {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        })
    }

    /// Places `other` to the right of `self`.
    pub fn hstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::Shape(format!(
                "cannot join {} rows with {}",
                other.rows, self.rows
            )));
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for r in 0..self.rows {
            data.extend_from_slice(self.row(r));
            data.extend_from_slice(other.row(r));
        }
        Ok(Matrix {
            rows: self.rows,
            cols,
            data,
        })
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (m, v) in means.iter_mut().zip(self.row(r)) {
                *m += v;
            }
        }
        let n = self.rows.max(1) as f64;
        means.iter_mut().for_each(|m| *m /= n);
        means
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::Shape(format!(
            "matmul {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for k in 0..a.cols {
            let aik = a.data[i * a.cols + k];
            if aik == 0.0 {
                continue;
            }
            let b_row = &b.data[k * b.cols..(k + 1) * b.cols];
            for (o, bv) in out_row.iter_mut().zip(b_row) {
                *o += aik * bv;
            }
        }
    }
    Ok(out)
}

/// `aᵀ·b` without materializing the transpose.
pub fn matmul_tn(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows != b.rows {
        return Err(Error::Shape(format!(
            "matmul_tn {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.cols, b.cols);
    for r in 0..a.rows {
        let a_row = a.row(r);
        let b_row = b.row(r);
        for (i, av) in a_row.iter().enumerate() {
            if *av == 0.0 {
                continue;
            }
            let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for (o, bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
    Ok(out)
}

/// Thin singular value decomposition `a = u · diag(s) · vt`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub vt: Matrix,
}

impl SvdResult {
    /// Number of singular values above `RANK_TOL · s_max`.
    pub fn rank(&self) -> usize {
        let max = self.s.first().copied().unwrap_or(0.0);
        if max == 0.0 {
            return 0;
        }
        self.s.iter().filter(|&&v| v > RANK_TOL * max).count()
    }

    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for r in 0..us.rows {
            for c in 0..us.cols {
                us[(r, c)] *= self.s[c];
            }
        }
        matmul(&us, &self.vt).expect("svd factors are conformant")
    }
}

/// One-sided (Hestenes) Jacobi SVD.
pub fn svd(a: &Matrix) -> Result<SvdResult> {
    if !a.is_finite() {
        return Err(Error::Numeric("svd input has non-finite entries".into()));
    }
    if a.rows < a.cols {
        let t = svd(&a.transpose())?;
        return Ok(SvdResult {
            u: t.vt.transpose(),
            s: t.s,
            vt: t.u.transpose(),
        });
    }
    let (m, n) = a.shape();
    // Work column-major: each column contiguous.
    let mut cols: Vec<Vec<f64>> = (0..n).map(|c| a.column(c)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|c| {
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            e
        })
        .collect();

    // Columns this small are rounding residue of a rank-deficient input;
    // rotating them against each other never settles.
    let frob2: f64 = cols.iter().flatten().map(|x| x * x).sum();
    let null2 = (n as f64 * f64::EPSILON).powi(2) * frob2;
    let mut converged = n < 2;
    for _sweep in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let (cp, cq) = (&cols[p], &cols[q]);
                    let mut alpha = 0.0;
                    let mut beta = 0.0;
                    let mut gamma = 0.0;
                    for i in 0..m {
                        alpha += cp[i] * cp[i];
                        beta += cq[i] * cq[i];
                        gamma += cp[i] * cq[i];
                    }
                    (alpha, beta, gamma)
                };
                if gamma == 0.0 || gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() || alpha.min(beta) <= null2 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut cols, p, q, c, s);
                rotate_pair(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
        }
    }
    if !converged {
        return Err(Error::Numeric(format!(
            "jacobi svd did not converge after {MAX_SWEEPS} sweeps"
        )));
    }

    let mut sing: Vec<(f64, usize)> = cols
        .iter()
        .enumerate()
        .map(|(i, c)| (c.iter().map(|x| x * x).sum::<f64>().sqrt(), i))
        .collect();
    // Stable sort keeps ties in column order, so output is deterministic.
    sing.sort_by(|x, y| y.0.total_cmp(&x.0));

    let s_max = sing.first().map_or(0.0, |x| x.0);
    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    let mut vt = Matrix::zeros(n, n);
    for (k, &(sv, idx)) in sing.iter().enumerate() {
        let zero = s_max == 0.0 || sv <= RANK_TOL * s_max;
        s.push(if zero && sv == 0.0 { 0.0 } else { sv });
        if zero {
            u_cols.push(Vec::new());
        } else {
            u_cols.push(cols[idx].iter().map(|x| x / sv).collect());
        }
        for j in 0..n {
            vt[(k, j)] = v[idx][j];
        }
    }
    complete_orthonormal(&mut u_cols, m);

    let mut u = Matrix::zeros(m, n);
    for (c, col) in u_cols.iter().enumerate() {
        for r in 0..m {
            u[(r, c)] = col[r];
        }
    }
    Ok(SvdResult { u, s, vt })
}

fn rotate_pair(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let cp = &mut left[p];
    let cq = &mut right[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = *x;
        let xq = *y;
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Replaces empty columns with unit vectors orthogonal to all others
/// (modified Gram-Schmidt against the standard basis).
fn complete_orthonormal(cols: &mut [Vec<f64>], m: usize) {
    let mut next_basis = 0;
    for k in 0..cols.len() {
        if !cols[k].is_empty() {
            continue;
        }
        loop {
            assert!(next_basis < m, "orthonormal completion ran out of basis vectors");
            let mut e = vec![0.0; m];
            e[next_basis] = 1.0;
            next_basis += 1;
            for _ in 0..2 {
                for other in cols.iter().filter(|c| !c.is_empty()) {
                    let dot: f64 = e.iter().zip(other).map(|(a, b)| a * b).sum();
                    for (x, o) in e.iter_mut().zip(other) {
                        *x -= dot * o;
                    }
                }
            }
            let norm = e.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 {
                e.iter_mut().for_each(|x| *x /= norm);
                cols[k] = e;
                break;
            }
        }
    }
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Eigenvalues come back in descending order; eigenvectors are the
/// matching columns of the returned matrix.
pub fn sym_eig(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let n = a.rows;
    if a.cols != n {
        return Err(Error::Contract(format!(
            "sym_eig needs a square matrix, got {}x{}",
            a.rows, a.cols
        )));
    }
    if !a.is_finite() {
        return Err(Error::Numeric("sym_eig input has non-finite entries".into()));
    }
    let sym_tol = 1e-10 * a.max_abs().max(1.0);
    for i in 0..n {
        for j in i + 1..n {
            if (a[(i, j)] - a[(j, i)]).abs() > sym_tol {
                return Err(Error::Contract(format!(
                    "sym_eig input is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let mut w = a.clone();
    let mut v = Matrix::identity(n);

    let mut converged = false;
    for _sweep in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| w[(i, j)] * w[(i, j)])
            .sum();
        let diag: f64 = (0..n).map(|i| w[(i, i)] * w[(i, i)]).sum();
        if off <= JACOBI_TOL * JACOBI_TOL * diag.max(f64::MIN_POSITIVE) || off == 0.0 {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = w[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = w[(p, p)];
                let aqq = w[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let wkp = w[(k, p)];
                    let wkq = w[(k, q)];
                    w[(k, p)] = c * wkp - s * wkq;
                    w[(k, q)] = s * wkp + c * wkq;
                }
                for k in 0..n {
                    let wpk = w[(p, k)];
                    let wqk = w[(q, k)];
                    w[(p, k)] = c * wpk - s * wqk;
                    w[(q, k)] = s * wpk + c * wqk;
                }
                w[(p, q)] = 0.0;
                w[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged && n > 1 {
        return Err(Error::Numeric(format!(
            "jacobi eigensolver did not converge after {MAX_SWEEPS} sweeps"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| w[(j, j)].total_cmp(&w[(i, i)]));
    let values = order.iter().map(|&i| w[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        for r in 0..n {
            vectors[(r, c)] = v[(r, i)];
        }
    }
    Ok((values, vectors))
}

/// Euclidean distance between two equal-length slices.
#[inline]
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Entry `(i, j)` is `‖x_i − y_j‖₂`.
pub fn pairwise_euclidean(x: &Matrix, y: &Matrix) -> Result<Matrix> {
    if x.cols != y.cols {
        return Err(Error::Shape(format!(
            "pairwise distances between {}-d and {}-d points",
            x.cols, y.cols
        )));
    }
    let mut out = Matrix::zeros(x.rows, y.rows);
    for i in 0..x.rows {
        let xi = x.row(i);
        for j in 0..y.rows {
            out[(i, j)] = euclidean(xi, y.row(j));
        }
    }
    Ok(out)
}

/// Subtracts each column's mean.
pub fn center_columns(a: &Matrix) -> Matrix {
    let means = a.column_means();
    let mut out = a.clone();
    for r in 0..out.rows {
        for (c, m) in means.iter().enumerate() {
            out[(r, c)] -= m;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = RngStream::derive(seed, "tensor-test");
        let data = (0..rows * cols).map(|_| rng.normal(0.0, 1.0)).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    fn orthonormality_error(q: &Matrix) -> f64 {
        let qtq = matmul_tn(q, q).unwrap();
        qtq.sub(&Matrix::identity(qtq.rows())).unwrap().max_abs()
    }

    #[test]
    fn matmul_cases() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(matmul(&Matrix::identity(2), &a).unwrap(), a);
        let b = Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let prod = matmul(&a, &b).unwrap();
        assert_eq!(prod.as_slice(), &[2.0, 4.0]);
        let z = matmul(&a, &Matrix::zeros(2, 3)).unwrap();
        assert_eq!(z, Matrix::zeros(2, 3));
        assert!(matches!(matmul(&a, &Matrix::zeros(3, 1)), Err(Error::Shape(_))));
    }

    #[test]
    fn from_vec_rejects_nan() {
        assert!(matches!(
            Matrix::from_vec(1, 2, vec![1.0, f64::NAN]),
            Err(Error::Numeric(_))
        ));
        assert!(matches!(Matrix::from_vec(2, 2, vec![1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn svd_diagonal_and_orthogonal() {
        let d = Matrix::diag(&[3.0, 2.0]);
        let r = svd(&d).unwrap();
        assert_eq!(r.s, vec![3.0, 2.0]);

        let q = svd(&random(4, 4, 3)).unwrap().u;
        let r = svd(&q).unwrap();
        for s in r.s {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn svd_reconstruction_5x3() {
        let a = random(5, 3, 11);
        let r = svd(&a).unwrap();
        let err = a.sub(&r.reconstruct()).unwrap().frobenius_norm() / a.frobenius_norm();
        assert!(err < 1e-8, "relative error {err}");
        assert!(r.s.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn svd_wide_and_rank_deficient() {
        let a = random(3, 7, 5);
        let r = svd(&a).unwrap();
        assert_eq!(r.u.shape(), (3, 3));
        assert_eq!(r.vt.shape(), (3, 7));
        let err = a.sub(&r.reconstruct()).unwrap().frobenius_norm() / a.frobenius_norm();
        assert!(err < 1e-8);

        // rank 1: outer product
        let mut m = Matrix::zeros(6, 4);
        for i in 0..6 {
            for j in 0..4 {
                m[(i, j)] = (i as f64 + 1.0) * (j as f64 - 1.5);
            }
        }
        let r = svd(&m).unwrap();
        assert_eq!(r.rank(), 1);
        assert!(orthonormality_error(&r.u) < 1e-8);
        assert!(orthonormality_error(&r.vt.transpose()) < 1e-8);

        let zero = svd(&Matrix::zeros(4, 3)).unwrap();
        assert_eq!(zero.s, vec![0.0; 3]);
        assert!(orthonormality_error(&zero.u) < 1e-12);
    }

    #[test]
    fn sym_eig_cases() {
        let (vals, _) = sym_eig(&Matrix::identity(3)).unwrap();
        assert_eq!(vals, vec![1.0, 1.0, 1.0]);
        let (vals, _) = sym_eig(&Matrix::diag(&[2.0, 5.0])).unwrap();
        assert_eq!(vals, vec![5.0, 2.0]);
        let asym = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(sym_eig(&asym), Err(Error::Contract(_))));
    }

    #[test]
    fn sym_eig_residual_random_4x4() {
        let b = random(4, 4, 9);
        let a = matmul_tn(&b, &b).unwrap();
        let (vals, vecs) = sym_eig(&a).unwrap();
        for (k, lambda) in vals.iter().enumerate() {
            let v = vecs.column(k);
            for i in 0..4 {
                let av: f64 = (0..4).map(|j| a[(i, j)] * v[j]).sum();
                assert!((av - lambda * v[i]).abs() < 1e-8);
            }
        }
        assert!(orthonormality_error(&vecs) < 1e-8);
        assert!((vals.iter().sum::<f64>() - a.trace()).abs() < 1e-8);
    }

    #[test]
    fn pairwise_cases() {
        let x = random(3, 2, 1);
        let d = pairwise_euclidean(&x, &x).unwrap();
        for i in 0..3 {
            assert_eq!(d[(i, i)], 0.0);
        }
        let a = Matrix::from_rows(&[vec![0.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![3.0]]).unwrap();
        assert_eq!(pairwise_euclidean(&a, &b).unwrap().as_slice(), &[3.0]);

        let y = random(2, 2, 2);
        let d = pairwise_euclidean(&x, &y).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                let dx = x[(i, 0)] - y[(j, 0)];
                let dy = x[(i, 1)] - y[(j, 1)];
                assert!((d[(i, j)] - (dx * dx + dy * dy).sqrt()).abs() < 1e-15);
            }
        }
        assert!(matches!(
            pairwise_euclidean(&x, &random(2, 3, 0)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn centering() {
        let a = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        assert_eq!(center_columns(&a).as_slice(), &[-1.0, 0.0, 1.0]);
        let c = center_columns(&a);
        assert_eq!(center_columns(&c), c);
        let single = Matrix::from_rows(&[vec![4.0, -2.0]]).unwrap();
        assert_eq!(center_columns(&single).as_slice(), &[0.0, 0.0]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(40))]

            #[test]
            fn svd_reconstructs_and_is_orthonormal(rows in 1usize..40, cols in 1usize..40, seed in any::<u64>()) {
                let a = random(rows, cols, seed);
                let r = svd(&a).unwrap();
                let err = a.sub(&r.reconstruct()).unwrap().frobenius_norm() / a.frobenius_norm();
                prop_assert!(err < 1e-8);
                prop_assert!(orthonormality_error(&r.u) < 1e-8);
                prop_assert!(orthonormality_error(&r.vt.transpose()) < 1e-8);
                prop_assert!(r.s.windows(2).all(|w| w[0] >= w[1]));
            }

            #[test]
            fn sym_eig_preserves_trace(n in 1usize..12, seed in any::<u64>()) {
                let b = random(n, n, seed);
                let a = matmul_tn(&b, &b).unwrap();
                let (vals, _) = sym_eig(&a).unwrap();
                prop_assert!((vals.iter().sum::<f64>() - a.trace()).abs() < 1e-8 * a.trace().max(1.0));
            }

            #[test]
            fn pairwise_is_transpose_symmetric(n in 1usize..10, m in 1usize..10, d in 1usize..5, seed in any::<u64>()) {
                let x = random(n, d, seed);
                let y = random(m, d, seed.wrapping_add(1));
                prop_assert_eq!(pairwise_euclidean(&x, &y).unwrap(), pairwise_euclidean(&y, &x).unwrap().transpose());
            }
        }
    }

    #[test]
    fn svd_64x64_reconstruction() {
        let a = random(64, 64, 77);
        let r = svd(&a).unwrap();
        let err = a.sub(&r.reconstruct()).unwrap().frobenius_norm() / a.frobenius_norm();
        assert!(err < 1e-8);
        assert!(orthonormality_error(&r.u) < 1e-8);
        let again = svd(&a).unwrap();
        assert_eq!(again.s, r.s);
    }
}
