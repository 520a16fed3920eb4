use log::warn;

use crate::error::{Error, Result};
use crate::tensor::{center_columns, pairwise_euclidean, svd, sym_eig, Matrix, RANK_TOL};

#[derive(Debug, Clone)]
pub struct PcaResult {
    /// Rows = observations, cols = components.
    pub scores: Matrix,
    /// Rows = components, cols = input features.
    pub components: Matrix,
    /// Sample variance along each kept component, `s_i² / (n − 1)`.
    pub variances: Vec<f64>,
    /// Sum of all column sample variances of the input.
    pub total_variance: f64,
}

/// Principal components via SVD of the centered data. Each component is
/// signed so its largest-magnitude loading is positive.
pub fn pca(x: &Matrix, out_dim: usize) -> Result<PcaResult> {
    let (n, p) = x.shape();
    if n < 2 {
        return Err(Error::Contract(format!("PCA needs at least 2 rows, got {n}")));
    }
    if out_dim == 0 || out_dim > p {
        return Err(Error::Contract(format!("PCA out_dim {out_dim} not in 1..={p}")));
    }
    let xc = center_columns(x);
    let dec = svd(&xc)?;
    let s_max = dec.s.first().copied().unwrap_or(0.0);
    let available = dec.s.len();
    let mut scores = Matrix::zeros(n, out_dim);
    let mut components = Matrix::zeros(out_dim, p);
    let mut variances = vec![0.0; out_dim];
    let mut rank_short = false;
    for k in 0..out_dim {
        if k >= available || dec.s[k] <= RANK_TOL * s_max || s_max == 0.0 {
            rank_short = true;
            continue;
        }
        let v: Vec<f64> = (0..p).map(|j| dec.vt[(k, j)]).collect();
        let pivot = v
            .iter()
            .copied()
            .fold(0.0f64, |best, c| if c.abs() > best.abs() { c } else { best });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for j in 0..p {
            components[(k, j)] = sign * v[j];
        }
        for i in 0..n {
            scores[(i, k)] = sign * dec.u[(i, k)] * dec.s[k];
        }
        variances[k] = dec.s[k] * dec.s[k] / (n - 1) as f64;
    }
    if rank_short {
        warn!("PCA: data rank below {out_dim}; trailing coordinates set to 0");
    }
    let total_variance = dec.s.iter().map(|s| s * s).sum::<f64>() / (n - 1) as f64;
    Ok(PcaResult {
        scores,
        components,
        variances,
        total_variance,
    })
}

const EIG_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct MdsResult {
    pub coords: Matrix,
    /// All eigenvalues of the double-centered matrix, descending.
    pub eigenvalues: Vec<f64>,
    /// Share of absolute eigenvalue mass that is negative (0 for Euclidean
    /// input up to rounding).
    pub negative_mass: f64,
}

/// Classical (Torgerson) MDS of the rows of `x` under Euclidean distance.
pub fn mds(x: &Matrix, out_dim: usize) -> Result<MdsResult> {
    let n = x.rows();
    if n < 3 {
        return Err(Error::Contract(format!("MDS needs at least 3 rows, got {n}")));
    }
    if out_dim == 0 || out_dim > n {
        return Err(Error::Contract(format!("MDS out_dim {out_dim} not in 1..={n}")));
    }
    let d = pairwise_euclidean(x, x)?;
    let mut sq = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            sq[(i, j)] = d[(i, j)] * d[(i, j)];
        }
    }
    // B = −½ J D² J with J = I − 11ᵀ/n, expanded as row/column/grand means.
    let row_mean: Vec<f64> = (0..n).map(|i| sq.row(i).iter().sum::<f64>() / n as f64).collect();
    let grand = row_mean.iter().sum::<f64>() / n as f64;
    let mut b = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            b[(i, j)] = -0.5 * (sq[(i, j)] - row_mean[i] - row_mean[j] + grand);
        }
    }
    // Exact symmetry for the eigensolver.
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (b[(i, j)] + b[(j, i)]);
            b[(i, j)] = m;
            b[(j, i)] = m;
        }
    }
    let (vals, vecs) = sym_eig(&b)?;
    let abs_mass: f64 = vals.iter().map(|v| v.abs()).sum();
    let neg_mass: f64 = vals.iter().filter(|v| **v < 0.0).map(|v| -v).sum();
    let negative_mass = if abs_mass > 0.0 { neg_mass / abs_mass } else { 0.0 };
    if abs_mass == 0.0 {
        warn!("MDS: all points identical; embedding is all zeros");
    } else if negative_mass > 1e-8 {
        warn!("MDS: {negative_mass:.3e} of eigenvalue mass is negative and clipped");
    }
    let mut coords = Matrix::zeros(n, out_dim);
    for k in 0..out_dim {
        // Eigenvalues at rounding level of the largest are zero directions.
        let lambda = if vals[k] > EIG_TOL * vals[0] { vals[k] } else { 0.0 };
        let root = lambda.sqrt();
        let col: Vec<f64> = (0..n).map(|i| vecs[(i, k)]).collect();
        let pivot = col
            .iter()
            .copied()
            .fold(0.0f64, |best, c| if c.abs() > best.abs() { c } else { best });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            coords[(i, k)] = sign * col[i] * root;
        }
    }
    Ok(MdsResult {
        coords,
        eigenvalues: vals,
        negative_mass,
    })
}
