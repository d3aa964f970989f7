//! Thin SVD by one-sided Jacobi rotations, and the Moore–Penrose inverse built on it.
//!
//! One-sided Jacobi orthogonalises the columns of the working matrix in place; it is
//! slower than bidiagonalisation but has excellent relative accuracy and a fixed,
//! single-threaded operation order, so results are bitwise reproducible.

use super::DenseMatrix;
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 80;

/// `m = u · diag(singular_values) · vᵀ`, thin form: `u` is rows×r, `v` is cols×r with
/// r = min(rows, cols). Singular values are non-negative and descending; columns of `u`
/// and `v` are orthonormal (columns for zero singular values are completed to an
/// orthonormal basis).
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DenseMatrix,
    pub singular_values: Vec<f64>,
    pub v: DenseMatrix,
}

pub fn svd(m: &DenseMatrix) -> Result<Svd> {
    if !m.is_finite() {
        return Err(Error::NonFinite("svd input".into()));
    }
    if m.rows() >= m.cols() {
        jacobi_tall(m)
    } else {
        let t = jacobi_tall(&m.transpose())?;
        Ok(Svd {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rotate(a: &mut [f64], b: &mut [f64], c: f64, s: f64) {
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        let xp = *x;
        let yq = *y;
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Requires rows >= cols.
fn jacobi_tall(m: &DenseMatrix) -> Result<Svd> {
    let (rows, cols) = m.shape();
    // Column-major working copies.
    let mut work: Vec<Vec<f64>> = (0..cols)
        .map(|j| (0..rows).map(|i| m[(i, j)]).collect())
        .collect();
    let mut vcols: Vec<Vec<f64>> = (0..cols)
        .map(|j| {
            let mut e = vec![0.0; cols];
            e[j] = 1.0;
            e
        })
        .collect();

    let eps = f64::EPSILON;
    let mut converged = cols < 2;
    for _sweep in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let alpha = dot(&work[p], &work[p]);
                let beta = dot(&work[q], &work[q]);
                let gamma = dot(&work[p], &work[q]);
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                if gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (lo, hi) = work.split_at_mut(q);
                rotate(&mut lo[p], &mut hi[0], c, s);
                let (lo, hi) = vcols.split_at_mut(q);
                rotate(&mut lo[p], &mut hi[0], c, s);
            }
        }
        if !rotated {
            converged = true;
        }
    }
    if !converged {
        return Err(Error::Numerical(format!(
            "Jacobi SVD did not converge within {MAX_SWEEPS} sweeps on a {rows}x{cols} matrix"
        )));
    }

    let norms: Vec<f64> = work.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    // Stable sort keeps the original column order among equal values.
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));

    let sigma_max = order.first().map_or(0.0, |&j| norms[j]);
    let cutoff = sigma_max * eps * rows as f64;

    let mut u = DenseMatrix::zeros(rows, cols);
    let mut v = DenseMatrix::zeros(cols, cols);
    let mut singular_values = Vec::with_capacity(cols);
    let mut needs_completion = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        let sigma = norms[j];
        singular_values.push(sigma);
        for i in 0..cols {
            v[(i, k)] = vcols[j][i];
        }
        if sigma > cutoff && sigma > 0.0 {
            for i in 0..rows {
                u[(i, k)] = work[j][i] / sigma;
            }
        } else {
            needs_completion.push(k);
        }
    }
    complete_orthonormal_columns(&mut u, &needs_completion);

    Ok(Svd {
        u,
        singular_values,
        v,
    })
}

/// Fills the listed columns of `q` with unit vectors orthogonal to every other column,
/// by Gram–Schmidt against the standard basis.
fn complete_orthonormal_columns(q: &mut DenseMatrix, missing: &[usize]) {
    let (rows, cols) = q.shape();
    let mut filled: Vec<bool> = vec![true; cols];
    for &k in missing {
        filled[k] = false;
    }
    let mut basis_idx = 0;
    for &k in missing {
        while basis_idx < rows {
            let mut cand = vec![0.0; rows];
            cand[basis_idx] = 1.0;
            basis_idx += 1;
            // Two passes of modified Gram–Schmidt for stability.
            for _ in 0..2 {
                for j in (0..cols).filter(|&j| filled[j]) {
                    let proj: f64 = (0..rows).map(|i| q[(i, j)] * cand[i]).sum();
                    for (i, c) in cand.iter_mut().enumerate() {
                        *c -= proj * q[(i, j)];
                    }
                }
            }
            let norm = dot(&cand, &cand).sqrt();
            if norm > 0.5 {
                for (i, c) in cand.iter().enumerate() {
                    q[(i, k)] = c / norm;
                }
                filled[k] = true;
                break;
            }
        }
    }
}

/// Moore–Penrose inverse. Singular values at or below `rcond · σ_max` are treated as zero.
pub fn pseudo_inverse(m: &DenseMatrix, rcond: f64) -> Result<DenseMatrix> {
    if !(rcond >= 0.0) {
        return Err(Error::InvalidArgument(format!("rcond must be >= 0, got {rcond}")));
    }
    let Svd {
        u,
        singular_values,
        v,
    } = svd(m)?;
    let sigma_max = singular_values.first().copied().unwrap_or(0.0);
    let threshold = rcond * sigma_max;
    let (rows, cols) = m.shape();
    let mut out = DenseMatrix::zeros(cols, rows);
    for (k, &s) in singular_values.iter().enumerate() {
        if s <= threshold || s == 0.0 {
            continue;
        }
        let inv = 1.0 / s;
        for i in 0..cols {
            let vik = v[(i, k)] * inv;
            if vik == 0.0 {
                continue;
            }
            let out_row = out.row_mut(i);
            for (j, o) in out_row.iter_mut().enumerate() {
                *o += vik * u[(j, k)];
            }
        }
    }
    Ok(out)
}
