//! Sparse PCA by alternating minimisation.
//!
//! Factorises `x ≈ codes · dictionary` minimising
//! `½‖x − C·W‖²_F + α‖C‖₁` with every dictionary row constrained to unit norm.
//! Codes are solved row by row with cyclic coordinate descent (each coordinate
//! update is an exact soft-thresholded minimiser); dictionary rows are solved
//! one at a time in closed form under the unit-norm constraint. Both half-steps
//! are exact block minimisations, so the objective never increases.

use log::warn;

use super::{soft_threshold_scalar, svd, DenseMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct SparsePcaOptions {
    pub alpha: f64,
    pub max_iter: usize,
    pub tol: f64,
    /// Cap on coordinate-descent sweeps per code row.
    pub max_cd_sweeps: usize,
}

impl Default for SparsePcaOptions {
    fn default() -> Self {
        SparsePcaOptions {
            alpha: 1.0,
            max_iter: 200,
            tol: 1e-6,
            max_cd_sweeps: 500,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SparsePca {
    /// rows(x) × num_components
    pub codes: DenseMatrix,
    /// num_components × cols(x), unit-norm rows
    pub dictionary: DenseMatrix,
    /// Objective at initialisation followed by one entry per outer iteration.
    pub objective_history: Vec<f64>,
    pub converged: bool,
}

pub fn sparse_pca_objective(x: &DenseMatrix, codes: &DenseMatrix, dict: &DenseMatrix, alpha: f64) -> f64 {
    let recon = codes.matmul(dict).expect("shapes checked by caller");
    let fit = x.sub(&recon).expect("shapes checked by caller").frobenius_norm();
    let l1: f64 = codes.as_slice().iter().map(|c| c.abs()).sum();
    0.5 * fit * fit + alpha * l1
}

pub fn sparse_pca(x: &DenseMatrix, num_components: usize, opts: &SparsePcaOptions) -> Result<SparsePca> {
    let (m, d) = x.shape();
    if num_components == 0 || num_components > m.min(d) {
        return Err(Error::InvalidArgument(format!(
            "sparse_pca: num_components must be in 1..={} for a {m}x{d} input, got {num_components}",
            m.min(d)
        )));
    }
    if !(opts.alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!("sparse_pca: alpha must be >= 0, got {}", opts.alpha)));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("sparse_pca input".into()));
    }
    let k = num_components;

    if x.max_abs() == 0.0 {
        warn!("sparse_pca: all-zero input, returning zero codes");
        let dictionary = DenseMatrix::from_fn(k, d, |i, j| if i == j { 1.0 } else { 0.0 });
        return Ok(SparsePca {
            codes: DenseMatrix::zeros(m, k),
            dictionary,
            objective_history: vec![0.0],
            converged: true,
        });
    }

    // Start from the leading right singular vectors: the unpenalised optimum.
    let dec = svd::svd(x)?;
    let mut dict = DenseMatrix::from_fn(k, d, |i, j| dec.v[(j, i)]);
    let mut codes = x.matmul(&dict.transpose())?;

    let mut history = vec![sparse_pca_objective(x, &codes, &dict, opts.alpha)];
    let mut converged = false;
    for _ in 0..opts.max_iter {
        update_codes(x, &dict, &mut codes, opts);
        update_dictionary(x, &codes, &mut dict)?;
        let obj = sparse_pca_objective(x, &codes, &dict, opts.alpha);
        let prev = *history.last().unwrap();
        history.push(obj);
        if (prev - obj).abs() <= opts.tol * prev.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    if codes.max_abs() == 0.0 {
        warn!("sparse_pca: alpha={} zeroed every code", opts.alpha);
    }
    Ok(SparsePca {
        codes,
        dictionary: dict,
        objective_history: history,
        converged,
    })
}

fn update_codes(x: &DenseMatrix, dict: &DenseMatrix, codes: &mut DenseMatrix, opts: &SparsePcaOptions) {
    let k = dict.rows();
    let gram = dict.matmul(&dict.transpose()).expect("square gram");
    let proj = x.matmul(&dict.transpose()).expect("x·Wᵀ");
    for i in 0..codes.rows() {
        let b = proj.row(i);
        let c = codes.row_mut(i);
        for _ in 0..opts.max_cd_sweeps {
            let mut max_delta: f64 = 0.0;
            let mut max_c: f64 = 0.0;
            for j in 0..k {
                let gjj = gram[(j, j)];
                let mut r = b[j];
                for l in 0..k {
                    if l != j {
                        r -= gram[(j, l)] * c[l];
                    }
                }
                let new = if gjj > 0.0 {
                    soft_threshold_scalar(r, opts.alpha) / gjj
                } else {
                    0.0
                };
                max_delta = max_delta.max((new - c[j]).abs());
                max_c = max_c.max(new.abs());
                c[j] = new;
            }
            if max_delta <= 1e-13 * (1.0 + max_c) {
                break;
            }
        }
    }
}

fn update_dictionary(x: &DenseMatrix, codes: &DenseMatrix, dict: &mut DenseMatrix) -> Result<()> {
    let (m, d) = x.shape();
    let mut residual = x.sub(&codes.matmul(dict)?)?;
    for j in 0..dict.rows() {
        // residual += c_j w_j
        for i in 0..m {
            let cij = codes[(i, j)];
            if cij != 0.0 {
                let w = dict.row(j).to_vec();
                for (r, wv) in residual.row_mut(i).iter_mut().zip(&w) {
                    *r += cij * wv;
                }
            }
        }
        let mut u = vec![0.0; d];
        for i in 0..m {
            let cij = codes[(i, j)];
            if cij != 0.0 {
                for (uv, r) in u.iter_mut().zip(residual.row(i)) {
                    *uv += cij * r;
                }
            }
        }
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (w, uv) in dict.row_mut(j).iter_mut().zip(&u) {
                *w = uv / norm;
            }
        }
        for i in 0..m {
            let cij = codes[(i, j)];
            if cij != 0.0 {
                let w = dict.row(j).to_vec();
                for (r, wv) in residual.row_mut(i).iter_mut().zip(&w) {
                    *r -= cij * wv;
                }
            }
        }
    }
    Ok(())
}
