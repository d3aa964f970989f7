//! Dense linear algebra and optimisation primitives.

mod adam;
mod dense;
pub mod sparse_pca;
pub mod svd;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use dense::DenseMatrix;
pub use sparse_pca::{sparse_pca, SparsePca, SparsePcaOptions};
pub use svd::{pseudo_inverse, svd, Svd};

/// Default relative rank cutoff for [`pseudo_inverse`].
pub const DEFAULT_RCOND: f64 = 1e-10;

#[inline]
pub fn soft_threshold_scalar(x: f64, lambda: f64) -> f64 {
    if x > lambda {
        x - lambda
    } else if x < -lambda {
        x + lambda
    } else {
        0.0
    }
}

/// Elementwise `sign(x)·max(|x|−λ, 0)`.
pub fn soft_threshold(m: &DenseMatrix, lambda_thr: f64) -> DenseMatrix {
    debug_assert!(lambda_thr >= 0.0);
    m.map(|x| soft_threshold_scalar(x, lambda_thr))
}

/// Subgradient multiplier of [`soft_threshold`]: 1 where `|x| > λ`, else 0. The
/// boundary `|x| = λ` belongs to the zero branch.
pub fn soft_threshold_mask(m: &DenseMatrix, lambda_thr: f64) -> DenseMatrix {
    m.map(|x| if x.abs() > lambda_thr { 1.0 } else { 0.0 })
}

/// Glorot-uniform initialisation: entries uniform in ±√(6/(rows+cols)).
pub fn xavier_init(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DenseMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-bound..bound))
}
