#![allow(dead_code)]

use metaembed::codebook::{CoarseState, FineState};
use metaembed::graphkit::{sym_normalize_abs, SparseMatrix};
use metaembed::numerics::DenseMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_like(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    // Sum of uniforms: cheap, symmetric, light-tailed.
    DenseMatrix::from_fn(rows, cols, |_, _| (0..4).map(|_| rng.gen_range(-1.0..1.0)).sum::<f64>() * 0.5)
}

/// Plain triple-loop product.
pub fn naive_matmul(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    assert_eq!(a.cols(), b.rows());
    DenseMatrix::from_fn(a.rows(), b.cols(), |i, j| (0..a.cols()).map(|k| a[(i, k)] * b[(k, j)]).sum())
}

pub fn max_abs_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn frob(a: &DenseMatrix) -> f64 {
    a.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Symmetric random graph with edge probability `p` and weights in [0.5, 1.5).
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> SparseMatrix {
    let mut t = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen::<f64>() < p {
                let w = rng.gen_range(0.5..1.5);
                t.push((i, j, w));
                t.push((j, i, w));
            }
        }
    }
    SparseMatrix::from_triplets(n, n, t).unwrap()
}

/// Bipartite user–item graph with unit weights.
pub fn random_bipartite(rng: &mut ChaCha8Rng, users: usize, items: usize, p: f64) -> SparseMatrix {
    let n = users + items;
    let mut t = Vec::new();
    for u in 0..users {
        for i in 0..items {
            if rng.gen::<f64>() < p {
                t.push((u, users + i, 1.0));
                t.push((users + i, u, 1.0));
            }
        }
    }
    SparseMatrix::from_triplets(n, n, t).unwrap()
}

/// Dense `(1/(L+1)) Σ_l Â^l H₀` with `Â` from an independent dense normalisation.
pub fn dense_propagation(adj: &SparseMatrix, h0: &DenseMatrix, layers: usize) -> DenseMatrix {
    let a = adj.to_dense();
    let n = a.rows();
    let deg: Vec<f64> = (0..n).map(|i| a.row(i).iter().map(|v| v.abs()).sum()).collect();
    let s: Vec<f64> = deg.iter().map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 1.0 }).collect();
    let norm = DenseMatrix::from_fn(n, n, |i, j| a[(i, j)] * s[i] * s[j]);
    let mut power = DenseMatrix::identity(n);
    let mut sum = DenseMatrix::zeros(n, n);
    for _ in 0..=layers {
        sum = sum.add(&power).unwrap();
        power = naive_matmul(&norm, &power);
    }
    naive_matmul(&sum, h0).scale(1.0 / (layers + 1) as f64)
}

/// Sanity check that the sparse normalisation helper and the dense one agree.
pub fn normalized_dense(adj: &SparseMatrix) -> DenseMatrix {
    sym_normalize_abs(adj).unwrap().to_dense()
}

/// Sparse matrix with exactly `k` random distinct columns per row and signed weights.
pub fn random_assignment(rng: &mut ChaCha8Rng, rows: usize, cols: usize, k: usize, signed: bool) -> SparseMatrix {
    let mut t = Vec::new();
    for r in 0..rows {
        let mut cols_left: Vec<usize> = (0..cols).collect();
        for _ in 0..k.min(cols) {
            let c = cols_left.swap_remove(rng.gen_range(0..cols_left.len()));
            let mag = rng.gen_range(0.2..1.0);
            let v = if signed && rng.gen::<f64>() < 0.3 { -mag } else { mag };
            t.push((r, c, v));
        }
    }
    SparseMatrix::from_triplets(rows, cols, t).unwrap()
}

pub struct SmallInstance {
    pub adj: SparseMatrix,
    pub coarse: CoarseState,
    pub fine: FineState,
    pub layers: usize,
}

/// Instance within N ≤ 10, m_c ≤ 4, m_r ≤ 3, d ≤ 8. Fine entries are kept at least
/// `margin` away from the threshold kinks.
pub fn small_instance(seed: u64, margin: f64) -> SmallInstance {
    let mut r = rng(seed);
    let users = r.gen_range(2..=5);
    let items = r.gen_range(2..=5);
    let n = users + items;
    let m_c = r.gen_range(2..=4);
    let m_r = r.gen_range(1..=3);
    let d = r.gen_range(2..=8);
    let adj = random_bipartite(&mut r, users, items, 0.5);
    let s_c = random_assignment(&mut r, n, m_c, 2, true);
    let e_c = gaussian_like(&mut r, m_c, d);
    let s_r = random_assignment(&mut r, m_c, m_r, 2, true);
    let lambda = r.gen_range(0.05..0.4);
    let mut e_r = gaussian_like(&mut r, m_r, d);
    for v in e_r.as_mut_slice() {
        if (v.abs() - lambda).abs() < margin {
            *v += margin * 4.0 * v.signum();
        }
    }
    let w_cr = r.gen_range(0.1..0.9);
    SmallInstance {
        adj,
        coarse: CoarseState::new(e_c, s_c).unwrap(),
        fine: FineState::new(e_r, s_r, w_cr, lambda).unwrap(),
        layers: r.gen_range(0..=3),
    }
}
