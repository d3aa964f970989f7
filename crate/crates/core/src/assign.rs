//! Gradient-free assignment learning.
//!
//! Coarse weights come from a least-squares fit of propagated entity embeddings onto
//! the propagated codebook, `S = H_full · H_meta†`. Fine weights are bridged through
//! the entities: both codebooks are fitted against the same `H_full` and the two
//! coefficient matrices are contracted over the entity axis.

use std::cmp::Ordering;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graphkit::{Partition, SparseMatrix, PARALLEL_ROWS};
use crate::numerics::{pseudo_inverse, DenseMatrix, DEFAULT_RCOND};

/// How rows are ranked when keeping their top entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TopKMode {
    /// Largest signed value first; negative weights lose to any positive one.
    #[default]
    Signed,
    /// Largest absolute value first.
    Magnitude,
}

impl FromStr for TopKMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "signed" => Ok(TopKMode::Signed),
            "magnitude" | "abs" => Ok(TopKMode::Magnitude),
            other => Err(Error::Config(format!("unknown top-k mode '{other}' (signed|magnitude)"))),
        }
    }
}

impl std::fmt::Display for TopKMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TopKMode::Signed => "signed",
            TopKMode::Magnitude => "magnitude",
        })
    }
}

fn rank_key(v: f64, mode: TopKMode) -> f64 {
    match mode {
        TopKMode::Signed => v,
        TopKMode::Magnitude => v.abs(),
    }
}

/// Keeps the `k` best nonzero `(col, value)` entries of one row, returned in ascending
/// column order. Ties go to the lower column.
fn top_k_entries(entries: &mut Vec<(usize, f64)>, k: usize, mode: TopKMode) {
    entries.retain(|&(_, v)| v != 0.0);
    if entries.len() > k {
        entries.sort_by(|a, b| {
            rank_key(b.1, mode)
                .partial_cmp(&rank_key(a.1, mode))
                .unwrap_or(Ordering::Equal)
                .then(a.0.cmp(&b.0))
        });
        entries.truncate(k);
    }
    entries.sort_by_key(|&(c, _)| c);
}

fn assemble(rows: usize, cols: usize, per_row: Vec<Vec<(usize, f64)>>) -> SparseMatrix {
    let mut offsets = Vec::with_capacity(rows + 1);
    offsets.push(0);
    let mut col_idx = Vec::new();
    let mut vals = Vec::new();
    for row in per_row {
        for (c, v) in row {
            col_idx.push(c);
            vals.push(v);
        }
        offsets.push(col_idx.len());
    }
    SparseMatrix::from_csr(rows, cols, offsets, col_idx, vals).expect("rows assembled in column order")
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("top-k requires k >= 1".into()));
    }
    Ok(())
}

/// Per-row top-`k` of a dense matrix; zeros are never stored.
pub fn sparsify_topk_dense(m: &DenseMatrix, k: usize, mode: TopKMode) -> Result<SparseMatrix> {
    check_k(k)?;
    let per_row = (0..m.rows())
        .map(|r| {
            let mut e: Vec<(usize, f64)> = m.row(r).iter().copied().enumerate().collect();
            top_k_entries(&mut e, k, mode);
            e
        })
        .collect();
    Ok(assemble(m.rows(), m.cols(), per_row))
}

/// Per-row top-`k` of a sparse matrix.
pub fn sparsify_topk(m: &SparseMatrix, k: usize, mode: TopKMode) -> Result<SparseMatrix> {
    check_k(k)?;
    let per_row = (0..m.rows())
        .map(|r| {
            let (cols, vals) = m.row(r);
            let mut e: Vec<(usize, f64)> = cols.iter().copied().zip(vals.iter().copied()).collect();
            top_k_entries(&mut e, k, mode);
            e
        })
        .collect();
    Ok(assemble(m.rows(), m.cols(), per_row))
}

fn check_width(op: &'static str, a: &DenseMatrix, b: &DenseMatrix) -> Result<()> {
    if a.cols() != b.cols() {
        return Err(Error::dims(op, a.cols(), b.cols()));
    }
    Ok(())
}

/// `top_k(H_full · H_meta†)`. Rows are computed and sparsified independently, so the
/// dense `N × m` product is never materialised.
pub fn update_coarse_assignment(h_full: &DenseMatrix, h_meta: &DenseMatrix, t_c: usize, mode: TopKMode) -> Result<SparseMatrix> {
    check_k(t_c)?;
    check_width("update_coarse_assignment", h_meta, h_full)?;
    let pinv = pseudo_inverse(h_meta, DEFAULT_RCOND)?;
    let m = h_meta.rows();
    let d = h_full.cols();
    let solve_row = |r: usize| {
        let h = h_full.row(r);
        let mut dense = vec![0.0; m];
        for (k, &hk) in h.iter().enumerate().take(d) {
            if hk == 0.0 {
                continue;
            }
            for (out, &p) in dense.iter_mut().zip(pinv.row(k)) {
                *out += hk * p;
            }
        }
        let mut e: Vec<(usize, f64)> = dense.into_iter().enumerate().collect();
        top_k_entries(&mut e, t_c, mode);
        e
    };
    let n = h_full.rows();
    let per_row: Vec<Vec<(usize, f64)>> = if n >= PARALLEL_ROWS {
        (0..n).into_par_iter().map(solve_row).collect()
    } else {
        (0..n).map(solve_row).collect()
    };
    Ok(assemble(n, m, per_row))
}

/// Dense `(H^r_full · Ĥ^c_meta†)ᵀ (H^r_full · H^r_meta†)`, evaluated as
/// `P_cᵀ (H^r_fullᵀ H^r_full) P_r` so no `N × m` intermediate is formed.
pub fn bridged_product(h_full_r: &DenseMatrix, h_meta_c_hat: &DenseMatrix, h_meta_r: &DenseMatrix) -> Result<DenseMatrix> {
    check_width("update_bridged_assignment", h_meta_c_hat, h_full_r)?;
    check_width("update_bridged_assignment", h_meta_r, h_full_r)?;
    let p_c = pseudo_inverse(h_meta_c_hat, DEFAULT_RCOND)?;
    let p_r = pseudo_inverse(h_meta_r, DEFAULT_RCOND)?;
    let gram = h_full_r.t_matmul(h_full_r)?;
    p_c.t_matmul(&gram.matmul(&p_r)?)
}

/// Bridged coarse-to-fine update followed by per-row top-`t_r`.
pub fn update_bridged_assignment(
    h_full_r: &DenseMatrix,
    h_meta_c_hat: &DenseMatrix,
    h_meta_r: &DenseMatrix,
    t_r: usize,
    mode: TopKMode,
) -> Result<SparseMatrix> {
    check_k(t_r)?;
    sparsify_topk_dense(&bridged_product(h_full_r, h_meta_c_hat, h_meta_r)?, t_r, mode)
}

fn check_w_star(w_star: f64) -> Result<()> {
    if !(w_star > 0.0 && w_star <= 1.0) {
        return Err(Error::InvalidArgument(format!("w_star must lie in (0, 1], got {w_star}")));
    }
    Ok(())
}

/// Weight given to every non-anchor column of a seeded row.
fn off_weight(w_star: f64, parts: usize) -> f64 {
    if parts > 1 {
        (1.0 - w_star) / (parts - 1) as f64
    } else {
        0.0
    }
}

/// Dense seeded row: `w_star` at the anchor, the remaining mass spread evenly.
fn seeded_row(anchor: usize, parts: usize, w_star: f64) -> Vec<(usize, f64)> {
    let off = off_weight(w_star, parts);
    (0..parts).map(|c| (c, if c == anchor { w_star } else { off })).collect()
}

/// Entity-to-bucket seeding from a partition with `num_buckets` parts.
pub fn seed_coarse_assignment(partition: &Partition, num_buckets: usize, w_star: f64, t_c: usize) -> Result<SparseMatrix> {
    check_k(t_c)?;
    check_w_star(w_star)?;
    if partition.num_parts() != num_buckets {
        return Err(Error::Partition(format!(
            "partition has {} parts but {num_buckets} coarse buckets were requested",
            partition.num_parts()
        )));
    }
    let per_row = partition
        .assignment()
        .iter()
        .map(|&anchor| {
            let mut e = seeded_row(anchor, num_buckets, w_star);
            top_k_entries(&mut e, t_c, TopKMode::Signed);
            e
        })
        .collect();
    Ok(assemble(partition.num_nodes(), num_buckets, per_row))
}

/// `Ŝ^r = S^cᵀ S̃^r` where `S̃^r` is the dense seeded entity-to-fine matrix.
pub fn seed_fine_product(s_c: &SparseMatrix, partition_r: &Partition, w_star: f64) -> Result<DenseMatrix> {
    check_w_star(w_star)?;
    if partition_r.num_nodes() != s_c.rows() {
        return Err(Error::dims("seed_fine_assignment", s_c.rows(), partition_r.num_nodes()));
    }
    let m_r = partition_r.num_parts();
    let off = off_weight(w_star, m_r);
    let mut out = DenseMatrix::zeros(s_c.cols(), m_r);
    // Ŝ[c, f] = off·Σ_p S[p,c] + (w* − off)·Σ_{p anchored at f} S[p,c]
    for (p, &anchor) in partition_r.assignment().iter().enumerate() {
        let (cols, vals) = s_c.row(p);
        for (&c, &v) in cols.iter().zip(vals) {
            let row = out.row_mut(c);
            if off != 0.0 {
                for x in row.iter_mut() {
                    *x += v * off;
                }
            }
            row[anchor] += v * (w_star - off);
        }
    }
    Ok(out)
}

/// Coarse-to-fine seeding: entities act as the bridge between a coarse assignment and
/// a fine-level partition.
pub fn seed_fine_assignment(s_c: &SparseMatrix, partition_r: &Partition, w_star: f64, t_r: usize) -> Result<SparseMatrix> {
    check_k(t_r)?;
    sparsify_topk_dense(&seed_fine_product(s_c, partition_r, w_star)?, t_r, TopKMode::Signed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::xavier_init;

    #[test]
    fn topk_examples() {
        let m = DenseMatrix::from_rows(&[vec![0.9, 0.1, 0.5], vec![0.5, 0.5, 0.1], vec![-1.0, 0.0, 0.2]]);
        let s = sparsify_topk_dense(&m, 2, TopKMode::Signed).unwrap().to_dense();
        assert_eq!(s.row(0), &[0.9, 0.0, 0.5]);
        assert_eq!(s.row(2), &[-1.0, 0.0, 0.2]);
        let s = sparsify_topk_dense(&m, 1, TopKMode::Signed).unwrap().to_dense();
        assert_eq!(s.row(1), &[0.5, 0.0, 0.0]);
        assert_eq!(s.row(2), &[0.0, 0.0, 0.2]);
        let s = sparsify_topk_dense(&m, 1, TopKMode::Magnitude).unwrap().to_dense();
        assert_eq!(s.row(2), &[-1.0, 0.0, 0.0]);
        assert_eq!(sparsify_topk_dense(&m, 5, TopKMode::Signed).unwrap().to_dense(), m);
        assert!(sparsify_topk_dense(&m, 0, TopKMode::Signed).is_err());
    }

    #[test]
    fn coarse_update_recovers_basis_rows() {
        let h_meta = DenseMatrix::from_rows(&[vec![2.0, 0.0, 1.0], vec![0.0, 1.0, 0.0], vec![1.0, 1.0, 3.0]]);
        let h_full = h_meta.select_rows(&[2, 0]);
        let s = update_coarse_assignment(&h_full, &h_meta, 3, TopKMode::Signed).unwrap().to_dense();
        for (r, anchor) in [(0usize, 2usize), (1, 0)] {
            for c in 0..3 {
                let want = if c == anchor { 1.0 } else { 0.0 };
                assert!((s[(r, c)] - want).abs() < 1e-10);
            }
        }
        let zero = update_coarse_assignment(&DenseMatrix::zeros(4, 3), &h_meta, 2, TopKMode::Signed).unwrap();
        assert_eq!(zero.nnz(), 0);
    }

    #[test]
    fn identical_rows_get_identical_assignments() {
        let h_meta = xavier_init(4, 6, 3);
        let mut h_full = xavier_init(5, 6, 4);
        let copy = h_full.row(1).to_vec();
        h_full.row_mut(3).copy_from_slice(&copy);
        let s = update_coarse_assignment(&h_full, &h_meta, 2, TopKMode::Signed).unwrap();
        assert_eq!(s.row(1), s.row(3));
    }

    #[test]
    fn coarse_seed_rows() {
        let p = Partition::new(3, vec![0, 1, 2, 2]).unwrap();
        let one_hot = seed_coarse_assignment(&p, 3, 1.0, 2).unwrap();
        assert_eq!(one_hot.nnz(), 4);
        let s = seed_coarse_assignment(&p, 3, 0.5, 2).unwrap().to_dense();
        assert_eq!(s.row(0), &[0.5, 0.25, 0.0]);
        assert_eq!(s.row(3), &[0.25, 0.0, 0.5]);
        assert!(seed_coarse_assignment(&p, 4, 0.5, 2).is_err());
        assert!(seed_coarse_assignment(&p, 3, 0.0, 2).is_err());
        let single = seed_coarse_assignment(&Partition::new(1, vec![0, 0]).unwrap(), 1, 0.5, 2).unwrap();
        assert_eq!(single.to_dense().as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn fine_seed_counts_indicator_products() {
        let s_c = SparseMatrix::from_triplets(4, 2, vec![(0, 0, 1.0), (1, 0, 1.0), (2, 1, 1.0), (3, 1, 1.0)]).unwrap();
        let p = Partition::new(2, vec![0, 1, 1, 1]).unwrap();
        let prod = seed_fine_product(&s_c, &p, 1.0).unwrap();
        assert_eq!(prod, DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 2.0]]));
        let s_r = seed_fine_assignment(&s_c, &p, 1.0, 1).unwrap();
        assert_eq!(s_r.to_dense(), DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]]));
    }
}
