//! Sparse kernels, expanded-graph assembly, normalisation and partitioning.

mod partition;
mod sparse;

pub use partition::{load_partition, partition_graph, partition_graph_with, write_partition, Partition, PartitionOptions};
pub use sparse::{spmm, spmm_t, SparseMatrix, PARALLEL_ROWS};

use crate::corpus::InteractionSet;
use crate::error::{Error, Result};

/// Bipartite user–item adjacency `[[0, R], [Rᵀ, 0]]` over the train split.
/// Users occupy nodes `0..num_users`, items follow.
pub fn build_interaction_adjacency(set: &InteractionSet) -> SparseMatrix {
    let nu = set.num_users;
    let n = set.num_entities();
    let mut triplets = Vec::with_capacity(set.train.len() * 2);
    for &(u, i) in &set.train {
        triplets.push((u, nu + i, 1.0));
        triplets.push((nu + i, u, 1.0));
    }
    SparseMatrix::from_triplets(n, n, triplets).expect("train pairs validated on load")
}

/// `[[A, S^c], [S^cᵀ, 0]]`
pub fn expand_coarse(adj: &SparseMatrix, s_c: &SparseMatrix) -> Result<SparseMatrix> {
    let n = adj.rows();
    if adj.cols() != n {
        return Err(Error::dims("expand_coarse", "square adjacency", format!("{:?}", adj.shape())));
    }
    if s_c.rows() != n {
        return Err(Error::dims("expand_coarse", format!("s_c with {n} rows"), s_c.rows()));
    }
    let side = n + s_c.cols();
    let mut t: Vec<(usize, usize, f64)> = Vec::with_capacity(adj.nnz() + 2 * s_c.nnz());
    t.extend(adj.triplets());
    for (r, c, v) in s_c.triplets() {
        t.push((r, n + c, v));
        t.push((n + c, r, v));
    }
    SparseMatrix::from_triplets(side, side, t)
}

/// `[[A, S^c, 0], [S^cᵀ, 0, S^r], [0, S^rᵀ, 0]]`. Fine nodes never touch entity nodes.
pub fn expand_fine(adj: &SparseMatrix, s_c: &SparseMatrix, s_r: &SparseMatrix) -> Result<SparseMatrix> {
    let n = adj.rows();
    let m_c = s_c.cols();
    if s_r.rows() != m_c {
        return Err(Error::dims("expand_fine", format!("s_r with {m_c} rows"), s_r.rows()));
    }
    let coarse = expand_coarse(adj, s_c)?;
    let side = n + m_c + s_r.cols();
    let mut t: Vec<(usize, usize, f64)> = Vec::with_capacity(coarse.nnz() + 2 * s_r.nnz());
    t.extend(coarse.triplets());
    for (r, c, v) in s_r.triplets() {
        t.push((n + r, n + m_c + c, v));
        t.push((n + m_c + c, n + r, v));
    }
    SparseMatrix::from_triplets(side, side, t)
}

/// `D^{-1/2} A D^{-1/2}` with `D` the row-sum degree matrix. Zero-degree nodes keep a
/// scale factor of 1. Rejects negative entries.
pub fn sym_normalize(adj: &SparseMatrix) -> Result<SparseMatrix> {
    if let Some((r, c, v)) = adj.triplets().find(|&(_, _, v)| v < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sym_normalize: negative entry {v} at ({r}, {c})"
        )));
    }
    sym_normalize_abs(adj)
}

/// Like [`sym_normalize`] but tolerates signed weights: degrees are absolute row sums,
/// keeping `D^{-1/2}` real. Used for expanded graphs whose assignment weights come from
/// pseudo-inverse updates.
pub fn sym_normalize_abs(adj: &SparseMatrix) -> Result<SparseMatrix> {
    if adj.rows() != adj.cols() {
        return Err(Error::dims("sym_normalize", "square matrix", format!("{:?}", adj.shape())));
    }
    let inv_sqrt: Vec<f64> = adj
        .abs_row_sums()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 1.0 })
        .collect();
    let t: Vec<(usize, usize, f64)> = adj
        .triplets()
        .map(|(r, c, v)| (r, c, v * inv_sqrt[r] * inv_sqrt[c]))
        .collect();
    SparseMatrix::from_triplets(adj.rows(), adj.cols(), t)
}
