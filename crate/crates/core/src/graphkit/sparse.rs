use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

/// Compressed sparse row matrix.
///
/// Column indices are strictly increasing within each row and no explicit zeros
/// are stored.
#[derive(Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl std::fmt::Debug for SparseMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SparseMatrix {}x{} nnz={}", self.rows, self.cols, self.nnz())
    }
}

/// Row count above which [`spmm`] fans out across threads.
pub const PARALLEL_ROWS: usize = 512;

impl SparseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        SparseMatrix {
            rows,
            cols,
            row_offsets: vec![0; rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            rows: n,
            cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Validates raw CSR arrays.
    pub fn from_csr(
        rows: usize,
        cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidArgument(format!("CSR: {msg}")));
        if row_offsets.len() != rows + 1 || row_offsets[0] != 0 {
            return bad(format!("row_offsets must have length {} and start at 0", rows + 1));
        }
        if *row_offsets.last().unwrap() != col_indices.len() || col_indices.len() != values.len() {
            return bad("row_offsets end, col_indices and values disagree on nnz".into());
        }
        for r in 0..rows {
            let (s, e) = (row_offsets[r], row_offsets[r + 1]);
            if s > e {
                return bad(format!("row_offsets decrease at row {r}"));
            }
            let row_cols = &col_indices[s..e];
            if row_cols.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("column indices not strictly increasing in row {r}"));
            }
            if row_cols.iter().any(|&c| c >= cols) {
                return bad(format!("column index out of range in row {r}"));
            }
        }
        if values.iter().any(|&v| v == 0.0 || !v.is_finite()) {
            return bad("explicit zero or non-finite value stored".into());
        }
        Ok(SparseMatrix {
            rows,
            cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Builds from (row, col, value) triplets. Duplicates are summed; zeros are dropped.
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        for &(r, c, _) in &triplets {
            if r >= rows || c >= cols {
                return Err(Error::dims(
                    "SparseMatrix::from_triplets",
                    format!("index within {rows}x{cols}"),
                    format!("({r}, {c})"),
                ));
            }
        }
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_offsets = vec![0usize; rows + 1];
        let mut col_indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut i = 0;
        while i < triplets.len() {
            let (r, c, mut v) = triplets[i];
            i += 1;
            while i < triplets.len() && triplets[i].0 == r && triplets[i].1 == c {
                v += triplets[i].2;
                i += 1;
            }
            if v != 0.0 {
                col_indices.push(c);
                values.push(v);
                row_offsets[r + 1] += 1;
            }
        }
        for r in 0..rows {
            row_offsets[r + 1] += row_offsets[r];
        }
        Ok(SparseMatrix {
            rows,
            cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn from_dense(m: &DenseMatrix) -> Self {
        let mut row_offsets = Vec::with_capacity(m.rows() + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        for i in 0..m.rows() {
            for (j, &v) in m.row(i).iter().enumerate() {
                if v != 0.0 {
                    col_indices.push(j);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        SparseMatrix {
            rows: m.rows(),
            cols: m.cols(),
            row_offsets,
            col_indices,
            values,
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `r`.
    #[inline]
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.row_offsets[r], self.row_offsets[r + 1]);
        (&self.col_indices[s..e], &self.values[s..e])
    }

    pub fn row_nnz(&self, r: usize) -> usize {
        self.row_offsets[r + 1] - self.row_offsets[r]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.col_indices {
            counts[c + 1] += 1;
        }
        for c in 0..self.cols {
            counts[c + 1] += counts[c];
        }
        let row_offsets = counts.clone();
        let mut next = counts;
        let mut col_indices = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        // Rows visited in ascending order, so each transposed row comes out sorted.
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let slot = next[c];
                col_indices[slot] = r;
                values[slot] = v;
                next[c] += 1;
            }
        }
        SparseMatrix {
            rows: self.cols,
            cols: self.rows,
            row_offsets,
            col_indices,
            values,
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.rows, self.cols);
        for (r, c, v) in self.triplets() {
            d[(r, c)] = v;
        }
        d
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols && *self == self.transpose()
    }

    /// Row sums of absolute values.
    pub fn abs_row_sums(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|r| self.row(r).1.iter().map(|v| v.abs()).sum())
            .collect()
    }

    /// Column sums (signed).
    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for (&c, &v) in self.col_indices.iter().zip(&self.values) {
            sums[c] += v;
        }
        sums
    }
}

/// Sparse × dense product. Each output row accumulates in ascending column order of
/// `a`, so the result is bitwise identical for any thread count.
pub fn spmm(a: &SparseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols() != b.rows() {
        return Err(Error::dims("spmm", format!("b.rows == {}", a.cols()), b.rows()));
    }
    let k = b.cols();
    let mut out = DenseMatrix::zeros(a.rows(), k);
    if k == 0 {
        return Ok(out);
    }
    let fill_row = |r: usize, out_row: &mut [f64]| {
        let (cols, vals) = a.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            for (o, &x) in out_row.iter_mut().zip(b.row(c)) {
                *o += v * x;
            }
        }
    };
    if a.rows() >= PARALLEL_ROWS {
        out.as_mut_slice()
            .par_chunks_mut(k)
            .enumerate()
            .for_each(|(r, row)| fill_row(r, row));
    } else {
        out.as_mut_slice()
            .chunks_mut(k)
            .enumerate()
            .for_each(|(r, row)| fill_row(r, row));
    }
    Ok(out)
}

/// `aᵀ · b` for sparse `a`, without materialising the transpose.
pub fn spmm_t(a: &SparseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.rows() != b.rows() {
        return Err(Error::dims("spmm_t", format!("b.rows == {}", a.rows()), b.rows()));
    }
    let mut out = DenseMatrix::zeros(a.cols(), b.cols());
    for r in 0..a.rows() {
        let (cols, vals) = a.row(r);
        let src = b.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            for (o, &x) in out.row_mut(c).iter_mut().zip(src) {
                *o += v * x;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates_and_drop_zeros() {
        let m = SparseMatrix::from_triplets(2, 3, vec![(0, 2, 1.0), (0, 0, 2.0), (0, 2, -1.0), (1, 1, 4.0), (1, 1, 1.0)]).unwrap();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 0), 2.0);
        assert_eq!(m.get(0, 2), 0.0);
        assert_eq!(m.get(1, 1), 5.0);
        assert_eq!(m.row_offsets(), &[0, 1, 2]);
    }

    #[test]
    fn from_csr_validates() {
        assert!(SparseMatrix::from_csr(1, 3, vec![0, 2], vec![2, 1], vec![1.0, 1.0]).is_err());
        assert!(SparseMatrix::from_csr(1, 3, vec![0, 1], vec![3], vec![1.0]).is_err());
        assert!(SparseMatrix::from_csr(1, 3, vec![0, 1], vec![0], vec![0.0]).is_err());
        assert!(SparseMatrix::from_csr(1, 3, vec![0, 2], vec![0, 2], vec![1.0, 2.0]).is_ok());
    }

    #[test]
    fn transpose_round_trips() {
        let m = SparseMatrix::from_triplets(3, 4, vec![(0, 3, 1.0), (2, 0, 2.0), (1, 3, 3.0), (2, 3, 4.0)]).unwrap();
        let t = m.transpose();
        assert_eq!(t.shape(), (4, 3));
        assert_eq!(t.to_dense(), m.to_dense().transpose());
        assert_eq!(t.transpose(), m);
    }

    #[test]
    fn spmm_identity_and_zero() {
        let b = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
        assert_eq!(spmm(&SparseMatrix::identity(3), &b).unwrap(), b);
        assert_eq!(spmm(&SparseMatrix::zeros(2, 3), &b).unwrap(), DenseMatrix::zeros(2, 2));
        assert!(spmm(&SparseMatrix::zeros(2, 2), &b).is_err());
    }

    #[test]
    fn spmm_t_matches_transpose() {
        let a = SparseMatrix::from_triplets(3, 2, vec![(0, 1, 2.0), (2, 0, -1.0), (2, 1, 0.5)]).unwrap();
        let b = DenseMatrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]);
        assert_eq!(spmm_t(&a, &b).unwrap(), spmm(&a.transpose(), &b).unwrap());
    }
}
