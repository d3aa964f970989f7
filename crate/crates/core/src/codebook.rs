//! Codebooks, assignment matrices and compositional embeddings.

use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graphkit::{spmm, SparseMatrix};
use crate::numerics::{soft_threshold, sparse_pca, DenseMatrix, SparsePcaOptions};

/// Coarse codebook `E^c_meta` (m^c × d) and entity assignment `S^c` (N × m^c).
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseState {
    pub e_meta_c: DenseMatrix,
    pub s_c: SparseMatrix,
}

impl CoarseState {
    pub fn new(e_meta_c: DenseMatrix, s_c: SparseMatrix) -> Result<Self> {
        if s_c.cols() != e_meta_c.rows() {
            return Err(Error::dims("CoarseState", format!("s_c with {} cols", e_meta_c.rows()), s_c.cols()));
        }
        if !e_meta_c.is_finite() {
            return Err(Error::NonFinite("coarse codebook".into()));
        }
        Ok(CoarseState { e_meta_c, s_c })
    }

    pub fn num_entities(&self) -> usize {
        self.s_c.rows()
    }

    pub fn num_buckets(&self) -> usize {
        self.e_meta_c.rows()
    }

    pub fn dim(&self) -> usize {
        self.e_meta_c.cols()
    }
}

/// Fine codebook `E^r_meta` (m^r × d), coarse-to-fine assignment `S^r` (m^c × m^r),
/// mixing weight `w_cr` and soft threshold `λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FineState {
    pub e_meta_r: DenseMatrix,
    pub s_r: SparseMatrix,
    pub w_cr: f64,
    pub lambda_thr: f64,
}

impl FineState {
    pub fn new(e_meta_r: DenseMatrix, s_r: SparseMatrix, w_cr: f64, lambda_thr: f64) -> Result<Self> {
        if s_r.cols() != e_meta_r.rows() {
            return Err(Error::dims("FineState", format!("s_r with {} cols", e_meta_r.rows()), s_r.cols()));
        }
        if !(0.0..=1.0).contains(&w_cr) {
            return Err(Error::InvalidArgument(format!("w_cr must lie in [0, 1], got {w_cr}")));
        }
        if !(lambda_thr >= 0.0) {
            return Err(Error::InvalidArgument(format!("lambda_thr must be >= 0, got {lambda_thr}")));
        }
        Ok(FineState {
            e_meta_r,
            s_r,
            w_cr,
            lambda_thr,
        })
    }

    /// `S_λ(E^r_meta)`
    pub fn thresholded(&self) -> DenseMatrix {
        soft_threshold(&self.e_meta_r, self.lambda_thr)
    }
}

/// `Ê^c = S^c · E^c_meta`
pub fn compose_coarse(cs: &CoarseState) -> Result<DenseMatrix> {
    spmm(&cs.s_c, &cs.e_meta_c)
}

/// `Ê^c_meta = (1 − w_cr)·E^c_meta + w_cr·S^r·S_λ(E^r_meta)`
pub fn refine_codebook(cs: &CoarseState, fs: &FineState) -> Result<DenseMatrix> {
    if fs.s_r.rows() != cs.num_buckets() {
        return Err(Error::dims("refine_codebook", format!("s_r with {} rows", cs.num_buckets()), fs.s_r.rows()));
    }
    if fs.e_meta_r.cols() != cs.dim() {
        return Err(Error::dims("refine_codebook", format!("fine dim {}", cs.dim()), fs.e_meta_r.cols()));
    }
    if fs.w_cr == 0.0 {
        return Ok(cs.e_meta_c.clone());
    }
    let fine = spmm(&fs.s_r, &fs.thresholded())?;
    let mut out = cs.e_meta_c.scale(1.0 - fs.w_cr);
    out.add_scaled(&fine, fs.w_cr)?;
    Ok(out)
}

/// `Ê^r = S^c · Ê^c_meta`
pub fn compose_refined(cs: &CoarseState, refined: &DenseMatrix) -> Result<DenseMatrix> {
    if refined.shape() != cs.e_meta_c.shape() {
        return Err(Error::dims(
            "compose_refined",
            format!("{:?}", cs.e_meta_c.shape()),
            format!("{:?}", refined.shape()),
        ));
    }
    spmm(&cs.s_c, refined)
}

/// How the coarse rows seeding the fine codebook are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RowSelection {
    /// Uniform without replacement from a seeded stream.
    #[default]
    Random,
    /// Rows with the largest total assignment mass (column sums of `S^c`).
    HighestDegree,
}

impl FromStr for RowSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(RowSelection::Random),
            "degree" | "highest-degree" => Ok(RowSelection::HighestDegree),
            other => Err(Error::Config(format!("unknown row selection `{other}`"))),
        }
    }
}

impl std::fmt::Display for RowSelection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RowSelection::Random => "random",
            RowSelection::HighestDegree => "highest-degree",
        })
    }
}

pub fn select_coarse_rows(cs: &CoarseState, count: usize, selection: RowSelection, seed: u64) -> Result<Vec<usize>> {
    let m_c = cs.num_buckets();
    if count == 0 || count > m_c {
        return Err(Error::InvalidArgument(format!("cannot select {count} of {m_c} coarse rows")));
    }
    Ok(match selection {
        RowSelection::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut rows = sample(&mut rng, m_c, count).into_vec();
            rows.sort_unstable();
            rows
        }
        RowSelection::HighestDegree => {
            let mass = cs.s_c.col_sums();
            let mut order: Vec<usize> = (0..m_c).collect();
            order.sort_by(|&a, &b| mass[b].total_cmp(&mass[a]).then(a.cmp(&b)));
            let mut rows = order[..count].to_vec();
            rows.sort_unstable();
            rows
        }
    })
}

/// Sparse fine codebook seeded from the coarse one: pick `m_r` coarse rows, reduce
/// them with sparse PCA to `d_r` sparse codes, then pad each code with trailing zeros
/// back to width `d`.
pub fn init_fine_codebook(
    cs: &CoarseState,
    m_r: usize,
    d_r: usize,
    pca: &SparsePcaOptions,
    selection: RowSelection,
    seed: u64,
) -> Result<DenseMatrix> {
    let d = cs.dim();
    if d_r == 0 || d_r > d {
        return Err(Error::InvalidArgument(format!("d_r must be in 1..={d}, got {d_r}")));
    }
    let rows = select_coarse_rows(cs, m_r, selection, seed)?;
    let picked = cs.e_meta_c.select_rows(&rows);
    let fit = sparse_pca(&picked, d_r, pca)?;
    let mut padded = DenseMatrix::zeros(m_r, d);
    for i in 0..m_r {
        padded.row_mut(i)[..d_r].copy_from_slice(fit.codes.row(i));
    }
    Ok(padded)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::xavier_init;

    fn one_hot(rows: &[usize], cols: usize) -> SparseMatrix {
        SparseMatrix::from_triplets(rows.len(), cols, rows.iter().enumerate().map(|(r, &c)| (r, c, 1.0)).collect()).unwrap()
    }

    #[test]
    fn one_hot_copies_rows_and_half_weights_average() {
        let e = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 6.0]]);
        let cs = CoarseState::new(e.clone(), one_hot(&[1, 0, 1], 2)).unwrap();
        let c = compose_coarse(&cs).unwrap();
        assert_eq!(c.row(0), e.row(1));
        assert_eq!(c.row(1), e.row(0));
        let half = SparseMatrix::from_triplets(1, 2, vec![(0, 0, 0.5), (0, 1, 0.5)]).unwrap();
        let cs = CoarseState::new(e, half).unwrap();
        assert_eq!(compose_coarse(&cs).unwrap().row(0), &[2.0, 4.0]);
    }

    #[test]
    fn refine_limits() {
        let e = xavier_init(3, 4, 1);
        let cs = CoarseState::new(e.clone(), one_hot(&[0, 1, 2], 3)).unwrap();
        let fine = xavier_init(2, 4, 2);
        let fs = FineState::new(fine.clone(), one_hot(&[1, 0, 1], 2), 0.0, 0.0).unwrap();
        assert_eq!(refine_codebook(&cs, &fs).unwrap(), e);
        let fs = FineState::new(fine.clone(), one_hot(&[1, 0, 1], 2), 1.0, 0.0).unwrap();
        let r = refine_codebook(&cs, &fs).unwrap();
        assert_eq!(r.row(0), fine.row(1));
        assert_eq!(r.row(1), fine.row(0));
        assert_eq!(compose_refined(&cs, &DenseMatrix::zeros(3, 4)).unwrap(), DenseMatrix::zeros(3, 4));
        assert!(compose_refined(&cs, &DenseMatrix::zeros(2, 4)).is_err());
    }

    #[test]
    fn state_validation() {
        assert!(FineState::new(DenseMatrix::zeros(2, 2), SparseMatrix::zeros(3, 2), 1.5, 0.0).is_err());
        assert!(FineState::new(DenseMatrix::zeros(2, 2), SparseMatrix::zeros(3, 2), 0.5, -1.0).is_err());
        assert!(CoarseState::new(DenseMatrix::zeros(2, 2), SparseMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn fine_init_padding_and_limits() {
        let cs = CoarseState::new(xavier_init(8, 6, 3), one_hot(&[0, 1, 2, 3, 4, 5, 6, 7], 8)).unwrap();
        let opts = SparsePcaOptions {
            alpha: 0.01,
            ..Default::default()
        };
        let f = init_fine_codebook(&cs, 5, 3, &opts, RowSelection::Random, 4).unwrap();
        assert_eq!(f.shape(), (5, 6));
        for i in 0..5 {
            assert!(f.row(i)[3..].iter().all(|&x| x == 0.0));
        }
        // Padding survives thresholding.
        let t = soft_threshold(&f, 0.01);
        for i in 0..5 {
            assert!(t.row(i)[3..].iter().all(|&x| x == 0.0));
        }

        let big = SparsePcaOptions {
            alpha: 1e6,
            ..Default::default()
        };
        assert_eq!(init_fine_codebook(&cs, 5, 3, &big, RowSelection::Random, 4).unwrap().nnz(), 0);
        assert!(init_fine_codebook(&cs, 9, 3, &opts, RowSelection::Random, 4).is_err());
        assert!(init_fine_codebook(&cs, 5, 7, &opts, RowSelection::Random, 4).is_err());
    }

    #[test]
    fn unpenalised_fine_init_reproduces_selected_rows() {
        let cs = CoarseState::new(xavier_init(10, 4, 5), one_hot(&[0; 3], 10)).unwrap();
        let opts = SparsePcaOptions {
            alpha: 0.0,
            ..Default::default()
        };
        let f = init_fine_codebook(&cs, 6, 4, &opts, RowSelection::Random, 8).unwrap();
        // With d_r = d the codes are X·Wᵀ for an orthogonal W, so row norms match.
        let rows = select_coarse_rows(&cs, 6, RowSelection::Random, 8).unwrap();
        let picked = cs.e_meta_c.select_rows(&rows);
        for i in 0..6 {
            let a: f64 = f.row(i).iter().map(|x| x * x).sum();
            let b: f64 = picked.row(i).iter().map(|x| x * x).sum();
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn highest_degree_selection() {
        let s = SparseMatrix::from_triplets(4, 3, vec![(0, 2, 1.0), (1, 2, 1.0), (2, 0, 1.0), (3, 1, 0.5)]).unwrap();
        let cs = CoarseState::new(xavier_init(3, 2, 1), s).unwrap();
        assert_eq!(select_coarse_rows(&cs, 2, RowSelection::HighestDegree, 0).unwrap(), vec![0, 2]);
    }
}
