mod common;

use common::*;
use metaembed::assign::*;
use metaembed::graphkit::{Partition, SparseMatrix};
use metaembed::numerics::DenseMatrix;
use rand::Rng;

const SIGNED: TopKMode = TopKMode::Signed;

/// Gauss–Jordan inverse with partial pivoting.
fn invert(m: &DenseMatrix) -> DenseMatrix {
    let n = m.rows();
    let mut a = m.clone();
    let mut inv = DenseMatrix::identity(n);
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[(x, col)].abs().total_cmp(&a[(y, col)].abs())).unwrap();
        for j in 0..n {
            let (t, u) = (a[(col, j)], inv[(col, j)]);
            a[(col, j)] = a[(piv, j)];
            inv[(col, j)] = inv[(piv, j)];
            a[(piv, j)] = t;
            inv[(piv, j)] = u;
        }
        let p = a[(col, col)];
        for j in 0..n {
            a[(col, j)] /= p;
            inv[(col, j)] /= p;
        }
        for i in 0..n {
            if i != col {
                let f = a[(i, col)];
                for j in 0..n {
                    a[(i, j)] -= f * a[(col, j)];
                    inv[(i, j)] -= f * inv[(col, j)];
                }
            }
        }
    }
    inv
}

/// Right inverse `Aᵀ(AAᵀ)⁻¹` of a full-row-rank matrix.
fn right_inverse(a: &DenseMatrix) -> DenseMatrix {
    naive_matmul(&a.transpose(), &invert(&naive_matmul(a, &a.transpose())))
}

#[test]
fn exact_rows_recover_basis_vectors() {
    let mut r = rng(61);
    let h_meta = gaussian_like(&mut r, 4, 4);
    let s = update_coarse_assignment(&h_meta, &h_meta, 4, SIGNED).unwrap().to_dense();
    assert!(max_abs_diff(&s, &DenseMatrix::identity(4)) < 1e-8);
    let zero = update_coarse_assignment(&DenseMatrix::zeros(5, 4), &h_meta, 2, SIGNED).unwrap();
    assert_eq!(zero.nnz(), 0);
}

#[test]
fn residual_is_orthogonal_to_the_codebook_rowspace() {
    let mut r = rng(62);
    for rank in [4, 2] {
        let h_full = gaussian_like(&mut r, 10, 4);
        let left = gaussian_like(&mut r, 6, rank);
        let h_meta = naive_matmul(&left, &gaussian_like(&mut r, rank, 4));
        let s = update_coarse_assignment(&h_full, &h_meta, 6, SIGNED).unwrap().to_dense();
        let residual = h_full.sub(&naive_matmul(&s, &h_meta)).unwrap();
        let inner = naive_matmul(&residual, &h_meta.transpose());
        assert!(inner.max_abs() < 1e-8, "rank {rank}: {}", inner.max_abs());
    }
}

#[test]
fn bucket_permutation_permutes_columns() {
    let mut r = rng(63);
    let h_full = gaussian_like(&mut r, 12, 5);
    let h_meta = gaussian_like(&mut r, 4, 5);
    let perm = [2, 0, 3, 1];
    let permuted = h_meta.select_rows(&perm);
    let a = update_coarse_assignment(&h_full, &h_meta, 2, SIGNED).unwrap();
    let b = update_coarse_assignment(&h_full, &permuted, 2, SIGNED).unwrap();
    for i in 0..12 {
        for (new, &old) in perm.iter().enumerate() {
            assert!((a.get(i, old) - b.get(i, new)).abs() < 1e-10);
        }
    }
}

#[test]
fn coarse_update_keeps_at_most_t_c_per_row() {
    let mut r = rng(64);
    let s = update_coarse_assignment(&gaussian_like(&mut r, 30, 6), &gaussian_like(&mut r, 5, 6), 2, SIGNED).unwrap();
    assert_eq!(s.shape(), (30, 5));
    assert!((0..30).all(|i| s.row_nnz(i) == 2));
}

#[test]
fn bridged_product_matches_two_inverse_oracle() {
    let mut r = rng(65);
    let h_full = gaussian_like(&mut r, 12, 5);
    let h_c = gaussian_like(&mut r, 3, 5);
    let h_r = gaussian_like(&mut r, 2, 5);
    let left = naive_matmul(&h_full, &right_inverse(&h_c));
    let right = naive_matmul(&h_full, &right_inverse(&h_r));
    let oracle = naive_matmul(&left.transpose(), &right);
    let got = bridged_product(&h_full, &h_c, &h_r).unwrap();
    assert_eq!(got.shape(), (3, 2));
    assert!(max_abs_diff(&got, &oracle) < 1e-8);
    let sparse = update_bridged_assignment(&h_full, &h_c, &h_r, 2, SIGNED).unwrap();
    assert!(max_abs_diff(&sparse.to_dense(), &oracle) < 1e-8);
    let none = update_bridged_assignment(&DenseMatrix::zeros(12, 5), &h_c, &h_r, 1, SIGNED).unwrap();
    assert_eq!((none.shape(), none.nnz()), ((3, 2), 0));
}

#[test]
fn topk_examples() {
    let m = DenseMatrix::from_rows(&[vec![0.9, 0.1, 0.5], vec![0.5, 0.5, 0.1]]);
    let two = sparsify_topk_dense(&m, 2, SIGNED).unwrap().to_dense();
    assert_eq!(two.row(0), &[0.9, 0.0, 0.5]);
    let one = sparsify_topk(&SparseMatrix::from_dense(&m), 1, SIGNED).unwrap().to_dense();
    assert_eq!(one.row(1), &[0.5, 0.0, 0.0]);
    assert_eq!(sparsify_topk_dense(&m, 3, SIGNED).unwrap().to_dense(), m);
}

#[test]
fn coarse_seed_examples() {
    let p = Partition::new(4, vec![0, 1, 2, 3, 1, 0]).unwrap();
    let one_hot = seed_coarse_assignment(&p, 4, 1.0, 2).unwrap();
    for (i, &a) in p.assignment().iter().enumerate() {
        assert_eq!(one_hot.row(i), (&[a][..], &[1.0][..]));
    }
    let halves = seed_coarse_assignment(&Partition::new(2, vec![0, 1, 1]).unwrap(), 2, 0.5, 2).unwrap();
    assert!(halves.values().iter().all(|&v| v == 0.5));

    let mut r = rng(66);
    for _ in 0..10 {
        let m_c = r.gen_range(2..8);
        let t_c = r.gen_range(1..=m_c);
        let w = r.gen_range(0.3..1.0);
        let assignment: Vec<usize> = (0..m_c).chain((0..15).map(|_| r.gen_range(0..m_c))).collect();
        let s = seed_coarse_assignment(&Partition::new(m_c, assignment).unwrap(), m_c, w, t_c).unwrap();
        let expected = w + (t_c - 1) as f64 * (1.0 - w) / (m_c - 1) as f64;
        for i in 0..s.rows() {
            let sum: f64 = s.row(i).1.iter().sum();
            assert!((sum - expected).abs() < 1e-12);
        }
    }
    assert!(seed_coarse_assignment(&p, 5, 0.5, 2).is_err());
}

#[test]
fn fine_seed_counts_shared_members() {
    let coarse = [0, 1, 1, 2, 0, 2, 2];
    let fine = [1, 0, 0, 1, 1, 0, 1];
    let s_c = SparseMatrix::from_triplets(7, 3, coarse.iter().enumerate().map(|(p, &c)| (p, c, 1.0)).collect()).unwrap();
    let got = seed_fine_product(&s_c, &Partition::new(2, fine.to_vec()).unwrap(), 1.0).unwrap();
    for c in 0..3 {
        for f in 0..2 {
            let count = coarse.iter().zip(&fine).filter(|&(&a, &b)| a == c && b == f).count();
            assert_eq!(got[(c, f)], count as f64);
        }
    }

    let single = SparseMatrix::from_triplets(1, 2, vec![(0, 1, 1.0)]).unwrap();
    let s = seed_fine_assignment(&single, &Partition::new(1, vec![0]).unwrap(), 1.0, 2).unwrap();
    assert_eq!(s.nnz(), 1);
    assert_eq!(s.get(1, 0), 1.0);
}

#[test]
fn fine_seed_matches_dense_oracle() {
    let mut r = rng(67);
    let (n, m_c, m_r, t_r, w) = (14, 4, 3, 2, 0.6);
    let s_c = random_assignment(&mut r, n, m_c, 2, false);
    let parts: Vec<usize> = (0..m_r).chain((m_r..n).map(|_| r.gen_range(0..m_r))).collect();
    let seeded = DenseMatrix::from_fn(n, m_r, |p, f| if parts[p] == f { w } else { (1.0 - w) / (m_r - 1) as f64 });
    let oracle = naive_matmul(&s_c.to_dense().transpose(), &seeded);
    let partition = Partition::new(m_r, parts).unwrap();
    assert!(max_abs_diff(&seed_fine_product(&s_c, &partition, w).unwrap(), &oracle) < 1e-12);
    let s = seed_fine_assignment(&s_c, &partition, w, t_r).unwrap();
    for c in 0..m_c {
        let live = oracle.row(c).iter().filter(|&&v| v != 0.0).count();
        assert_eq!(s.row_nnz(c), t_r.min(live));
    }
}
