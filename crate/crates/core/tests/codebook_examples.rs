mod common;

use common::*;
use metaembed::codebook::*;
use metaembed::graphkit::SparseMatrix;
use metaembed::numerics::{soft_threshold, DenseMatrix, SparsePcaOptions};

fn one_hot(targets: &[usize], cols: usize) -> SparseMatrix {
    SparseMatrix::from_triplets(targets.len(), cols, targets.iter().enumerate().map(|(r, &c)| (r, c, 1.0)).collect()).unwrap()
}

#[test]
fn composition_matches_dense_product() {
    let mut r = rng(31);
    let cs = CoarseState::new(gaussian_like(&mut r, 5, 6), random_assignment(&mut r, 20, 5, 2, true)).unwrap();
    let oracle = naive_matmul(&cs.s_c.to_dense(), &cs.e_meta_c);
    assert!(max_abs_diff(&compose_coarse(&cs).unwrap(), &oracle) < 1e-12);
}

#[test]
fn refinement_limits_and_oracle() {
    let mut r = rng(32);
    let cs = CoarseState::new(gaussian_like(&mut r, 4, 5), random_assignment(&mut r, 9, 4, 2, false)).unwrap();
    let e_r = gaussian_like(&mut r, 3, 5);

    let inert = FineState::new(e_r.clone(), random_assignment(&mut r, 4, 3, 2, true), 0.0, 0.3).unwrap();
    let refined = refine_codebook(&cs, &inert).unwrap();
    assert_eq!(refined, cs.e_meta_c);
    assert_eq!(compose_refined(&cs, &refined).unwrap(), compose_coarse(&cs).unwrap());

    let replace = FineState::new(e_r.clone(), one_hot(&[2, 0, 1, 2], 3), 1.0, 0.0).unwrap();
    let got = refine_codebook(&cs, &replace).unwrap();
    for (c, f) in [(0, 2), (1, 0), (2, 1), (3, 2)] {
        assert_eq!(got.row(c), e_r.row(f));
    }

    let half = FineState::new(e_r.clone(), random_assignment(&mut r, 4, 3, 2, true), 0.5, 0.2).unwrap();
    let oracle = cs
        .e_meta_c
        .scale(0.5)
        .add(&naive_matmul(&half.s_r.to_dense(), &soft_threshold(&e_r, 0.2)).scale(0.5))
        .unwrap();
    let refined = refine_codebook(&cs, &half).unwrap();
    assert!(max_abs_diff(&refined, &oracle) < 1e-12);
    let entities = compose_refined(&cs, &refined).unwrap();
    assert!(max_abs_diff(&entities, &naive_matmul(&cs.s_c.to_dense(), &oracle)) < 1e-12);
    let zero = compose_refined(&cs, &DenseMatrix::zeros(4, 5)).unwrap();
    assert_eq!(zero.max_abs(), 0.0);
}

#[test]
fn fine_codebook_unpenalised_reproduces_coarse_rows() {
    let mut r = rng(33);
    let cs = CoarseState::new(gaussian_like(&mut r, 6, 4), random_assignment(&mut r, 10, 6, 2, false)).unwrap();
    let pca = SparsePcaOptions { alpha: 0.0, max_iter: 500, tol: 1e-12, ..Default::default() };
    let codes = init_fine_codebook(&cs, 6, 4, &pca, RowSelection::HighestDegree, 1).unwrap();
    // Codes live in the dictionary basis; with a full basis they carry the same
    // Gram matrix as the rows they encode.
    let rows = select_coarse_rows(&cs, 6, RowSelection::HighestDegree, 1).unwrap();
    let picked = cs.e_meta_c.select_rows(&rows);
    let g_codes = naive_matmul(&codes, &codes.transpose());
    let g_rows = naive_matmul(&picked, &picked.transpose());
    assert!(max_abs_diff(&g_codes, &g_rows) < 1e-6);
}

#[test]
fn fine_codebook_padding_and_heavy_penalty() {
    let mut r = rng(34);
    let cs = CoarseState::new(gaussian_like(&mut r, 8, 6), random_assignment(&mut r, 12, 8, 2, false)).unwrap();
    let pca = SparsePcaOptions { alpha: 0.01, ..Default::default() };
    let codes = init_fine_codebook(&cs, 5, 3, &pca, RowSelection::Random, 2).unwrap();
    assert_eq!(codes.shape(), (5, 6));
    for i in 0..5 {
        assert!(codes.row(i)[3..].iter().all(|&v| v == 0.0));
    }
    let heavy = SparsePcaOptions { alpha: 1e6, ..Default::default() };
    assert_eq!(init_fine_codebook(&cs, 5, 3, &heavy, RowSelection::Random, 2).unwrap().nnz(), 0);
    assert!(init_fine_codebook(&cs, 5, 7, &pca, RowSelection::Random, 2).is_err());
}

#[test]
fn row_selection_is_seeded_and_distinct() {
    let mut r = rng(35);
    let cs = CoarseState::new(gaussian_like(&mut r, 10, 3), random_assignment(&mut r, 30, 10, 2, false)).unwrap();
    let a = select_coarse_rows(&cs, 6, RowSelection::Random, 9).unwrap();
    assert_eq!(a, select_coarse_rows(&cs, 6, RowSelection::Random, 9).unwrap());
    let mut sorted = a.clone();
    sorted.sort();
    sorted.dedup();
    assert_eq!(sorted.len(), 6);
    assert!(select_coarse_rows(&cs, 11, RowSelection::Random, 9).is_err());
}
