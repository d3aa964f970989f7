//! Layer-averaged propagation over expanded graphs and its reverse-mode gradient.
//!
//! The forward map is linear: `H = (1/(L+1)) Σ_{l=0..L} Â^l H₀`, so the gradient with
//! respect to `H₀` is `(1/(L+1)) Σ_l (Âᵀ)^l G`. Layer-0 inputs are linear in the
//! codebooks too (apart from the soft-threshold mask), which keeps the whole backward
//! pass a handful of sparse products.

use crate::codebook::{compose_coarse, compose_refined, refine_codebook, CoarseState, FineState};
use crate::error::{Error, Result};
use crate::graphkit::{expand_coarse, expand_fine, spmm, spmm_t, sym_normalize_abs, SparseMatrix};
use crate::numerics::{soft_threshold_mask, DenseMatrix};

/// Row counts of the entity / coarse-codebook / fine-codebook blocks of a stacked
/// embedding matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockLayout {
    pub entities: usize,
    pub coarse: usize,
    pub fine: usize,
}

impl BlockLayout {
    pub fn coarse(entities: usize, coarse: usize) -> Self {
        BlockLayout {
            entities,
            coarse,
            fine: 0,
        }
    }

    pub fn fine(entities: usize, coarse: usize, fine: usize) -> Self {
        BlockLayout {
            entities,
            coarse,
            fine,
        }
    }

    pub fn total(&self) -> usize {
        self.entities + self.coarse + self.fine
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationResult {
    pub h_full: DenseMatrix,
    pub h_meta_c: DenseMatrix,
    /// Present only for fine-stage graphs.
    pub h_meta_r: Option<DenseMatrix>,
    /// `H_(0) ..= H_(L)`
    pub per_layer_cache: Vec<DenseMatrix>,
}

impl PropagationResult {
    pub fn num_layers(&self) -> usize {
        self.per_layer_cache.len().saturating_sub(1)
    }

    /// Re-concatenates the split blocks into the averaged stack.
    pub fn averaged(&self) -> DenseMatrix {
        let mut parts = vec![&self.h_full, &self.h_meta_c];
        if let Some(r) = &self.h_meta_r {
            parts.push(r);
        }
        DenseMatrix::vstack(&parts).expect("blocks share a width")
    }
}

/// `H_(l+1) = Â·H_(l)`, averaged over `l = 0..=L`, then split by `layout`.
pub fn propagate(norm_adj: &SparseMatrix, h0: &DenseMatrix, num_layers: usize, layout: BlockLayout) -> Result<PropagationResult> {
    if norm_adj.rows() != norm_adj.cols() || norm_adj.rows() != h0.rows() {
        return Err(Error::dims(
            "propagate",
            format!("square operator with side {}", h0.rows()),
            format!("{:?}", norm_adj.shape()),
        ));
    }
    if layout.total() != h0.rows() {
        return Err(Error::dims("propagate", format!("layout totalling {}", h0.rows()), layout.total()));
    }
    let mut cache = Vec::with_capacity(num_layers + 1);
    cache.push(h0.clone());
    for l in 0..num_layers {
        let next = spmm(norm_adj, &cache[l])?;
        cache.push(next);
    }
    let mut sum = DenseMatrix::zeros(h0.rows(), h0.cols());
    for layer in &cache {
        sum.add_scaled(layer, 1.0)?;
    }
    let averaged = sum.scale(1.0 / (num_layers + 1) as f64);
    let n = layout.entities;
    let c_end = n + layout.coarse;
    Ok(PropagationResult {
        h_full: averaged.slice_rows(0, n),
        h_meta_c: averaged.slice_rows(n, c_end),
        h_meta_r: (layout.fine > 0).then(|| averaged.slice_rows(c_end, layout.total())),
        per_layer_cache: cache,
    })
}

/// A normalised expanded graph ready for repeated forward/backward passes.
#[derive(Debug, Clone)]
pub struct Propagator {
    pub norm_adj: SparseMatrix,
    norm_adj_t: SparseMatrix,
    pub num_layers: usize,
    pub layout: BlockLayout,
}

impl Propagator {
    /// Normalises `expanded` (absolute-value degrees, so signed assignment weights are
    /// tolerated).
    pub fn new(expanded: &SparseMatrix, num_layers: usize, layout: BlockLayout) -> Result<Self> {
        if expanded.rows() != layout.total() {
            return Err(Error::dims("Propagator::new", layout.total(), expanded.rows()));
        }
        let norm_adj = sym_normalize_abs(expanded)?;
        let norm_adj_t = norm_adj.transpose();
        Ok(Propagator {
            norm_adj,
            norm_adj_t,
            num_layers,
            layout,
        })
    }

    /// Operator over `[[A, S^c], [S^cᵀ, 0]]`.
    pub fn for_coarse(adj: &SparseMatrix, cs: &CoarseState, num_layers: usize) -> Result<Self> {
        let layout = BlockLayout::coarse(adj.rows(), cs.num_buckets());
        Self::new(&expand_coarse(adj, &cs.s_c)?, num_layers, layout)
    }

    /// Operator over `[[A, S^c, 0], [S^cᵀ, 0, S^r], [0, S^rᵀ, 0]]`.
    pub fn for_fine(adj: &SparseMatrix, cs: &CoarseState, fs: &FineState, num_layers: usize) -> Result<Self> {
        let layout = BlockLayout::fine(adj.rows(), cs.num_buckets(), fs.e_meta_r.rows());
        Self::new(&expand_fine(adj, &cs.s_c, &fs.s_r)?, num_layers, layout)
    }

    pub fn forward(&self, h0: &DenseMatrix) -> Result<PropagationResult> {
        propagate(&self.norm_adj, h0, self.num_layers, self.layout)
    }

    /// Gradient with respect to the stacked layer-0 input, given the gradient with
    /// respect to `h_full` (codebook blocks of the output carry no loss).
    pub fn backward(&self, prop: &PropagationResult, grad_h_full: &DenseMatrix) -> Result<DenseMatrix> {
        if prop.per_layer_cache.len() != self.num_layers + 1 {
            return Err(Error::InvalidArgument(format!(
                "propagation cache holds {} layers, expected {}",
                prop.per_layer_cache.len(),
                self.num_layers + 1
            )));
        }
        if grad_h_full.rows() != self.layout.entities || grad_h_full.cols() != prop.h_full.cols() {
            return Err(Error::dims(
                "Propagator::backward",
                format!("{:?}", prop.h_full.shape()),
                format!("{:?}", grad_h_full.shape()),
            ));
        }
        let d = grad_h_full.cols();
        let pad = DenseMatrix::zeros(self.layout.total() - self.layout.entities, d);
        let g = DenseMatrix::vstack(&[grad_h_full, &pad])?;
        let mut acc = g.clone();
        let mut cur = g;
        for _ in 0..self.num_layers {
            cur = spmm(&self.norm_adj_t, &cur)?;
            acc.add_scaled(&cur, 1.0)?;
        }
        Ok(acc.scale(1.0 / (self.num_layers + 1) as f64))
    }
}

/// `[Ê^c; E^c_meta]`
pub fn stack_coarse_inputs(cs: &CoarseState) -> Result<DenseMatrix> {
    let composed = compose_coarse(cs)?;
    DenseMatrix::vstack(&[&composed, &cs.e_meta_c])
}

/// `[Ê^r; Ê^c_meta; S_λ(E^r_meta)]` where `Ê^r = S^c Ê^c_meta`.
pub fn stack_fine_inputs(cs: &CoarseState, fs: &FineState) -> Result<DenseMatrix> {
    let refined = refine_codebook(cs, fs)?;
    let entities = compose_refined(cs, &refined)?;
    DenseMatrix::vstack(&[&entities, &refined, &fs.thresholded()])
}

/// Chain rule from the stacked layer-0 gradient to `E^c_meta`:
/// `S^cᵀ·G₀[entities] + G₀[codebook]`.
pub fn coarse_layer0_grad(cs: &CoarseState, grad_h0: &DenseMatrix) -> Result<DenseMatrix> {
    let n = cs.num_entities();
    let m = cs.num_buckets();
    if grad_h0.rows() != n + m {
        return Err(Error::dims("coarse_layer0_grad", n + m, grad_h0.rows()));
    }
    let mut g = spmm_t(&cs.s_c, &grad_h0.slice_rows(0, n))?;
    g.add_scaled(&grad_h0.slice_rows(n, n + m), 1.0)?;
    Ok(g)
}

/// Chain rule from the stacked fine layer-0 gradient to `E^r_meta`, through the
/// refined codebook, the mixing weight and the soft-threshold mask.
pub fn fine_layer0_grad(cs: &CoarseState, fs: &FineState, grad_h0: &DenseMatrix) -> Result<DenseMatrix> {
    let n = cs.num_entities();
    let m_c = cs.num_buckets();
    let m_r = fs.e_meta_r.rows();
    if grad_h0.rows() != n + m_c + m_r {
        return Err(Error::dims("fine_layer0_grad", n + m_c + m_r, grad_h0.rows()));
    }
    let mut grad_refined = spmm_t(&cs.s_c, &grad_h0.slice_rows(0, n))?;
    grad_refined.add_scaled(&grad_h0.slice_rows(n, n + m_c), 1.0)?;
    let mut grad_t = grad_h0.slice_rows(n + m_c, n + m_c + m_r);
    if fs.w_cr != 0.0 {
        grad_t.add_scaled(&spmm_t(&fs.s_r, &grad_refined)?, fs.w_cr)?;
    }
    let mask = soft_threshold_mask(&fs.e_meta_r, fs.lambda_thr);
    for (g, m) in grad_t.as_mut_slice().iter_mut().zip(mask.as_slice()) {
        *g *= m;
    }
    Ok(grad_t)
}

/// Gradient of a loss on `h_full` with respect to `E^c_meta`, with `S^c` and the graph
/// held fixed.
pub fn backward_coarse(
    op: &Propagator,
    prop: &PropagationResult,
    grad_h_full: &DenseMatrix,
    cs: &CoarseState,
) -> Result<DenseMatrix> {
    let g0 = op.backward(prop, grad_h_full)?;
    coarse_layer0_grad(cs, &g0)
}

/// Gradient of a loss on `h_full` with respect to `E^r_meta`, with `S^c`, `S^r` and
/// `E^c_meta` frozen.
pub fn backward_fine(
    op: &Propagator,
    prop: &PropagationResult,
    grad_h_full: &DenseMatrix,
    cs: &CoarseState,
    fs: &FineState,
) -> Result<DenseMatrix> {
    let g0 = op.backward(prop, grad_h_full)?;
    fine_layer0_grad(cs, fs, &g0)
}
