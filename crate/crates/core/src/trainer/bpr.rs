use crate::corpus::TrainingTriplet;
use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

/// `ŷ_ui = h_uᵀ h_i`, with item rows offset by `num_users`.
pub fn score(h_full: &DenseMatrix, num_users: usize, user: usize, item: usize) -> Result<f64> {
    if user >= num_users || num_users + item >= h_full.rows() {
        return Err(Error::InvalidArgument(format!(
            "score: (user {user}, item {item}) out of range for {num_users} users and {} items",
            h_full.rows().saturating_sub(num_users)
        )));
    }
    Ok(dot(h_full.row(user), h_full.row(num_users + item)))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BprOutput {
    pub loss: f64,
    pub grad_pos: Vec<f64>,
    pub grad_neg: Vec<f64>,
    /// Gradient with respect to each regularised row.
    pub grad_reg: DenseMatrix,
}

/// `Σ −ln σ(ŷ⁺ − ŷ⁻) + λ‖Θ‖²` with analytic gradients.
pub fn bpr_loss(scores_pos: &[f64], scores_neg: &[f64], reg_embeddings: &DenseMatrix, l2_weight: f64) -> Result<BprOutput> {
    if scores_pos.len() != scores_neg.len() {
        return Err(Error::dims("bpr_loss", scores_pos.len(), scores_neg.len()));
    }
    let mut loss = 0.0;
    let mut grad_pos = Vec::with_capacity(scores_pos.len());
    let mut grad_neg = Vec::with_capacity(scores_pos.len());
    for (&p, &n) in scores_pos.iter().zip(scores_neg) {
        if !(p.is_finite() && n.is_finite()) {
            return Err(Error::NonFinite(format!("bpr score pair ({p}, {n})")));
        }
        let x = p - n;
        loss += softplus(-x);
        let g = -sigmoid(-x);
        grad_pos.push(g);
        grad_neg.push(-g);
    }
    let sq: f64 = reg_embeddings.as_slice().iter().map(|v| v * v).sum();
    loss += l2_weight * sq;
    Ok(BprOutput {
        loss,
        grad_pos,
        grad_neg,
        grad_reg: reg_embeddings.scale(2.0 * l2_weight),
    })
}

/// Loss of one batch and its gradient with respect to the stacked layer-0 input.
///
/// `reg_rows` lists the stacked rows whose layer-0 values are penalised; the caller
/// decides the scope.
pub(crate) fn batch_gradient(
    h_full: &DenseMatrix,
    h0: &DenseMatrix,
    num_users: usize,
    batch: &[TrainingTriplet],
    reg_rows: &[usize],
    l2_weight: f64,
) -> Result<(f64, DenseMatrix, DenseMatrix)> {
    let mut pos = Vec::with_capacity(batch.len());
    let mut neg = Vec::with_capacity(batch.len());
    for t in batch {
        let hu = h_full.row(t.user);
        pos.push(dot(hu, h_full.row(num_users + t.pos_item)));
        neg.push(dot(hu, h_full.row(num_users + t.neg_item)));
    }
    let reg = h0.select_rows(reg_rows);
    let out = bpr_loss(&pos, &neg, &reg, l2_weight)?;

    let d = h_full.cols();
    let mut grad_full = DenseMatrix::zeros(h_full.rows(), d);
    for (k, t) in batch.iter().enumerate() {
        let gp = out.grad_pos[k];
        let gn = out.grad_neg[k];
        let (ip, ineg) = (num_users + t.pos_item, num_users + t.neg_item);
        for j in 0..d {
            let hu = h_full[(t.user, j)];
            let hp = h_full[(ip, j)];
            let hn = h_full[(ineg, j)];
            grad_full.row_mut(t.user)[j] += gp * hp + gn * hn;
            grad_full.row_mut(ip)[j] += gp * hu;
            grad_full.row_mut(ineg)[j] += gn * hu;
        }
    }
    let mut grad_reg_stack = DenseMatrix::zeros(h0.rows(), d);
    for (k, &r) in reg_rows.iter().enumerate() {
        grad_reg_stack.row_mut(r).copy_from_slice(out.grad_reg.row(k));
    }
    Ok((out.loss, grad_full, grad_reg_stack))
}
