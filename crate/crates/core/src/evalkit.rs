//! Full-ranking evaluation and parameter accounting.

use std::collections::HashSet;
use std::fmt;

use rayon::prelude::*;

use crate::codebook::{CoarseState, FineState};
use crate::corpus::InteractionSet;
use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

/// Cutoffs reported by default.
pub const DEFAULT_CUTOFFS: [usize; 3] = [5, 10, 20];

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Items by descending `h_uᵀ h_i`, skipping `exclude`. Equal scores keep ascending item
/// order. Item `i` lives at row `num_users + i` of `h_full`.
pub fn rank_items(h_full: &DenseMatrix, num_users: usize, user: usize, exclude: &HashSet<usize>, top_n: usize) -> Vec<usize> {
    let hu = h_full.row(user);
    let mut scored: Vec<(usize, f64)> = (0..h_full.rows() - num_users)
        .filter(|i| !exclude.contains(i))
        .map(|i| (i, dot(hu, h_full.row(num_users + i))))
        .collect();
    let order = |a: &(usize, f64), b: &(usize, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
    if top_n < scored.len() {
        scored.select_nth_unstable_by(top_n, order);
        scored.truncate(top_n);
    }
    scored.sort_by(order);
    scored.into_iter().map(|(i, _)| i).collect()
}

/// Binary-relevance NDCG with gain `1/log2(rank+1)`.
pub fn ndcg_at_n(ranked: &[usize], relevant: &HashSet<usize>, n: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let dcg: f64 = ranked
        .iter()
        .take(n)
        .enumerate()
        .filter(|(_, i)| relevant.contains(i))
        .map(|(r, _)| 1.0 / ((r + 2) as f64).log2())
        .sum();
    let idcg: f64 = (0..relevant.len().min(n)).map(|r| 1.0 / ((r + 2) as f64).log2()).sum();
    dcg / idcg
}

pub fn recall_at_n(ranked: &[usize], relevant: &HashSet<usize>, n: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let hits = ranked.iter().take(n).filter(|i| relevant.contains(i)).count();
    hits as f64 / relevant.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRow {
    pub cutoff: usize,
    pub ndcg: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTable {
    pub rows: Vec<MetricRow>,
    /// Users with a non-empty target split.
    pub users_evaluated: usize,
}

impl MetricsTable {
    pub fn get(&self, cutoff: usize) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.cutoff == cutoff)
    }

    pub fn ndcg(&self, cutoff: usize) -> f64 {
        self.get(cutoff).map_or(0.0, |r| r.ndcg)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("cutoff,ndcg,recall\n");
        for r in &self.rows {
            out.push_str(&format!("{},{:.6},{:.6}\n", r.cutoff, r.ndcg, r.recall));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSplit {
    Validation,
    Test,
}

/// Averages per-user NDCG and recall over users whose `split` items are non-empty.
/// Train items are excluded from each user's ranking.
pub fn evaluate(h_full: &DenseMatrix, set: &InteractionSet, split: EvalSplit, cutoffs: &[usize]) -> Result<MetricsTable> {
    if h_full.rows() != set.num_entities() {
        return Err(Error::dims("evaluate", set.num_entities(), h_full.rows()));
    }
    if cutoffs.is_empty() || cutoffs.contains(&0) {
        return Err(Error::InvalidArgument("cutoffs must be non-empty and positive".into()));
    }
    let pairs = match split {
        EvalSplit::Validation => &set.validation,
        EvalSplit::Test => &set.test,
    };
    let targets = set.items_by_user(pairs);
    let train = set.train_items_by_user();
    let max_cut = *cutoffs.iter().max().expect("non-empty");
    let per_user: Vec<Option<Vec<(f64, f64)>>> = (0..set.num_users)
        .into_par_iter()
        .map(|u| {
            if targets[u].is_empty() {
                return None;
            }
            let exclude: HashSet<usize> = train[u].iter().copied().collect();
            let relevant: HashSet<usize> = targets[u].iter().copied().collect();
            let ranked = rank_items(h_full, set.num_users, u, &exclude, max_cut);
            Some(
                cutoffs
                    .iter()
                    .map(|&n| (ndcg_at_n(&ranked, &relevant, n), recall_at_n(&ranked, &relevant, n)))
                    .collect(),
            )
        })
        .collect();
    let mut sums = vec![(0.0, 0.0); cutoffs.len()];
    let mut count = 0usize;
    for metrics in per_user.into_iter().flatten() {
        count += 1;
        for (s, (nd, rc)) in sums.iter_mut().zip(metrics) {
            s.0 += nd;
            s.1 += rc;
        }
    }
    let denom = count.max(1) as f64;
    Ok(MetricsTable {
        rows: cutoffs
            .iter()
            .zip(sums)
            .map(|(&cutoff, (nd, rc))| MetricRow {
                cutoff,
                ndcg: nd / denom,
                recall: rc / denom,
            })
            .collect(),
        users_evaluated: count,
    })
}

/// Stored-parameter count: assignment nonzeros plus codebook entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ParamAudit {
    pub coarse_assignment_nnz: usize,
    pub coarse_codebook: usize,
    pub fine_assignment_nnz: usize,
    pub fine_codebook_nnz: usize,
    pub total: usize,
}

impl ParamAudit {
    fn from_parts(coarse_assignment_nnz: usize, coarse_codebook: usize, fine_assignment_nnz: usize, fine_codebook_nnz: usize) -> Self {
        ParamAudit {
            coarse_assignment_nnz,
            coarse_codebook,
            fine_assignment_nnz,
            fine_codebook_nnz,
            total: coarse_assignment_nnz + coarse_codebook + fine_assignment_nnz + fine_codebook_nnz,
        }
    }

    /// Budget implied by shapes alone, assuming full rows in both assignments and
    /// `fine_nonzero_fraction` of the fine codebook surviving the threshold.
    pub fn from_shape(
        num_entities: usize,
        t_c: usize,
        m_c: usize,
        d: usize,
        fine: Option<(usize, usize, f64)>,
    ) -> Self {
        let (fa, fc) = match fine {
            Some((m_r, t_r, frac)) => (t_r.min(m_r) * m_c, (frac * (m_r * d) as f64).round() as usize),
            None => (0, 0),
        };
        Self::from_parts(t_c.min(m_c) * num_entities, m_c * d, fa, fc)
    }
}

impl fmt::Display for ParamAudit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "coarse_assignment_nnz={}", self.coarse_assignment_nnz)?;
        writeln!(f, "coarse_codebook={}", self.coarse_codebook)?;
        writeln!(f, "fine_assignment_nnz={}", self.fine_assignment_nnz)?;
        writeln!(f, "fine_codebook_nnz={}", self.fine_codebook_nnz)?;
        writeln!(f, "total={}", self.total)
    }
}

/// Counts what a model actually stores.
pub fn audit_params(coarse: &CoarseState, fine: Option<&FineState>) -> ParamAudit {
    let (fa, fc) = fine.map_or((0, 0), |fs| (fs.s_r.nnz(), fs.thresholded().nnz()));
    ParamAudit::from_parts(coarse.s_c.nnz(), coarse.e_meta_c.rows() * coarse.e_meta_c.cols(), fa, fc)
}
