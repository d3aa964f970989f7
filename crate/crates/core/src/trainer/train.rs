use std::collections::BTreeSet;
use std::path::Path;

use log::{debug, info, warn};
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::bpr::batch_gradient;
use super::checkpoint::{save_checkpoint, Checkpoint, StageMarker};
use super::config::TrainConfig;
use crate::assign::{
    bridged_product, seed_coarse_assignment, seed_fine_assignment, sparsify_topk_dense, update_coarse_assignment,
};
use crate::codebook::{init_fine_codebook, CoarseState, FineState};
use crate::corpus::{sample_triplets, InteractionSet, TrainingTriplet};
use crate::error::{Error, Result};
use crate::evalkit::{evaluate, EvalSplit};
use crate::graphkit::{build_interaction_adjacency, partition_graph, SparseMatrix};
use crate::numerics::{adam_step, xavier_init, AdamConfig, AdamState, DenseMatrix, SparsePcaOptions};
use crate::propagate::{
    coarse_layer0_grad, fine_layer0_grad, stack_coarse_inputs, stack_fine_inputs, PropagationResult, Propagator,
};

/// Cutoff of the validation NDCG used for early stopping and model selection.
pub const EARLY_STOP_CUTOFF: usize = 20;

mod stream {
    pub const INIT: u64 = 1;
    pub const PARTITION_COARSE: u64 = 2;
    pub const PARTITION_FINE: u64 = 3;
    pub const FINE_ROWS: u64 = 4;
    pub const SAMPLE_COARSE: u64 = 5;
    pub const SAMPLE_FINE: u64 = 6;
    pub const SHUFFLE_COARSE: u64 = 7;
    pub const SHUFFLE_FINE: u64 = 8;
    pub const BASELINE: u64 = 9;
}

/// Seed of a named stream at a given step, so every random draw is addressable by
/// `(seed, stream, step)` alone.
pub fn derive_seed(seed: u64, stream: u64, step: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ step.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Evaluation of the state before any optimisation.
    Init,
    FixedAssignment,
    AssignmentUpdates,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub stage: StageMarker,
    pub phase: Phase,
    /// Counts from 0 (the initial state) across both phases of a stage.
    pub epoch: usize,
    /// Mean loss per triplet; NaN for the initial evaluation.
    pub loss: f64,
    pub val_ndcg20: f64,
    pub assignment_updated: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,val_ndcg20\n");
        for r in &self.records {
            out.push_str(&format!("{},{:.8},{:.8}\n", r.epoch, r.loss, r.val_ndcg20));
        }
        out
    }
}

/// Callbacks fired while a stage runs. Every method defaults to doing nothing.
pub trait TrainObserver {
    fn epoch_end(&mut self, _record: &EpochRecord) {}
    fn coarse_assignment_updated(&mut self, _epoch: usize, _s_c: &SparseMatrix) {}
    /// `dense` is the bridged product before per-row sparsification.
    fn fine_assignment_updated(&mut self, _epoch: usize, _dense: &DenseMatrix, _s_r: &SparseMatrix) {}
}

pub struct NoObserver;

impl TrainObserver for NoObserver {}

/// Optional side channels of a training run.
pub struct Hooks<'a> {
    pub observer: &'a mut dyn TrainObserver,
    /// Where the best state so far is written if the loss stops being finite.
    pub emergency_checkpoint: Option<&'a Path>,
}

impl<'a> Hooks<'a> {
    pub fn with_observer(observer: &'a mut dyn TrainObserver) -> Self {
        Hooks {
            observer,
            emergency_checkpoint: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CoarseOutcome {
    pub state: CoarseState,
    pub log: TrainLog,
    pub best_metric: f64,
    pub epochs: usize,
}

#[derive(Debug, Clone)]
pub struct FineOutcome {
    pub state: FineState,
    pub log: TrainLog,
    pub best_metric: f64,
    pub epochs: usize,
}

trait StageModel: Clone {
    const STAGE: StageMarker;
    const SAMPLE_STREAM: u64;
    const SHUFFLE_STREAM: u64;

    fn propagator(&self, adj: &SparseMatrix, num_layers: usize) -> Result<Propagator>;
    fn h0(&self) -> Result<DenseMatrix>;
    fn reg_rows(&self, entities: &BTreeSet<usize>) -> Vec<usize>;
    fn param_grad(&self, grad_h0: &DenseMatrix) -> Result<DenseMatrix>;
    fn param_mut(&mut self) -> &mut DenseMatrix;
    fn param_name(&self) -> &'static str;
    fn update_assignment(
        &mut self,
        prop: &PropagationResult,
        cfg: &TrainConfig,
        epoch: usize,
        observer: &mut dyn TrainObserver,
    ) -> Result<()>;
    fn checkpoint(&self, cfg: &TrainConfig, set: &InteractionSet, epoch: usize, best: f64) -> Checkpoint;
}

#[derive(Clone)]
struct CoarseModel {
    cs: CoarseState,
}

impl StageModel for CoarseModel {
    const STAGE: StageMarker = StageMarker::Coarse;
    const SAMPLE_STREAM: u64 = stream::SAMPLE_COARSE;
    const SHUFFLE_STREAM: u64 = stream::SHUFFLE_COARSE;

    fn propagator(&self, adj: &SparseMatrix, num_layers: usize) -> Result<Propagator> {
        Propagator::for_coarse(adj, &self.cs, num_layers)
    }

    fn h0(&self) -> Result<DenseMatrix> {
        stack_coarse_inputs(&self.cs)
    }

    fn reg_rows(&self, entities: &BTreeSet<usize>) -> Vec<usize> {
        entities.iter().copied().collect()
    }

    fn param_grad(&self, grad_h0: &DenseMatrix) -> Result<DenseMatrix> {
        coarse_layer0_grad(&self.cs, grad_h0)
    }

    fn param_mut(&mut self) -> &mut DenseMatrix {
        &mut self.cs.e_meta_c
    }

    fn param_name(&self) -> &'static str {
        "e_meta_c"
    }

    fn update_assignment(
        &mut self,
        prop: &PropagationResult,
        cfg: &TrainConfig,
        epoch: usize,
        observer: &mut dyn TrainObserver,
    ) -> Result<()> {
        let s_c = update_coarse_assignment(&prop.h_full, &prop.h_meta_c, cfg.t_c, cfg.topk_mode)?;
        observer.coarse_assignment_updated(epoch, &s_c);
        self.cs.s_c = s_c;
        Ok(())
    }

    fn checkpoint(&self, cfg: &TrainConfig, set: &InteractionSet, epoch: usize, best: f64) -> Checkpoint {
        Checkpoint {
            config: cfg.clone(),
            stage: StageMarker::Coarse,
            num_users: set.num_users,
            num_items: set.num_items,
            coarse: self.cs.clone(),
            fine: None,
            epoch,
            best_metric: best,
        }
    }
}

#[derive(Clone)]
struct FineModel<'a> {
    cs: &'a CoarseState,
    fs: FineState,
}

impl StageModel for FineModel<'_> {
    const STAGE: StageMarker = StageMarker::Fine;
    const SAMPLE_STREAM: u64 = stream::SAMPLE_FINE;
    const SHUFFLE_STREAM: u64 = stream::SHUFFLE_FINE;

    fn propagator(&self, adj: &SparseMatrix, num_layers: usize) -> Result<Propagator> {
        Propagator::for_fine(adj, self.cs, &self.fs, num_layers)
    }

    fn h0(&self) -> Result<DenseMatrix> {
        stack_fine_inputs(self.cs, &self.fs)
    }

    /// Entity rows plus every fine row reachable from them through `S^c` then `S^r`.
    fn reg_rows(&self, entities: &BTreeSet<usize>) -> Vec<usize> {
        let offset = self.cs.num_entities() + self.cs.num_buckets();
        let mut fine = BTreeSet::new();
        for &p in entities {
            for &c in self.cs.s_c.row(p).0 {
                fine.extend(self.fs.s_r.row(c).0.iter().copied());
            }
        }
        entities.iter().copied().chain(fine.into_iter().map(|f| offset + f)).collect()
    }

    fn param_grad(&self, grad_h0: &DenseMatrix) -> Result<DenseMatrix> {
        fine_layer0_grad(self.cs, &self.fs, grad_h0)
    }

    fn param_mut(&mut self) -> &mut DenseMatrix {
        &mut self.fs.e_meta_r
    }

    fn param_name(&self) -> &'static str {
        "e_meta_r"
    }

    fn update_assignment(
        &mut self,
        prop: &PropagationResult,
        cfg: &TrainConfig,
        epoch: usize,
        observer: &mut dyn TrainObserver,
    ) -> Result<()> {
        let h_meta_r = prop
            .h_meta_r
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("fine propagation lacks the fine block".into()))?;
        let dense = bridged_product(&prop.h_full, &prop.h_meta_c, h_meta_r)?;
        let s_r = sparsify_topk_dense(&dense, cfg.t_r, cfg.topk_mode)?;
        observer.fine_assignment_updated(epoch, &dense, &s_r);
        self.fs.s_r = s_r;
        Ok(())
    }

    fn checkpoint(&self, cfg: &TrainConfig, set: &InteractionSet, epoch: usize, best: f64) -> Checkpoint {
        Checkpoint {
            config: cfg.clone(),
            stage: StageMarker::Fine,
            num_users: set.num_users,
            num_items: set.num_items,
            coarse: self.cs.clone(),
            fine: Some(self.fs.clone()),
            epoch,
            best_metric: best,
        }
    }
}

struct Runner<'a, 'h> {
    set: &'a InteractionSet,
    cfg: &'a TrainConfig,
    adj: &'a SparseMatrix,
    hooks: Hooks<'h>,
    log: TrainLog,
    epoch: usize,
}

impl<'a, 'h> Runner<'a, 'h> {
    fn validation_metric(&self, op: &Propagator, h0: &DenseMatrix) -> Result<f64> {
        let prop = op.forward(h0)?;
        Ok(evaluate(&prop.h_full, self.set, EvalSplit::Validation, &[EARLY_STOP_CUTOFF])?.ndcg(EARLY_STOP_CUTOFF))
    }

    fn record(&mut self, stage: StageMarker, phase: Phase, loss: f64, metric: f64, updated: bool) {
        let rec = EpochRecord {
            stage,
            phase,
            epoch: self.epoch,
            loss,
            val_ndcg20: metric,
            assignment_updated: updated,
        };
        info!(
            "{:?} {:?} epoch {}: loss {:.6} val ndcg@20 {:.6}{}",
            stage,
            phase,
            rec.epoch,
            loss,
            metric,
            if updated { " (assignment updated)" } else { "" }
        );
        self.hooks.observer.epoch_end(&rec);
        self.log.records.push(rec);
    }

    fn batches(&self, stream_sample: u64, stream_shuffle: u64) -> Result<Vec<TrainingTriplet>> {
        let step = self.epoch as u64;
        let mut triplets = sample_triplets(
            self.set,
            self.cfg.negatives_per_positive,
            derive_seed(self.cfg.seed, stream_sample, step),
        )?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.cfg.seed, stream_shuffle, step));
        triplets.shuffle(&mut rng);
        Ok(triplets)
    }

    /// One pass over freshly sampled triplets. Returns the mean loss per triplet.
    fn train_epoch<M: StageModel>(&mut self, model: &mut M, op: &Propagator, adam: &mut AdamState) -> Result<f64> {
        let triplets = self.batches(M::SAMPLE_STREAM, M::SHUFFLE_STREAM)?;
        let size = if self.cfg.batch_size == 0 {
            triplets.len().max(1)
        } else {
            self.cfg.batch_size
        };
        let nu = self.set.num_users;
        let mut total = 0.0;
        for batch in triplets.chunks(size) {
            let h0 = model.h0()?;
            let prop = op.forward(&h0)?;
            let mut entities = BTreeSet::new();
            for t in batch {
                entities.insert(t.user);
                entities.insert(nu + t.pos_item);
                entities.insert(nu + t.neg_item);
            }
            let reg_rows = model.reg_rows(&entities);
            let (loss, grad_full, grad_reg) = batch_gradient(&prop.h_full, &h0, nu, batch, &reg_rows, self.cfg.l2_weight)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch: self.epoch,
                    loss,
                });
            }
            let mut g0 = op.backward(&prop, &grad_full)?;
            g0.add_scaled(&grad_reg, 1.0)?;
            let grad = model.param_grad(&g0)?;
            let name = model.param_name();
            adam_step(name, model.param_mut(), &grad, adam)?;
            total += loss;
        }
        Ok(total / triplets.len().max(1) as f64)
    }

    /// Both phases of one stage with early stopping on validation NDCG@20. The best
    /// state seen is restored at the end of each phase.
    fn run_stage<M: StageModel>(&mut self, mut model: M, lr: f64, patience: usize, freq: usize, phases: &[Phase]) -> Result<(M, f64)> {
        let mut op = model.propagator(self.adj, self.cfg.num_layers)?;
        let mut adam = {
            let p = model.param_mut();
            AdamState::new(p.rows(), p.cols(), AdamConfig::with_lr(lr))
        };
        self.epoch = 0;
        let init_metric = self.validation_metric(&op, &model.h0()?)?;
        self.record(M::STAGE, Phase::Init, f64::NAN, init_metric, false);
        let mut best = (model.clone(), init_metric);

        for &phase in phases {
            let mut stale = 0usize;
            for phase_epoch in 0..self.cfg.max_epochs {
                self.epoch += 1;
                let loss = match self.train_epoch(&mut model, &op, &mut adam) {
                    Err(e @ (Error::Diverged { .. } | Error::NonFiniteGradient(_) | Error::NonFinite(_))) => {
                        if let Some(path) = self.hooks.emergency_checkpoint {
                            warn!("training failed ({e}); writing best state to {}", path.display());
                            save_checkpoint(path, &best.0.checkpoint(self.cfg, self.set, self.epoch, best.1))?;
                        }
                        return Err(e);
                    }
                    other => other?,
                };
                let updated = phase == Phase::AssignmentUpdates && phase_epoch % freq == 0;
                if updated {
                    let prop = op.forward(&model.h0()?)?;
                    model.update_assignment(&prop, self.cfg, self.epoch, &mut *self.hooks.observer)?;
                    op = model.propagator(self.adj, self.cfg.num_layers)?;
                }
                let metric = self.validation_metric(&op, &model.h0()?)?;
                self.record(M::STAGE, phase, loss, metric, updated);
                if metric > best.1 {
                    best = (model.clone(), metric);
                    stale = 0;
                } else {
                    stale += 1;
                    if stale >= patience {
                        debug!("{phase:?}: no improvement for {patience} epochs");
                        break;
                    }
                }
            }
            model = best.0.clone();
            op = model.propagator(self.adj, self.cfg.num_layers)?;
        }
        Ok((model, best.1))
    }
}

fn prepare(set: &InteractionSet, cfg: &TrainConfig) -> Result<SparseMatrix> {
    cfg.validate()?;
    if set.validation.is_empty() {
        warn!("validation split is empty; early stopping sees a constant metric");
    }
    Ok(build_interaction_adjacency(set))
}

/// Entity-to-bucket seeding from a balanced partition of the interaction graph.
pub fn initial_coarse_state(set: &InteractionSet, adj: &SparseMatrix, cfg: &TrainConfig) -> Result<CoarseState> {
    let n = set.num_entities();
    if cfg.m_c > n {
        return Err(Error::Config(format!("m_c ({}) exceeds the {n} entities", cfg.m_c)));
    }
    let e = xavier_init(cfg.m_c, cfg.d, derive_seed(cfg.seed, stream::INIT, 0));
    let part = partition_graph(adj, cfg.m_c, derive_seed(cfg.seed, stream::PARTITION_COARSE, 0))?;
    let s_c = seed_coarse_assignment(&part, cfg.m_c, cfg.w_star, cfg.t_c)?;
    CoarseState::new(e, s_c)
}

/// Coarse stage: fixed-assignment training, then training interleaved with
/// pseudo-inverse assignment updates every `f_c` epochs.
pub fn train_coarse(set: &InteractionSet, cfg: &TrainConfig) -> Result<CoarseOutcome> {
    train_coarse_with(set, cfg, Hooks::with_observer(&mut NoObserver))
}

pub fn train_coarse_with(set: &InteractionSet, cfg: &TrainConfig, hooks: Hooks<'_>) -> Result<CoarseOutcome> {
    let adj = prepare(set, cfg)?;
    let cs = initial_coarse_state(set, &adj, cfg)?;
    run_coarse(set, cfg, &adj, cs, hooks, &[Phase::FixedAssignment, Phase::AssignmentUpdates])
}

/// Trains only the coarse codebook, keeping the given assignment throughout.
pub fn train_coarse_fixed(set: &InteractionSet, cfg: &TrainConfig, cs: CoarseState) -> Result<CoarseOutcome> {
    let adj = prepare(set, cfg)?;
    run_coarse(set, cfg, &adj, cs, Hooks::with_observer(&mut NoObserver), &[Phase::FixedAssignment])
}

fn run_coarse(
    set: &InteractionSet,
    cfg: &TrainConfig,
    adj: &SparseMatrix,
    cs: CoarseState,
    hooks: Hooks<'_>,
    phases: &[Phase],
) -> Result<CoarseOutcome> {
    if cs.num_entities() != set.num_entities() {
        return Err(Error::dims("train_coarse", set.num_entities(), cs.num_entities()));
    }
    let mut runner = Runner {
        set,
        cfg,
        adj,
        hooks,
        log: TrainLog::default(),
        epoch: 0,
    };
    let (model, best) = runner.run_stage(CoarseModel { cs }, cfg.lr_coarse, cfg.patience_coarse, cfg.f_c, phases)?;
    Ok(CoarseOutcome {
        state: model.cs,
        best_metric: best,
        epochs: runner.epoch,
        log: runner.log,
    })
}

/// Every entity gets `t_c` distinct buckets drawn uniformly, each weighted `1/t_c`.
pub fn random_assignment(num_entities: usize, m_c: usize, t_c: usize, seed: u64) -> Result<SparseMatrix> {
    if t_c == 0 || t_c > m_c {
        return Err(Error::InvalidArgument(format!("cannot draw {t_c} of {m_c} buckets")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = 1.0 / t_c as f64;
    let mut t = Vec::with_capacity(num_entities * t_c);
    for p in 0..num_entities {
        for c in sample(&mut rng, m_c, t_c) {
            t.push((p, c, w));
        }
    }
    SparseMatrix::from_triplets(num_entities, m_c, t)
}

/// Same codebook shape and assignment sparsity as the coarse model, but a random frozen
/// assignment.
pub fn random_baseline_state(set: &InteractionSet, cfg: &TrainConfig) -> Result<CoarseState> {
    let e = xavier_init(cfg.m_c, cfg.d, derive_seed(cfg.seed, stream::INIT, 0));
    let s = random_assignment(set.num_entities(), cfg.m_c, cfg.t_c, derive_seed(cfg.seed, stream::BASELINE, 0))?;
    CoarseState::new(e, s)
}

/// Fine stage with the coarse state frozen: fixed-assignment training of the sparse
/// fine codebook, then bridged assignment updates every `f_r` epochs.
pub fn train_fine(set: &InteractionSet, coarse: &CoarseState, cfg: &TrainConfig) -> Result<FineOutcome> {
    train_fine_with(set, coarse, cfg, Hooks::with_observer(&mut NoObserver))
}

/// Sparse-PCA codebook plus partition-bridged assignment.
pub fn initial_fine_state(set: &InteractionSet, adj: &SparseMatrix, coarse: &CoarseState, cfg: &TrainConfig) -> Result<FineState> {
    let pca = SparsePcaOptions {
        alpha: cfg.alpha,
        max_iter: cfg.pca_max_iter,
        ..Default::default()
    };
    let e_r = init_fine_codebook(
        coarse,
        cfg.m_r,
        cfg.d_r,
        &pca,
        cfg.row_selection,
        derive_seed(cfg.seed, stream::FINE_ROWS, 0),
    )?;
    if cfg.m_r > set.num_entities() {
        return Err(Error::Config(format!("m_r ({}) exceeds the {} entities", cfg.m_r, set.num_entities())));
    }
    let part = partition_graph(adj, cfg.m_r, derive_seed(cfg.seed, stream::PARTITION_FINE, 0))?;
    let s_r = seed_fine_assignment(&coarse.s_c, &part, cfg.w_star, cfg.t_r)?;
    FineState::new(e_r, s_r, cfg.w_cr, cfg.lambda_thr)
}

pub fn train_fine_with(set: &InteractionSet, coarse: &CoarseState, cfg: &TrainConfig, hooks: Hooks<'_>) -> Result<FineOutcome> {
    let adj = prepare(set, cfg)?;
    if coarse.num_entities() != set.num_entities() || coarse.num_buckets() != cfg.m_c || coarse.dim() != cfg.d {
        return Err(Error::Config(format!(
            "coarse state ({} entities, {} buckets, d={}) does not match data/config ({} entities, m_c={}, d={})",
            coarse.num_entities(),
            coarse.num_buckets(),
            coarse.dim(),
            set.num_entities(),
            cfg.m_c,
            cfg.d
        )));
    }
    let fs = initial_fine_state(set, &adj, coarse, cfg)?;
    info!(
        "fine codebook: {} of {} entries survive the threshold",
        fs.thresholded().nnz(),
        fs.e_meta_r.rows() * fs.e_meta_r.cols()
    );
    let mut runner = Runner {
        set,
        cfg,
        adj: &adj,
        hooks,
        log: TrainLog::default(),
        epoch: 0,
    };
    let (model, best) = runner.run_stage(
        FineModel { cs: coarse, fs },
        cfg.lr_fine,
        cfg.patience_fine,
        cfg.f_r,
        &[Phase::FixedAssignment, Phase::AssignmentUpdates],
    )?;
    Ok(FineOutcome {
        state: model.fs,
        best_metric: best,
        epochs: runner.epoch,
        log: runner.log,
    })
}

/// Propagated entity embeddings `H_full` of a coarse or fine model.
pub fn entity_embeddings(set: &InteractionSet, coarse: &CoarseState, fine: Option<&FineState>, num_layers: usize) -> Result<DenseMatrix> {
    let adj = build_interaction_adjacency(set);
    let prop = match fine {
        None => Propagator::for_coarse(&adj, coarse, num_layers)?.forward(&stack_coarse_inputs(coarse)?)?,
        Some(fs) => Propagator::for_fine(&adj, coarse, fs, num_layers)?.forward(&stack_fine_inputs(coarse, fs)?)?,
    };
    Ok(prop.h_full)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ_by_stream_and_step() {
        let a = derive_seed(7, 1, 0);
        assert_ne!(a, derive_seed(7, 2, 0));
        assert_ne!(a, derive_seed(7, 1, 1));
        assert_ne!(a, derive_seed(8, 1, 0));
        assert_eq!(a, derive_seed(7, 1, 0));
    }

    #[test]
    fn random_assignment_rows() {
        let s = random_assignment(5, 4, 2, 1).unwrap();
        for r in 0..5 {
            assert_eq!(s.row_nnz(r), 2);
            assert!(s.row(r).1.iter().all(|&v| v == 0.5));
        }
        assert!(random_assignment(5, 2, 3, 1).is_err());
    }
}
