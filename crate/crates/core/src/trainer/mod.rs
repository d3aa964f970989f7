//! BPR optimisation of both stages, plus checkpoint files.

mod bpr;
mod checkpoint;
mod config;
mod train;

pub use bpr::{bpr_loss, score, BprOutput};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, StageMarker, MAGIC, VERSION};
pub use config::TrainConfig;
pub use train::{
    derive_seed, entity_embeddings, initial_coarse_state, initial_fine_state, random_assignment, random_baseline_state,
    train_coarse, train_coarse_fixed, train_coarse_with, train_fine, train_fine_with, CoarseOutcome, EpochRecord,
    FineOutcome, Hooks, NoObserver, Phase, TrainLog, TrainObserver, EARLY_STOP_CUTOFF,
};
