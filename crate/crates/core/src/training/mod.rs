//! Loss terms, optimiser and the full-batch training loop.

mod adam;
mod losses;
mod trainer;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use losses::{
    alignment_loss, entropy_loss, infonce, reconstruction_loss, semantic_loss, semantic_target, total_loss, LossVars,
    COSINE_EPS,
};
pub use trainer::{train, LossRecord, LossTrace, Objective, ObjectiveVars, Trainer, TRACE_HEADER};
