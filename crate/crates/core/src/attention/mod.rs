//! Branch-structured token layout: segment DAG, positions, visibility mask,
//! teacher-forcing batches and a toy transformer to exercise them.

mod dag;
mod equivalence;
pub mod toy;
mod visibility;

pub use dag::{build_dag, BlockInfo, GenerationDag, Segment, SegmentId, SegmentKind};
pub use equivalence::{permutation_equivalence_check, PermutationCheck, PermutationReport};
pub use toy::{ForwardOutput, StepOutput, ToyConfig, ToyError, ToyModel};
pub use visibility::{
    assign_positions, assign_positions_with, batch_from_dag, build_mask, build_training_batch, segment_starts,
    AttentionMask, BatchOptions, PositionConfig, TrainingBatch, VisibilitySpec, REDUCE_OFFSET,
};
