//! Order-preserving work mapping.
//!
//! The trainer and the dense extractor split their work into independent
//! jobs whose results must be combined in job order so that floating-point
//! reductions never depend on thread scheduling. [`ChunkMapper`] is the seam
//! where a threaded runtime (the CLI uses rayon) can plug in: any
//! implementation that returns results in job order yields bit-identical
//! numbers to [`SequentialMapper`].

use alloc::vec::Vec;

/// Runs independent jobs `0..count` and returns their results *in job
/// order*, whatever the execution order.
pub trait ChunkMapper {
    fn map_chunks<R: Send>(&self, count: usize, job: &(dyn Fn(usize) -> R + Sync)) -> Vec<R>;
}

/// Single-threaded reference mapper.
#[derive(Clone, Copy, Debug, Default)]
pub struct SequentialMapper;

impl ChunkMapper for SequentialMapper {
    fn map_chunks<R: Send>(&self, count: usize, job: &(dyn Fn(usize) -> R + Sync)) -> Vec<R> {
        (0..count).map(job).collect()
    }
}
