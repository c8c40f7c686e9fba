//! Training-free merging of a "direct" and a "thinking" model checkpoint.
//!
//! The crate is organised around the pipeline a merge study runs through:
//!
//! - [`store`]: reading and writing safetensors-style checkpoint containers,
//!   single-file or sharded, with lazy per-tensor access.
//! - [`merge`]: per-tensor implementations of ten merging strategies
//!   (weighted average, SLERP, DARE, TIES, EMR, LORE, TWIN and three top-k
//!   strategies).
//! - [`divergence`]: parameter-space statistics between two parents
//!   (delta histogram, relative L2 distance, cumulative squared-delta curve)
//!   and the DARE pruning probe.
//! - [`sweep`]: strength-grid sweeps producing merged checkpoints with a
//!   resumable manifest.
//! - [`pareto`]: accuracy/token-cost analytics over evaluation records
//!   (bootstrap CIs, Pareto fronts, Pareto improvements, phase changes).
//! - [`cli`]: the `merge-spectrum` command line entry point.
//!
//! See the `examples/` directory of this crate for one runnable program per
//! capability.

pub mod cli;
pub mod divergence;
pub mod error;
pub mod merge;
pub mod pareto;
pub mod store;
pub mod sweep;

pub use error::{Error, Result};
pub use merge::{MergeMethod, MergeRecipe};
pub use store::{open_checkpoint, write_checkpoint, Checkpoint, DType, Role, TensorBuffer};
