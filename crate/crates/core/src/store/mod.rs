//! Safetensors-compatible checkpoint containers.
//!
//! Layout of one container file:
//!
//! ```text
//! [u64 LE header length N][N bytes JSON header][raw little-endian payload]
//! ```
//!
//! The header maps tensor names to `{dtype, shape, data_offsets}` (offsets are
//! relative to the start of the payload) plus an optional `__metadata__`
//! object of string pairs. Sharded checkpoints are a directory holding
//! several containers and a `*.safetensors.index.json` file whose
//! `weight_map` maps every tensor name to its shard file.

mod dtype;
mod reader;
mod writer;

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use dtype::DType;
pub use reader::{load_tensor, open_checkpoint, Checkpoint};
pub use writer::{content_digest, write_checkpoint, CheckpointWriter, WriterOptions};

/// File name used for single-shard outputs.
pub const SINGLE_FILE_NAME: &str = "model.safetensors";
/// File name of the shard index written next to multi-shard outputs.
pub const INDEX_FILE_NAME: &str = "model.safetensors.index.json";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header in {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },
    #[error("unsupported dtype {dtype:?} for tensor {name}")]
    UnsupportedDtype { name: String, dtype: String },
    #[error(
        "tensor {name}: byte range {begin}..{end} does not match shape {shape:?} x {width} bytes"
    )]
    ByteLengthMismatch {
        name: String,
        begin: u64,
        end: u64,
        shape: Vec<usize>,
        width: usize,
    },
    #[error("tensor {name}: byte range {begin}..{end} exceeds payload of {payload_len} bytes")]
    OutOfBounds {
        name: String,
        begin: u64,
        end: u64,
        payload_len: u64,
    },
    #[error("tensors {first} and {second} have overlapping byte ranges")]
    OverlappingRanges { first: String, second: String },
    #[error("duplicate tensor name {0}")]
    DuplicateTensor(String),
    #[error("shard file {0} is missing")]
    MissingShard(PathBuf),
    #[error("shard index inconsistent: {0}")]
    InconsistentIndex(String),
    #[error("no checkpoint found at {0}")]
    NotACheckpoint(PathBuf),
    #[error("unknown tensor {0}")]
    UnknownTensor(String),
    #[error("tensor {name} holds a non-finite value at element {index} (data corruption)")]
    NonFinite { name: String, index: usize },
    #[error("tensor {name} ({bytes} bytes) exceeds the shard limit of {limit} bytes")]
    TensorExceedsShardLimit {
        name: String,
        bytes: u64,
        limit: u64,
    },
    #[error("tensor {name}: value {value} at element {index} overflows {dtype}")]
    NarrowingOverflow {
        name: String,
        index: usize,
        value: f32,
        dtype: DType,
    },
    #[error("tensor {name}: {values} values for shape {shape:?}")]
    ElementCountMismatch {
        name: String,
        values: usize,
        shape: Vec<usize>,
    },
}

impl StoreError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        StoreError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn is_io(&self) -> bool {
        matches!(self, StoreError::Io { .. } | StoreError::MissingShard(_))
    }
}

/// Which parent (or product) a checkpoint plays in a merge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Base,
    Direct,
    Thinking,
    Merged,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Base => "base",
            Role::Direct => "direct",
            Role::Thinking => "thinking",
            Role::Merged => "merged",
        }
    }
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Header entry of one stored tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorMeta {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    /// Half-open offsets into the payload of the tensor's shard.
    pub byte_range: Range<u64>,
}

impl TensorMeta {
    pub fn numel(&self) -> usize {
        numel(&self.shape)
    }

    pub fn byte_len(&self) -> u64 {
        self.byte_range.end - self.byte_range.start
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Decoded tensor in working precision.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorBuffer {
    pub meta: TensorMeta,
    pub values: Vec<f32>,
}

impl TensorBuffer {
    /// Builds a buffer that will be stored as `dtype`. The byte range is
    /// assigned by the writer.
    pub fn new(
        name: impl Into<String>,
        dtype: DType,
        shape: Vec<usize>,
        values: Vec<f32>,
    ) -> Result<Self, StoreError> {
        let name = name.into();
        if values.len() != numel(&shape) {
            return Err(StoreError::ElementCountMismatch {
                name,
                values: values.len(),
                shape,
            });
        }
        let len = (values.len() * dtype.width()) as u64;
        Ok(TensorBuffer {
            meta: TensorMeta {
                name,
                dtype,
                shape,
                byte_range: 0..len,
            },
            values,
        })
    }

    pub fn name(&self) -> &str {
        &self.meta.name
    }

    pub fn shape(&self) -> &[usize] {
        &self.meta.shape
    }
}

/// Raw header of one container, in file order of appearance.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub(crate) struct HeaderEntry {
    pub dtype: String,
    pub shape: Vec<usize>,
    pub data_offsets: [u64; 2],
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub(crate) struct ShardIndex {
    #[serde(default)]
    pub metadata: BTreeMap<String, serde_json::Value>,
    pub weight_map: BTreeMap<String, String>,
}
