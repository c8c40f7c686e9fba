//! Strength-grid sweeps: plan validation, streaming whole-checkpoint merges
//! and a resumable manifest of the produced checkpoints.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence::{aligned_names, thread_pool};
use crate::merge::{merge_tensor, MergeError, MergeMethod, MergeRecipe, TensorMergeDiagnostic};
use crate::store::{Checkpoint, CheckpointWriter, DType, StoreError, TensorBuffer, WriterOptions};

mod plan;
mod run;

pub use plan::{plan_sweep, GridSpec, MethodSpec, ParentPaths, SweepConfig, SweepPlan};
pub use run::{
    execute_sweep, execute_sweep_with, load_manifest, EntryStatus, ExecuteOptions, ManifestEntry,
    SweepManifest, SweepReport, MANIFEST_FILE_NAME,
};

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("tensor {tensor}: {source}")]
    Merge {
        tensor: String,
        #[source]
        source: MergeError,
    },
    #[error("parents are not aligned: {0}")]
    Misaligned(String),
    #[error("{method} requires a base checkpoint")]
    BaseRequired { method: MergeMethod },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid sweep config: {0}")]
    InvalidConfig(String),
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("parent checkpoint {0} does not exist")]
    MissingParent(PathBuf),
    #[error("manifest in {path} belongs to a different plan ({found}, expected {expected})")]
    PlanMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SweepError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SweepError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn is_io(&self) -> bool {
        match self {
            SweepError::Store(e) => e.is_io(),
            SweepError::Io { .. } | SweepError::MissingParent(_) => true,
            _ => false,
        }
    }
}

/// Storage dtype of merged tensors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DtypePolicy {
    /// Keep the thinking parent's dtype per tensor.
    #[default]
    PreserveSource,
    ForceF32,
}

/// Parent whose non-tensor files (tokenizer, config, chat template) are
/// copied next to each merged checkpoint.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SidecarSource {
    #[default]
    Think,
    Direct,
    None,
}

#[derive(Debug, Clone)]
pub struct MergeOptions {
    pub dtype_policy: DtypePolicy,
    pub shard_limit_bytes: u64,
    /// Tensors merged concurrently; `None` uses every core.
    pub workers: Option<usize>,
}

impl Default for MergeOptions {
    fn default() -> Self {
        MergeOptions {
            dtype_policy: DtypePolicy::default(),
            shard_limit_bytes: WriterOptions::default().shard_limit_bytes,
            workers: None,
        }
    }
}

#[derive(Debug)]
pub struct MergeOutcome {
    pub checkpoint: Checkpoint,
    /// Per-tensor geometry, reported by SLERP only.
    pub diagnostics: Vec<TensorMergeDiagnostic>,
}

fn check_aligned(a: &Checkpoint, b: &Checkpoint) -> Result<Vec<String>, SweepError> {
    aligned_names(a, b).map_err(|e| SweepError::Misaligned(e.to_string()))
}

/// Merges two whole checkpoints tensor by tensor into `out_dir`.
///
/// At most `workers` tensor triples are resident at once; tensors are
/// written in name order, so the output bytes do not depend on the parents'
/// storage order or on the worker count.
pub fn merge_checkpoint(
    direct: &Checkpoint,
    think: &Checkpoint,
    base: Option<&Checkpoint>,
    recipe: &MergeRecipe,
    out_dir: &Path,
    opts: &MergeOptions,
) -> Result<MergeOutcome, SweepError> {
    if recipe.method.requires_base() && base.is_none() {
        return Err(SweepError::BaseRequired {
            method: recipe.method,
        });
    }
    recipe
        .validate(base.is_some())
        .map_err(|source| SweepError::Merge {
            tensor: String::new(),
            source,
        })?;
    let names = check_aligned(direct, think)?;
    let base = if recipe.method.requires_base() {
        base
    } else {
        None
    };
    if let Some(b) = base {
        check_aligned(direct, b)?;
    }

    let mut metadata = BTreeMap::new();
    metadata.insert(
        "merge_method".to_string(),
        recipe.method.as_str().to_string(),
    );
    metadata.insert("merge_strength".to_string(), format!("{}", recipe.strength));
    metadata.insert("merge_seed".to_string(), recipe.seed.to_string());
    let mut writer = CheckpointWriter::create(
        out_dir,
        WriterOptions {
            shard_limit_bytes: opts.shard_limit_bytes,
            default_dtype: match opts.dtype_policy {
                DtypePolicy::ForceF32 => Some(DType::F32),
                DtypePolicy::PreserveSource => None,
            },
            metadata,
            ..Default::default()
        },
    )?;

    let pool = thread_pool(opts.workers);
    let chunk = pool.current_num_threads().max(1);
    let mut diagnostics = Vec::new();
    for group in names.chunks(chunk) {
        let merged: Vec<(TensorBuffer, Option<TensorMergeDiagnostic>)> = pool.install(|| {
            group
                .par_iter()
                .map(|name| merge_one(direct, think, base, recipe, name))
                .collect::<Result<_, SweepError>>()
        })?;
        for (buf, diag) in merged {
            writer.push(&buf)?;
            diagnostics.extend(diag);
        }
    }
    Ok(MergeOutcome {
        checkpoint: writer.finish()?,
        diagnostics,
    })
}

fn merge_one(
    direct: &Checkpoint,
    think: &Checkpoint,
    base: Option<&Checkpoint>,
    recipe: &MergeRecipe,
    name: &str,
) -> Result<(TensorBuffer, Option<TensorMergeDiagnostic>), SweepError> {
    let d = direct.load_tensor(name)?;
    let t = think.load_tensor(name)?;
    let b = base.map(|b| b.load_tensor(name)).transpose()?;
    let out = merge_tensor(
        recipe,
        name,
        &t.meta.shape,
        &d.values,
        &t.values,
        b.as_ref().map(|b| b.values.as_slice()),
    )
    .map_err(|source| SweepError::Merge {
        tensor: name.to_string(),
        source,
    })?;
    let buf = TensorBuffer::new(name, t.meta.dtype, t.meta.shape.clone(), out.values)?;
    Ok((buf, out.diagnostic))
}

/// Copies the regular non-checkpoint files of `src_dir` into `out_dir`
/// byte for byte and returns their names.
pub fn copy_sidecars(src_dir: &Path, out_dir: &Path) -> Result<Vec<String>, SweepError> {
    let mut copied = Vec::new();
    let entries = std::fs::read_dir(src_dir).map_err(|e| SweepError::io(src_dir, e))?;
    for entry in entries {
        let p = entry.map_err(|e| SweepError::io(src_dir, e))?.path();
        let Some(name) = p.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if !p.is_file()
            || name.starts_with('.')
            || name.ends_with(".safetensors")
            || name.ends_with(".safetensors.index.json")
        {
            continue;
        }
        let dst = out_dir.join(name);
        std::fs::copy(&p, &dst).map_err(|e| SweepError::io(&dst, e))?;
        copied.push(name.to_string());
    }
    copied.sort();
    Ok(copied)
}

/// `<root>/<method>/<strength with four decimals>`.
pub fn entry_dir(root: &Path, method: MergeMethod, strength: f64) -> PathBuf {
    root.join(relative_entry_dir(method, strength))
}

pub(crate) fn relative_entry_dir(method: MergeMethod, strength: f64) -> PathBuf {
    Path::new(method.as_str()).join(format!("{strength:.4}"))
}

#[cfg(test)]
mod tests;
