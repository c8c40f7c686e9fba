use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{aligned_names, thread_pool, write_file, DivergenceError};
use crate::merge::{dare_process, DropMask};
use crate::store::{
    content_digest, Checkpoint, CheckpointWriter, DType, TensorBuffer, WriterOptions,
};

/// Random stream tag of the probe's masks; distinct from merge-time DARE.
pub const PROBE_STREAM: &str = "dare_probe";

#[derive(Debug, Clone)]
pub struct ProbeOptions {
    pub rates: Vec<f64>,
    pub seed: u64,
    pub out_root: PathBuf,
    /// Storage dtype of the outputs; `None` keeps the model's dtypes.
    pub dtype: Option<DType>,
    pub shard_limit_bytes: u64,
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeEntry {
    pub drop_rate: f64,
    pub output_path: PathBuf,
    pub tensor_count: usize,
    pub content_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeManifest {
    pub model: PathBuf,
    pub base: PathBuf,
    pub seed: u64,
    pub entries: Vec<ProbeEntry>,
}

/// Output directory of one probe rate.
pub fn probe_dir(root: &Path, rate: f64) -> PathBuf {
    root.join(format!("p{rate:.4}"))
}

/// Writes `base + DARE(θ − base, p)` for every requested drop rate, plus a
/// `probe_manifest.json` listing the outputs. Judging the probed models is
/// left to an external evaluation harness.
pub fn dare_viability_probe(
    model: &Checkpoint,
    base: &Checkpoint,
    opts: &ProbeOptions,
) -> Result<ProbeManifest, DivergenceError> {
    if opts.rates.is_empty() {
        return Err(DivergenceError::InvalidParameter(
            "no drop rates given".into(),
        ));
    }
    if let Some(p) = opts.rates.iter().find(|p| !(0.0..1.0).contains(*p)) {
        return Err(DivergenceError::InvalidParameter(format!(
            "drop rate {p} outside [0, 1)"
        )));
    }
    let names = aligned_names(model, base)?;
    let pool = thread_pool(opts.workers);
    let mut writers = opts
        .rates
        .iter()
        .map(|&p| {
            let mut metadata = std::collections::BTreeMap::new();
            metadata.insert("dare_probe_drop_rate".to_string(), p.to_string());
            metadata.insert("dare_probe_seed".to_string(), opts.seed.to_string());
            CheckpointWriter::create(
                probe_dir(&opts.out_root, p),
                WriterOptions {
                    shard_limit_bytes: opts.shard_limit_bytes,
                    default_dtype: opts.dtype,
                    metadata,
                    ..Default::default()
                },
            )
        })
        .collect::<Result<Vec<_>, _>>()?;

    for name in &names {
        let theta = model.load_tensor(name)?;
        let b = base.load_tensor(name)?.values;
        let delta: Vec<f64> = theta
            .values
            .iter()
            .zip(&b)
            .map(|(&x, &y)| f64::from(x) - f64::from(y))
            .collect();
        let outputs: Vec<Vec<f32>> = pool.install(|| {
            opts.rates
                .par_iter()
                .map(|&p| {
                    let mask = DropMask::new(opts.seed, PROBE_STREAM, model.role(), name, p);
                    let pruned = dare_process(&delta, &mask)?;
                    Ok(b.iter()
                        .zip(&pruned)
                        .map(|(&x, &d)| (f64::from(x) + d) as f32)
                        .collect())
                })
                .collect::<Result<_, DivergenceError>>()
        })?;
        for (writer, values) in writers.iter_mut().zip(outputs) {
            let buf = TensorBuffer::new(
                name.clone(),
                theta.meta.dtype,
                theta.meta.shape.clone(),
                values,
            )?;
            writer.push(&buf)?;
        }
    }

    let mut entries = Vec::with_capacity(writers.len());
    for (writer, &p) in writers.into_iter().zip(&opts.rates) {
        let ck = writer.finish()?;
        let dir = probe_dir(&opts.out_root, p);
        entries.push(ProbeEntry {
            drop_rate: p,
            tensor_count: ck.tensors().len(),
            content_digest: content_digest(&dir)?,
            output_path: dir,
        });
    }
    let manifest = ProbeManifest {
        model: model.path().to_path_buf(),
        base: base.path().to_path_buf(),
        seed: opts.seed,
        entries,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&opts.out_root.join("probe_manifest.json"), text.as_bytes())?;
    Ok(manifest)
}
