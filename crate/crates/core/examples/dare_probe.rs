//! Prune a model's delta against its base at several drop rates and see
//! how well the rescaled deltas preserve it.
//!
//! ```text
//! cargo run --example dare_probe
//! ```

use merge_spectrum::divergence::{dare_viability_probe, ProbeOptions};
use merge_spectrum::store::{write_checkpoint, WriterOptions};
use merge_spectrum::{open_checkpoint, DType, Role, TensorBuffer};

fn main() -> merge_spectrum::Result<()> {
    let root = tempfile::tempdir().expect("temp dir");
    let n = 10_000;
    let base: Vec<f32> = (0..n).map(|i| ((i % 101) as f32 - 50.0) * 0.01).collect();
    let model: Vec<f32> = base
        .iter()
        .enumerate()
        .map(|(i, b)| b + 0.001 * ((i % 7) as f32 - 3.0))
        .collect();
    for (dir, values) in [("base", base.clone()), ("model", model.clone())] {
        let t = TensorBuffer::new("w", DType::F32, vec![100, 100], values)?;
        write_checkpoint([t], root.path().join(dir), WriterOptions::default())?;
    }
    let model_ck = open_checkpoint(root.path().join("model"), Role::Thinking)?;
    let base_ck = open_checkpoint(root.path().join("base"), Role::Base)?;

    let manifest = dare_viability_probe(
        &model_ck,
        &base_ck,
        &ProbeOptions {
            rates: vec![0.5, 0.9, 0.99],
            seed: 1,
            out_root: root.path().join("probe"),
            dtype: None,
            shard_limit_bytes: WriterOptions::default().shard_limit_bytes,
            workers: None,
        },
    )?;
    let delta_sum: f64 = model.iter().zip(&base).map(|(m, b)| f64::from(m - b)).sum();
    for entry in &manifest.entries {
        let probed = open_checkpoint(&entry.output_path, Role::Merged)?
            .load_tensor("w")?
            .values;
        let kept = probed.iter().zip(&base).filter(|(p, b)| p != b).count();
        let sum: f64 = probed
            .iter()
            .zip(&base)
            .map(|(p, b)| f64::from(p - b))
            .sum();
        println!(
            "p = {:.2}: {:>5} of {n} deltas kept, delta sum {:+.4} (original {:+.4})",
            entry.drop_rate, kept, sum, delta_sum
        );
    }
    Ok(())
}
