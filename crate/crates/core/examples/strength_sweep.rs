//! Plan and run a fine strength sweep from a JSON plan, interrupt it, and
//! resume it.
//!
//! ```text
//! cargo run --example strength_sweep
//! ```

use merge_spectrum::store::{write_checkpoint, WriterOptions};
use merge_spectrum::sweep::{
    execute_sweep, execute_sweep_with, plan_sweep, ExecuteOptions, SweepConfig,
};
use merge_spectrum::{DType, TensorBuffer};

fn main() -> merge_spectrum::Result<()> {
    let root = tempfile::tempdir().expect("temp dir");
    for (dir, shift) in [("base", 0.0f32), ("direct", 0.01), ("think", -0.02)] {
        let w = (0..256)
            .map(|i| (i as f32).sin() * 0.1 + shift * ((i % 5) as f32))
            .collect();
        let b = (0..16).map(|i| i as f32 * 0.01 - shift).collect();
        let tensors = [
            TensorBuffer::new("layer.weight", DType::BF16, vec![16, 16], w)?,
            TensorBuffer::new("layer.bias", DType::BF16, vec![16], b)?,
        ];
        write_checkpoint(tensors, root.path().join(dir), WriterOptions::default())?;
    }
    std::fs::write(root.path().join("think/tokenizer_config.json"), "{}").expect("sidecar");

    let plan_path = root.path().join("plan.json");
    std::fs::write(
        &plan_path,
        r#"{
            "parents": {"direct": "direct", "think": "think", "base": "base"},
            "output_root": "sweep",
            "grid": {"start": 0.60, "stop": 0.70, "step": 0.01},
            "methods": ["weighted_average", {"method": "ties", "drop_rate": 0.2}],
            "seed": 1
        }"#,
    )
    .expect("plan file");
    let plan = plan_sweep(&SweepConfig::load(&plan_path)?)?;
    println!(
        "{} merges planned, plan digest {}",
        plan.recipes().len(),
        &plan.digest()[..16]
    );

    let partial = execute_sweep_with(
        &plan,
        &ExecuteOptions {
            max_merges: Some(5),
        },
    )?;
    println!(
        "first run: {} merged, stopped early: {}",
        partial.executed, partial.interrupted
    );
    let resumed = execute_sweep(&plan)?;
    println!(
        "resumed:   {} merged, {} already done",
        resumed.executed, resumed.skipped
    );
    for e in resumed.manifest.entries.iter().take(3) {
        println!(
            "  {} {:.2} -> {} ({})",
            e.method,
            e.strength,
            e.output_path.display(),
            &e.content_digest.as_deref().unwrap_or("-")[..12]
        );
    }
    Ok(())
}
