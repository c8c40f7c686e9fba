//! Measure how far a "thinking" checkpoint moved away from a "direct" one.
//!
//! ```text
//! cargo run --example divergence_report
//! ```

use merge_spectrum::divergence::{compute_divergence_with_curve, write_csv, DivergenceOptions};
use merge_spectrum::store::{write_checkpoint, WriterOptions};
use merge_spectrum::{open_checkpoint, DType, Role, TensorBuffer};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> merge_spectrum::Result<()> {
    let root = tempfile::tempdir().expect("temp dir");
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 200_000;
    let direct: Vec<f32> = (0..n)
        .map(|_| {
            let z: f32 = StandardNormal.sample(&mut rng);
            0.05 * z
        })
        .collect();
    let think: Vec<f32> = direct
        .iter()
        .map(|x| {
            let z: f32 = StandardNormal.sample(&mut rng);
            x + 0.002 * z
        })
        .collect();
    for (dir, values) in [("direct", direct), ("think", think)] {
        let t = TensorBuffer::new("w", DType::F32, vec![400, 500], values)?;
        write_checkpoint([t], root.path().join(dir), WriterOptions::default())?;
    }

    let direct = open_checkpoint(root.path().join("direct"), Role::Direct)?;
    let think = open_checkpoint(root.path().join("think"), Role::Thinking)?;
    let opts = DivergenceOptions {
        curve_grid: Some(200),
        ..Default::default()
    };
    let (report, curve) = compute_divergence_with_curve(&direct, &think, &opts)?;
    println!("relative L2 distance   {:.4}%", 100.0 * report.relative_l2);
    println!(
        "|delta| <= {}         {:.2}% of {} parameters",
        report.threshold,
        100.0 * report.fraction_within_threshold,
        report.total_params
    );
    println!(
        "delta mean / variance  {:.3e} / {:.3e}",
        report.delta_mean, report.delta_variance
    );
    let curve = curve.expect("curve requested");
    println!(
        "sup distance to the Gaussian reference curve: {:.4}",
        curve.sup_distance()
    );
    let files = write_csv(root.path(), &report, Some(&curve))?;
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}
