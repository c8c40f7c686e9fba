//! Merge two synthetic parent checkpoints tensor by tensor with DARE and
//! check the endpoints of a weighted average.
//!
//! ```text
//! cargo run --example merge_checkpoints
//! ```

use merge_spectrum::store::{write_checkpoint, WriterOptions};
use merge_spectrum::sweep::{merge_checkpoint, DtypePolicy, MergeOptions};
use merge_spectrum::{open_checkpoint, DType, MergeMethod, MergeRecipe, Role, TensorBuffer};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const LAYERS: [(&str, &[usize]); 3] = [
    ("model.embed.weight", &[64, 32]),
    ("model.layers.0.mlp.weight", &[32, 32]),
    ("model.layers.0.mlp.bias", &[32]),
];

fn parent(
    dir: &std::path::Path,
    base: &[Vec<f32>],
    scale: f32,
    seed: u64,
) -> merge_spectrum::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0f32, scale).unwrap();
    let tensors = LAYERS.iter().zip(base).map(|((name, shape), b)| {
        let v = b.iter().map(|x| x + noise.sample(&mut rng)).collect();
        TensorBuffer::new(*name, DType::BF16, shape.to_vec(), v).unwrap()
    });
    write_checkpoint(tensors, dir, WriterOptions::default())?;
    Ok(())
}

fn main() -> merge_spectrum::Result<()> {
    let root = tempfile::tempdir().expect("temp dir");
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let init = Normal::new(0.0f32, 0.02).unwrap();
    let base: Vec<Vec<f32>> = LAYERS
        .iter()
        .map(|(_, shape)| {
            (0..shape.iter().product())
                .map(|_| init.sample(&mut rng))
                .collect()
        })
        .collect();
    parent(&root.path().join("base"), &base, 0.0, 1)?;
    parent(&root.path().join("direct"), &base, 0.002, 2)?;
    parent(&root.path().join("think"), &base, 0.003, 3)?;

    let direct = open_checkpoint(root.path().join("direct"), Role::Direct)?;
    let think = open_checkpoint(root.path().join("think"), Role::Thinking)?;
    let base = open_checkpoint(root.path().join("base"), Role::Base)?;

    let recipe = MergeRecipe::new(MergeMethod::Dare, 0.7)
        .with_drop_rate(0.5)
        .with_seed(11);
    let out_dir = root.path().join("dare-0.7");
    let merged = merge_checkpoint(
        &direct,
        &think,
        Some(&base),
        &recipe,
        &out_dir,
        &MergeOptions::default(),
    )?;
    println!(
        "DARE wrote {} tensors to {}",
        merged.checkpoint.tensors().len(),
        out_dir.display()
    );

    // with f32 output a weighted average at strength 1 is the thinking parent
    let opts = MergeOptions {
        dtype_policy: DtypePolicy::ForceF32,
        workers: Some(2),
        ..Default::default()
    };
    let wa = MergeRecipe::new(MergeMethod::WeightedAverage, 1.0);
    let at_one = merge_checkpoint(
        &direct,
        &think,
        None,
        &wa,
        &root.path().join("wa-1.0"),
        &opts,
    )?;
    for name in think.tensor_names() {
        let same = at_one.checkpoint.load_tensor(name)?.values == think.load_tensor(name)?.values;
        println!("{name}: identical to thinking parent: {same}");
    }
    Ok(())
}
