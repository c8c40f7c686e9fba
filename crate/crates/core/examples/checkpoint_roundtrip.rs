//! Write a sharded checkpoint, reopen it lazily and read tensors back.
//!
//! ```text
//! cargo run --example checkpoint_roundtrip
//! ```

use merge_spectrum::store::{content_digest, write_checkpoint, WriterOptions};
use merge_spectrum::{open_checkpoint, DType, Role, TensorBuffer};

fn main() -> merge_spectrum::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");

    let tensors = vec![
        TensorBuffer::new(
            "embed.weight",
            DType::F32,
            vec![4, 8],
            (0..32).map(|i| i as f32 * 0.1).collect(),
        )?,
        TensorBuffer::new(
            "layers.0.weight",
            DType::BF16,
            vec![8, 8],
            vec![1.0000001; 64],
        )?,
        TensorBuffer::new("layers.0.bias", DType::F16, vec![8], vec![0.5; 8])?,
    ];
    let opts = WriterOptions {
        // small enough to force one shard per tensor
        shard_limit_bytes: 160,
        ..Default::default()
    };
    write_checkpoint(tensors, dir.path(), opts)?;

    let ckpt = open_checkpoint(dir.path(), Role::Direct)?;
    println!(
        "{} tensors, {} parameters",
        ckpt.tensors().len(),
        ckpt.param_count()
    );
    for (name, shard) in ckpt.shards() {
        let meta = ckpt.meta(name).expect("listed tensor");
        println!(
            "  {name:<16} {:>4} {:?} in {shard}",
            meta.dtype.as_str(),
            meta.shape
        );
    }
    println!(
        "payload bytes read while opening: {}",
        ckpt.payload_bytes_read()
    );

    // BF16 storage rounds 1.0000001 to the nearest even BF16 value
    let w = ckpt.load_tensor("layers.0.weight")?;
    println!("layers.0.weight[0] = {}", w.values[0]);
    println!("content digest {}", content_digest(dir.path())?);
    Ok(())
}
