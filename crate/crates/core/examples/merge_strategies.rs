//! Apply each of the ten merging strategies to one small tensor triple.
//!
//! ```text
//! cargo run --example merge_strategies -- 0.6
//! ```

use merge_spectrum::merge::merge_tensor;
use merge_spectrum::{MergeMethod, MergeRecipe};

fn main() -> merge_spectrum::Result<()> {
    let strength: f64 = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("strength must be a number"))
        .unwrap_or(0.5);

    let shape = [2, 4];
    let base = [0.10, -0.20, 0.30, 0.00, 0.05, 0.40, -0.10, 0.20];
    let direct = [0.12, -0.25, 0.30, 0.04, 0.02, 0.41, -0.10, 0.26];
    let think = [0.18, -0.18, 0.21, -0.03, 0.05, 0.47, -0.16, 0.20];

    println!("direct  {direct:?}");
    println!("think   {think:?}");
    for method in MergeMethod::ALL {
        let recipe = MergeRecipe::new(method, strength).with_seed(42);
        let out = merge_tensor(&recipe, "demo.weight", &shape, &direct, &think, Some(&base))?;
        let values: Vec<String> = out.values.iter().map(|v| format!("{v:+.3}")).collect();
        println!("{:<26} [{}]", method.as_str(), values.join(", "));
        if let Some(diag) = out.diagnostic {
            println!(
                "{:<26} angle {:.4} rad, collinear fallback {}",
                "", diag.angle_radians, diag.collinear_fallback
            );
        }
    }
    Ok(())
}
