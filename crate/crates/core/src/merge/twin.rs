use super::topk::{fraction_count, keep_top_magnitude};
use super::{check_len, check_unit, MergeError};

/// Shared/exclusive decomposition.
///
/// `shared = base + (Δd + Δt)/2`; the exclusive vectors `θ − shared` keep
/// their `⌈(1 − mask_rate)·n⌉` largest-magnitude entries (no rescaling) and
/// are blended back onto the shared model with weights `(1 − λ, λ)`.
pub fn twin_merge(
    direct: &[f32],
    think: &[f32],
    base: &[f32],
    lambda: f64,
    mask_rate: f64,
) -> Result<Vec<f32>, MergeError> {
    check_len(direct.len(), think.len())?;
    check_len(direct.len(), base.len())?;
    check_unit("strength", lambda)?;
    if !(0.0..1.0).contains(&mask_rate) {
        return Err(MergeError::InvalidParameter(format!(
            "mask rate must lie in [0, 1), got {mask_rate}"
        )));
    }
    let shared: Vec<f64> = (0..direct.len())
        .map(|i| {
            let b = f64::from(base[i]);
            let dd = f64::from(direct[i]) - b;
            let dt = f64::from(think[i]) - b;
            b + (dd + dt) / 2.0
        })
        .collect();
    let exclusive = |theta: &[f32]| -> Vec<f64> {
        theta
            .iter()
            .zip(&shared)
            .map(|(&x, &s)| f64::from(x) - s)
            .collect()
    };
    let m = fraction_count(1.0 - mask_rate, direct.len());
    let vd = keep_top_magnitude(&exclusive(direct), m);
    let vt = keep_top_magnitude(&exclusive(think), m);
    let keep = 1.0 - lambda;
    Ok(shared
        .iter()
        .zip(vd.iter().zip(&vt))
        .map(|(&s, (&a, &b))| (s + (keep * a + lambda * b)) as f32)
        .collect())
}
