use super::{check_len, check_unit, deltas, DropMask, MergeError};
use crate::store::Role;

fn check_drop_rate(p: f64) -> Result<(), MergeError> {
    if !(0.0..1.0).contains(&p) {
        return Err(MergeError::InvalidParameter(format!(
            "drop rate must lie in [0, 1), got {p}"
        )));
    }
    Ok(())
}

/// Drops each entry of `delta` with the mask's probability and rescales the
/// survivors by `1 / (1 − p)`.
pub fn dare_process(delta: &[f64], mask: &DropMask) -> Result<Vec<f64>, MergeError> {
    let p = mask.drop_rate();
    check_drop_rate(p)?;
    let scale = 1.0 / (1.0 - p);
    Ok(delta
        .iter()
        .enumerate()
        .map(|(i, &d)| if mask.keeps(i) { d * scale } else { 0.0 })
        .collect())
}

/// [`dare_process`] with an explicit keep mask.
pub fn dare_apply_mask(delta: &[f64], keep: &[bool], p: f64) -> Result<Vec<f64>, MergeError> {
    check_len(delta.len(), keep.len())?;
    check_drop_rate(p)?;
    let scale = 1.0 / (1.0 - p);
    Ok(delta
        .iter()
        .zip(keep)
        .map(|(&d, &k)| if k { d * scale } else { 0.0 })
        .collect())
}

/// `base + (1 − λ)·DARE(direct − base) + λ·DARE(think − base)` with
/// independent masks for the two task vectors.
pub fn dare_merge(
    name: &str,
    direct: &[f32],
    think: &[f32],
    base: &[f32],
    lambda: f64,
    p: f64,
    seed: u64,
) -> Result<Vec<f32>, MergeError> {
    check_len(direct.len(), think.len())?;
    check_len(direct.len(), base.len())?;
    check_unit("strength", lambda)?;
    check_drop_rate(p)?;
    let d = dare_process(
        &deltas(direct, base),
        &DropMask::new(seed, "dare", Role::Direct, name, p),
    )?;
    let t = dare_process(
        &deltas(think, base),
        &DropMask::new(seed, "dare", Role::Thinking, name, p),
    )?;
    Ok(combine(base, &d, &t, lambda))
}

/// `base + (1 − λ)·a + λ·b`, rounded once to `f32`.
pub(crate) fn combine(base: &[f32], a: &[f64], b: &[f64], lambda: f64) -> Vec<f32> {
    let keep = 1.0 - lambda;
    base.iter()
        .zip(a.iter().zip(b))
        .map(|(&x, (&da, &db))| (f64::from(x) + (keep * da + lambda * db)) as f32)
        .collect()
}
