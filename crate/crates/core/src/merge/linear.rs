use super::{check_len, check_unit, MergeError};

/// `(1 − λ)·direct + λ·think`, elementwise.
pub fn weighted_average(
    direct: &[f32],
    think: &[f32],
    lambda: f64,
) -> Result<Vec<f32>, MergeError> {
    check_len(direct.len(), think.len())?;
    check_unit("strength", lambda)?;
    Ok(lerp(direct, think, lambda))
}

pub(crate) fn lerp(direct: &[f32], think: &[f32], lambda: f64) -> Vec<f32> {
    let keep = 1.0 - lambda;
    direct
        .iter()
        .zip(think)
        .map(|(&d, &t)| (keep * f64::from(d) + lambda * f64::from(t)) as f32)
        .collect()
}
