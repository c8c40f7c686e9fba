use super::dare::combine;
use super::{check_len, check_unit, deltas, sign, MergeError};

/// Elect, mask, and rescale.
///
/// The elected direction is the strict sign of the mean task vector; the
/// unified vector takes, per entry, the largest magnitude along that
/// direction. Each task is reconstructed as `ρ·(mask ⊙ unified)` where the
/// mask keeps entries whose sign agrees with the election and
/// `ρ = mean|Δ| / mean|mask ⊙ unified|` (0 when the denominator is 0).
pub fn emr_merge(
    direct: &[f32],
    think: &[f32],
    base: &[f32],
    lambda: f64,
) -> Result<Vec<f32>, MergeError> {
    check_len(direct.len(), think.len())?;
    check_len(direct.len(), base.len())?;
    check_unit("strength", lambda)?;
    let dd = deltas(direct, base);
    let dt = deltas(think, base);
    let n = dd.len();
    let elected: Vec<f64> = dd
        .iter()
        .zip(&dt)
        .map(|(a, b)| sign((a + b) / 2.0))
        .collect();
    let unified: Vec<f64> = (0..n)
        .map(|i| {
            let s = elected[i];
            s * (s * dd[i]).max(0.0).max((s * dt[i]).max(0.0))
        })
        .collect();
    let reconstruct = |delta: &[f64]| -> Vec<f64> {
        let masked: Vec<f64> = (0..n)
            .map(|i| {
                if elected[i] != 0.0 && sign(delta[i]) == elected[i] {
                    unified[i]
                } else {
                    0.0
                }
            })
            .collect();
        let num = mean_abs(delta);
        let den = mean_abs(&masked);
        let rho = if den > 0.0 { num / den } else { 0.0 };
        masked.into_iter().map(|v| rho * v).collect()
    };
    let rd = reconstruct(&dd);
    let rt = reconstruct(&dt);
    Ok(combine(base, &rd, &rt, lambda))
}

fn mean_abs(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64
}
