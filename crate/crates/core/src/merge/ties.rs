use super::topk::{fraction_count, keep_top_magnitude};
use super::{check_len, check_unit, deltas, sign, MergeError};

/// Trim, elect sign, and merge.
///
/// Each task vector keeps its `⌈density·n⌉` largest-magnitude entries. The
/// consensus sign is the sign of the `(1 − λ, λ)` weighted vote; a vote of
/// exactly zero elects no sign and leaves the base value. Entries agreeing
/// with the elected sign are averaged with their weights.
pub fn ties_merge(
    direct: &[f32],
    think: &[f32],
    base: &[f32],
    lambda: f64,
    density: f64,
) -> Result<Vec<f32>, MergeError> {
    check_len(direct.len(), think.len())?;
    check_len(direct.len(), base.len())?;
    check_unit("strength", lambda)?;
    if !(density > 0.0 && density <= 1.0) {
        return Err(MergeError::InvalidParameter(format!(
            "density must lie in (0, 1], got {density}"
        )));
    }
    let n = direct.len();
    let m = fraction_count(density, n);
    let dd = keep_top_magnitude(&deltas(direct, base), m);
    let dt = keep_top_magnitude(&deltas(think, base), m);
    let (wd, wt) = (1.0 - lambda, lambda);
    Ok((0..n)
        .map(|i| {
            let elected = sign(wd * dd[i] + wt * dt[i]);
            let mut num = 0.0;
            let mut den = 0.0;
            if elected != 0.0 {
                if sign(dd[i]) == elected {
                    num += wd * dd[i];
                    den += wd;
                }
                if sign(dt[i]) == elected {
                    num += wt * dt[i];
                    den += wt;
                }
            }
            let merged = if den > 0.0 { num / den } else { 0.0 };
            (f64::from(base[i]) + merged) as f32
        })
        .collect())
}
