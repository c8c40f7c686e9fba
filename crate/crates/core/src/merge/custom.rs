use super::topk::diff_mask;
use super::{check_len, check_unit, MergeError};

fn check(direct: &[f32], think: &[f32], k: f64) -> Result<(), MergeError> {
    check_len(direct.len(), think.len())?;
    check_unit("top-k fraction", k)
}

fn midpoint(a: f32, b: f32) -> f32 {
    ((f64::from(a) + f64::from(b)) / 2.0) as f32
}

/// Direct parent with the `⌈k·n⌉` most-changed positions taken from think.
pub fn topk_replace(direct: &[f32], think: &[f32], k: f64) -> Result<Vec<f32>, MergeError> {
    check(direct, think, k)?;
    let mask = diff_mask(direct, think, k);
    Ok(direct
        .iter()
        .zip(think)
        .zip(mask)
        .map(|((&d, &t), sel)| if sel { t } else { d })
        .collect())
}

/// Direct parent with the most-changed positions set to the parents' mean.
pub fn topk_diff_average(direct: &[f32], think: &[f32], k: f64) -> Result<Vec<f32>, MergeError> {
    check(direct, think, k)?;
    let mask = diff_mask(direct, think, k);
    Ok(direct
        .iter()
        .zip(think)
        .zip(mask)
        .map(|((&d, &t), sel)| if sel { midpoint(d, t) } else { d })
        .collect())
}

/// Parents' mean everywhere, with the most-changed positions taken from
/// think.
pub fn global_avg_topk_override(
    direct: &[f32],
    think: &[f32],
    k: f64,
) -> Result<Vec<f32>, MergeError> {
    check(direct, think, k)?;
    let mask = diff_mask(direct, think, k);
    Ok(direct
        .iter()
        .zip(think)
        .zip(mask)
        .map(|((&d, &t), sel)| if sel { t } else { midpoint(d, t) })
        .collect())
}
