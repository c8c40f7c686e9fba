use nalgebra::DMatrix;

use super::{check_len, check_unit, MergeError};

/// Hard singular value thresholding: singular values below
/// `tau_fraction · σ_max` are zeroed. A matrix whose spectrum survives
/// entirely is returned unchanged.
pub fn singular_value_threshold(
    m: &DMatrix<f64>,
    tau_fraction: f64,
) -> Result<DMatrix<f64>, MergeError> {
    if m.is_empty() {
        return Ok(m.clone());
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(MergeError::Svd("non-finite input".into()));
    }
    let mut svd = m
        .clone()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| MergeError::Svd("did not converge".into()))?;
    let sigma_max = svd.singular_values.iter().copied().fold(0.0f64, f64::max);
    if sigma_max == 0.0 {
        return Ok(DMatrix::zeros(m.nrows(), m.ncols()));
    }
    let threshold = tau_fraction * sigma_max;
    if svd.singular_values.iter().all(|&s| s >= threshold) {
        return Ok(m.clone());
    }
    for s in svd.singular_values.iter_mut() {
        if *s < threshold {
            *s = 0.0;
        }
    }
    svd.recompose().map_err(|e| MergeError::Svd(e.to_string()))
}

/// Low-rank estimation merge.
///
/// Starting from the elementwise mean θ0, alternates for `iters` rounds
/// between thresholding each task's difference `θ − θ0` to a low-rank
/// `δ` and re-estimating `θ0` as the mean of `θ − δ`. Returns
/// `θ0 + (1 − λ)δ_direct + λδ_think`. Tensors with fewer than two
/// dimensions skip the thresholding; higher-rank tensors are viewed as
/// `shape[0] × (product of the rest)`.
pub fn lore_merge(
    direct: &[f32],
    think: &[f32],
    shape: &[usize],
    lambda: f64,
    tau_fraction: f64,
    iters: usize,
) -> Result<Vec<f32>, MergeError> {
    check_len(direct.len(), think.len())?;
    check_len(shape.iter().product(), direct.len())?;
    check_unit("strength", lambda)?;
    if !(tau_fraction > 0.0 && tau_fraction < 1.0) {
        return Err(MergeError::InvalidParameter(format!(
            "svt threshold fraction must lie in (0, 1), got {tau_fraction}"
        )));
    }
    if iters == 0 {
        return Err(MergeError::InvalidParameter(
            "iterations must be at least 1".into(),
        ));
    }
    let keep = 1.0 - lambda;
    if shape.len() < 2 {
        return Ok(direct
            .iter()
            .zip(think)
            .map(|(&d, &t)| {
                let (d, t) = (f64::from(d), f64::from(t));
                let center = (d + t) / 2.0;
                (center + (keep * (d - center) + lambda * (t - center))) as f32
            })
            .collect());
    }
    let rows = shape[0];
    let cols = shape[1..].iter().product();
    let to_matrix =
        |v: &[f32]| DMatrix::from_row_iterator(rows, cols, v.iter().map(|&x| f64::from(x)));
    let theta_d = to_matrix(direct);
    let theta_t = to_matrix(think);
    let mut center = (&theta_d + &theta_t) / 2.0;
    let mut delta_d = DMatrix::zeros(rows, cols);
    let mut delta_t = DMatrix::zeros(rows, cols);
    for _ in 0..iters {
        delta_d = singular_value_threshold(&(&theta_d - &center), tau_fraction)?;
        delta_t = singular_value_threshold(&(&theta_t - &center), tau_fraction)?;
        center = ((&theta_d - &delta_d) + (&theta_t - &delta_t)) / 2.0;
    }
    let merged = center + delta_d * keep + delta_t * lambda;
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            out.push(merged[(r, c)] as f32);
        }
    }
    Ok(out)
}
