use super::linear::lerp;
use super::{check_len, check_unit, compensated_sum, MergeError, TensorMergeDiagnostic};

/// Spherical interpolation treating each tensor as one flat vector.
///
/// Falls back to linear interpolation (and flags it) when the normalized
/// dot product is within `collinearity_eps` of +1 or −1, where the geodesic
/// is numerically or mathematically undefined.
pub fn slerp_merge(
    name: &str,
    direct: &[f32],
    think: &[f32],
    t: f64,
    collinearity_eps: f64,
) -> Result<(Vec<f32>, TensorMergeDiagnostic), MergeError> {
    check_len(direct.len(), think.len())?;
    check_unit("strength", t)?;
    // f32 x f32 products are exact in f64
    let dot = compensated_sum(
        direct
            .iter()
            .zip(think)
            .map(|(&a, &b)| f64::from(a) * f64::from(b)),
    );
    let norm_direct = compensated_sum(direct.iter().map(|&a| f64::from(a) * f64::from(a))).sqrt();
    let norm_think = compensated_sum(think.iter().map(|&b| f64::from(b) * f64::from(b))).sqrt();
    if norm_direct == 0.0 {
        return Err(MergeError::ZeroNorm {
            name: name.to_string(),
            which: "direct",
        });
    }
    if norm_think == 0.0 {
        return Err(MergeError::ZeroNorm {
            name: name.to_string(),
            which: "thinking",
        });
    }
    let cos = (dot / (norm_direct * norm_think)).clamp(-1.0, 1.0);
    let angle = cos.acos();
    let mut diag = TensorMergeDiagnostic {
        name: name.to_string(),
        angle_radians: angle,
        dot,
        norm_direct,
        norm_think,
        collinear_fallback: false,
    };
    if cos >= 1.0 - collinearity_eps || cos <= -1.0 + collinearity_eps {
        diag.collinear_fallback = true;
        return Ok((lerp(direct, think, t), diag));
    }
    let sin = angle.sin();
    let c_direct = ((1.0 - t) * angle).sin() / sin;
    let c_think = (t * angle).sin() / sin;
    let out = direct
        .iter()
        .zip(think)
        .map(|(&a, &b)| (c_direct * f64::from(a) + c_think * f64::from(b)) as f32)
        .collect();
    Ok((out, diag))
}
