//! Per-tensor merging strategies.
//!
//! Every strategy acts on aligned flat tensors (direct, thinking and, where
//! needed, base) of identical length. Inputs are `f32`; element arithmetic
//! is carried out in `f64` and rounded once on output, so strength 0 and 1
//! reproduce the corresponding parent bit-for-bit.

mod custom;
mod dare;
mod emr;
mod linear;
mod lore;
pub(crate) mod rng;
mod slerp;
mod ties;
mod topk;
mod twin;

use serde::{Deserialize, Serialize};

pub use custom::{global_avg_topk_override, topk_diff_average, topk_replace};
pub use dare::{dare_apply_mask, dare_merge, dare_process};
pub use emr::emr_merge;
pub use linear::weighted_average;
pub use lore::{lore_merge, singular_value_threshold};
pub use rng::DropMask;
pub use slerp::slerp_merge;
pub use ties::ties_merge;
pub use topk::{fraction_count, top_k_mask};
pub use twin::twin_merge;

/// Normalized dot product at or beyond which SLERP falls back to linear
/// interpolation.
pub const DEFAULT_COLLINEARITY_EPS: f64 = 1e-7;
pub const DEFAULT_DROP_RATE: f64 = 0.2;
pub const DEFAULT_SVT_THRESHOLD_FRACTION: f64 = 0.1;
pub const DEFAULT_LORE_ITERS: usize = 5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MergeError {
    #[error("shape mismatch: {expected} elements expected, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("method {0} requires a base checkpoint")]
    BaseRequired(MergeMethod),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("tensor {name}: {which} operand has zero norm")]
    ZeroNorm { name: String, which: &'static str },
    #[error("singular value decomposition failed: {0}")]
    Svd(String),
}

/// The ten supported strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeMethod {
    WeightedAverage,
    Slerp,
    Dare,
    Ties,
    Emr,
    Lore,
    Twin,
    TopkReplace,
    TopkDiffAverage,
    GlobalAvgTopkOverride,
}

impl MergeMethod {
    pub const ALL: [MergeMethod; 10] = [
        MergeMethod::WeightedAverage,
        MergeMethod::Slerp,
        MergeMethod::Dare,
        MergeMethod::Ties,
        MergeMethod::Emr,
        MergeMethod::Lore,
        MergeMethod::Twin,
        MergeMethod::TopkReplace,
        MergeMethod::TopkDiffAverage,
        MergeMethod::GlobalAvgTopkOverride,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MergeMethod::WeightedAverage => "weighted_average",
            MergeMethod::Slerp => "slerp",
            MergeMethod::Dare => "dare",
            MergeMethod::Ties => "ties",
            MergeMethod::Emr => "emr",
            MergeMethod::Lore => "lore",
            MergeMethod::Twin => "twin",
            MergeMethod::TopkReplace => "topk_replace",
            MergeMethod::TopkDiffAverage => "topk_diff_average",
            MergeMethod::GlobalAvgTopkOverride => "global_avg_topk_override",
        }
    }

    /// Task-vector methods that need the shared pretrained base.
    pub fn requires_base(self) -> bool {
        matches!(
            self,
            MergeMethod::Dare | MergeMethod::Ties | MergeMethod::Emr | MergeMethod::Twin
        )
    }

    fn is_top_k(self) -> bool {
        matches!(
            self,
            MergeMethod::TopkReplace
                | MergeMethod::TopkDiffAverage
                | MergeMethod::GlobalAvgTopkOverride
        )
    }
}

impl std::fmt::Display for MergeMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MergeMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        MergeMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == norm)
            .ok_or_else(|| {
                let names: Vec<_> = MergeMethod::ALL.iter().map(|m| m.as_str()).collect();
                format!(
                    "unknown merge method {s:?} (expected one of {})",
                    names.join(", ")
                )
            })
    }
}

fn default_drop_rate() -> f64 {
    DEFAULT_DROP_RATE
}
fn default_svt() -> f64 {
    DEFAULT_SVT_THRESHOLD_FRACTION
}
fn default_iters() -> usize {
    DEFAULT_LORE_ITERS
}

/// A fully specified merge: method, strength and method hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeRecipe {
    pub method: MergeMethod,
    /// λ (or t for SLERP): 0 is the direct parent, 1 the thinking parent.
    pub strength: f64,
    /// Sparsity for DARE (drop probability), TIES (1 - density) and TWIN
    /// (mask rate).
    #[serde(default = "default_drop_rate")]
    pub drop_rate: f64,
    /// Selected fraction for the top-k strategies. When unset the strength
    /// is used as the fraction, so the sweep runs from direct (0) upwards.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k_fraction: Option<f64>,
    #[serde(default = "default_svt")]
    pub svt_threshold_fraction: f64,
    #[serde(default = "default_iters")]
    pub lore_iters: usize,
    #[serde(default)]
    pub seed: u64,
}

impl MergeRecipe {
    pub fn new(method: MergeMethod, strength: f64) -> Self {
        MergeRecipe {
            method,
            strength,
            drop_rate: DEFAULT_DROP_RATE,
            top_k_fraction: None,
            svt_threshold_fraction: DEFAULT_SVT_THRESHOLD_FRACTION,
            lore_iters: DEFAULT_LORE_ITERS,
            seed: 0,
        }
    }

    pub fn with_drop_rate(mut self, p: f64) -> Self {
        self.drop_rate = p;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_top_k(mut self, k: f64) -> Self {
        self.top_k_fraction = Some(k);
        self
    }

    /// Fraction used by the top-k strategies.
    pub fn effective_top_k(&self) -> f64 {
        self.top_k_fraction.unwrap_or(self.strength)
    }

    pub fn validate(&self, has_base: bool) -> Result<(), MergeError> {
        check_unit("strength", self.strength)?;
        if !(0.0..1.0).contains(&self.drop_rate) {
            return Err(MergeError::InvalidParameter(format!(
                "drop_rate must lie in [0, 1), got {}",
                self.drop_rate
            )));
        }
        if let Some(k) = self.top_k_fraction {
            if !(k > 0.0 && k <= 1.0) {
                return Err(MergeError::InvalidParameter(format!(
                    "top_k_fraction must lie in (0, 1], got {k}"
                )));
            }
        }
        if !(self.svt_threshold_fraction > 0.0 && self.svt_threshold_fraction < 1.0) {
            return Err(MergeError::InvalidParameter(format!(
                "svt_threshold_fraction must lie in (0, 1), got {}",
                self.svt_threshold_fraction
            )));
        }
        if self.lore_iters == 0 {
            return Err(MergeError::InvalidParameter(
                "lore_iters must be at least 1".into(),
            ));
        }
        if self.method.requires_base() && !has_base {
            return Err(MergeError::BaseRequired(self.method));
        }
        Ok(())
    }
}

/// Per-tensor delta θ_role − θ_base.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskVector {
    pub name: String,
    pub delta: Vec<f64>,
}

impl TaskVector {
    pub fn between(
        name: impl Into<String>,
        tuned: &[f32],
        base: &[f32],
    ) -> Result<Self, MergeError> {
        check_len(tuned.len(), base.len())?;
        Ok(TaskVector {
            name: name.into(),
            delta: tuned
                .iter()
                .zip(base)
                .map(|(&t, &b)| f64::from(t) - f64::from(b))
                .collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.delta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta.is_empty()
    }
}

/// Geometry recorded by SLERP for one tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorMergeDiagnostic {
    pub name: String,
    pub angle_radians: f64,
    pub dot: f64,
    pub norm_direct: f64,
    pub norm_think: f64,
    pub collinear_fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergedTensor {
    pub values: Vec<f32>,
    pub diagnostic: Option<TensorMergeDiagnostic>,
}

/// Applies `recipe` to one aligned tensor triple.
pub fn merge_tensor(
    recipe: &MergeRecipe,
    name: &str,
    shape: &[usize],
    direct: &[f32],
    think: &[f32],
    base: Option<&[f32]>,
) -> Result<MergedTensor, MergeError> {
    recipe.validate(base.is_some())?;
    check_len(direct.len(), think.len())?;
    if let Some(b) = base {
        check_len(direct.len(), b.len())?;
    }
    let expected: usize = shape.iter().product();
    check_len(expected, direct.len())?;
    let lambda = recipe.strength;
    let base_or_err = || base.ok_or(MergeError::BaseRequired(recipe.method));
    let values = match recipe.method {
        MergeMethod::WeightedAverage => weighted_average(direct, think, lambda)?,
        MergeMethod::Slerp => {
            let (values, diag) =
                slerp_merge(name, direct, think, lambda, DEFAULT_COLLINEARITY_EPS)?;
            return Ok(MergedTensor {
                values,
                diagnostic: Some(diag),
            });
        }
        MergeMethod::Dare => dare_merge(
            name,
            direct,
            think,
            base_or_err()?,
            lambda,
            recipe.drop_rate,
            recipe.seed,
        )?,
        MergeMethod::Ties => ties_merge(
            direct,
            think,
            base_or_err()?,
            lambda,
            1.0 - recipe.drop_rate,
        )?,
        MergeMethod::Emr => emr_merge(direct, think, base_or_err()?, lambda)?,
        MergeMethod::Lore => lore_merge(
            direct,
            think,
            shape,
            lambda,
            recipe.svt_threshold_fraction,
            recipe.lore_iters,
        )?,
        MergeMethod::Twin => twin_merge(direct, think, base_or_err()?, lambda, recipe.drop_rate)?,
        m if m.is_top_k() => {
            let k = recipe.effective_top_k();
            match m {
                MergeMethod::TopkReplace => topk_replace(direct, think, k)?,
                MergeMethod::TopkDiffAverage => topk_diff_average(direct, think, k)?,
                _ => global_avg_topk_override(direct, think, k)?,
            }
        }
        _ => unreachable!("all methods handled"),
    };
    Ok(MergedTensor {
        values,
        diagnostic: None,
    })
}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<(), MergeError> {
    if expected != found {
        return Err(MergeError::ShapeMismatch { expected, found });
    }
    Ok(())
}

pub(crate) fn check_unit(what: &str, v: f64) -> Result<(), MergeError> {
    if !(0.0..=1.0).contains(&v) {
        return Err(MergeError::InvalidParameter(format!(
            "{what} must lie in [0, 1], got {v}"
        )));
    }
    Ok(())
}

/// Strict sign: 0 stays 0.
pub(crate) fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub(crate) fn deltas(tuned: &[f32], base: &[f32]) -> Vec<f64> {
    tuned
        .iter()
        .zip(base)
        .map(|(&t, &b)| f64::from(t) - f64::from(b))
        .collect()
}

/// Neumaier-compensated sum.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests;
