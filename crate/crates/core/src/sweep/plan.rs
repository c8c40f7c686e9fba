use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{DtypePolicy, SidecarSource, SweepError};
use crate::merge::{MergeMethod, MergeRecipe};
use crate::store::WriterOptions;

/// Grid values are rounded to this many decimal places after expansion so
/// that `0.6 + 7 * 0.01` lands on `0.67`.
const GRID_DECIMALS: i32 = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParentPaths {
    pub direct: PathBuf,
    pub think: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Range { start: f64, stop: f64, step: f64 },
    List(Vec<f64>),
}

impl GridSpec {
    /// Expands a range inclusively; the step must divide the span.
    pub fn expand(&self) -> Result<Vec<f64>, SweepError> {
        let values = match self {
            GridSpec::List(v) => v.clone(),
            &GridSpec::Range { start, stop, step } => {
                if !(step > 0.0) || !step.is_finite() {
                    return Err(SweepError::InvalidGrid(format!(
                        "step {step} must be positive"
                    )));
                }
                let span = (stop - start) / step;
                let count = span.round();
                if !(count >= 0.0) || (span - count).abs() > 1e-6 {
                    return Err(SweepError::InvalidGrid(format!(
                        "step {step} does not divide [{start}, {stop}]"
                    )));
                }
                let scale = 10f64.powi(GRID_DECIMALS);
                (0..=count as usize)
                    .map(|i| ((start + i as f64 * step) * scale).round() / scale)
                    .collect()
            }
        };
        if values.is_empty() {
            return Err(SweepError::InvalidGrid("grid is empty".into()));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(SweepError::InvalidGrid(format!(
                "strength {v} outside [0, 1]"
            )));
        }
        if let Some(w) = values.windows(2).find(|w| w[1] <= w[0]) {
            return Err(SweepError::InvalidGrid(format!(
                "grid not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        Ok(values)
    }
}

/// A method entry: either a bare name or a template with hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MethodSpec {
    Name(MergeMethod),
    Template(MethodTemplate),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodTemplate {
    pub method: MergeMethod,
    #[serde(default)]
    pub drop_rate: Option<f64>,
    #[serde(default)]
    pub top_k_fraction: Option<f64>,
    #[serde(default)]
    pub svt_threshold_fraction: Option<f64>,
    #[serde(default)]
    pub lore_iters: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// The JSON sweep configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parents: ParentPaths,
    pub output_root: PathBuf,
    pub grid: GridSpec,
    pub methods: Vec<MethodSpec>,
    #[serde(default)]
    pub dtype_policy: DtypePolicy,
    #[serde(default)]
    pub sidecars: SidecarSource,
    /// Seed for recipes that do not set their own.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub shard_limit_bytes: Option<u64>,
    #[serde(default)]
    pub workers: Option<usize>,
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SweepError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SweepError::io(path, e))?;
        let mut cfg = Self::from_json(&text).map_err(|source| SweepError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        let dir = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        resolve(&mut cfg.parents.direct);
        resolve(&mut cfg.parents.think);
        if let Some(b) = cfg.parents.base.as_mut() {
            resolve(b);
        }
        resolve(&mut cfg.output_root);
        Ok(cfg)
    }
}

/// A validated sweep: every method template crossed with every strength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    /// Templates; their `strength` is ignored.
    pub methods: Vec<MergeRecipe>,
    pub grid: Vec<f64>,
    pub parents: ParentPaths,
    pub output_root: PathBuf,
    pub dtype_policy: DtypePolicy,
    pub sidecars: SidecarSource,
    pub shard_limit_bytes: u64,
    pub workers: Option<usize>,
}

impl SweepPlan {
    /// All recipes in execution order: methods in config order, strengths
    /// ascending.
    pub fn recipes(&self) -> Vec<MergeRecipe> {
        self.methods
            .iter()
            .flat_map(|m| {
                self.grid.iter().map(move |&s| MergeRecipe {
                    strength: s,
                    ..m.clone()
                })
            })
            .collect()
    }

    /// Hex SHA-256 over everything that determines the outputs. The output
    /// root and worker count are excluded.
    pub fn digest(&self) -> String {
        let fingerprint = serde_json::json!({
            "methods": self.methods,
            "grid": self.grid,
            "parents": self.parents,
            "dtype_policy": self.dtype_policy,
            "sidecars": self.sidecars,
            "shard_limit_bytes": self.shard_limit_bytes,
        });
        hex::encode(Sha256::digest(fingerprint.to_string().as_bytes()))
    }
}

/// Validates a config and expands it into a plan.
pub fn plan_sweep(config: &SweepConfig) -> Result<SweepPlan, SweepError> {
    let grid = config.grid.expand()?;
    if config.methods.is_empty() {
        return Err(SweepError::InvalidConfig("no methods listed".into()));
    }
    let mut parents = vec![&config.parents.direct, &config.parents.think];
    parents.extend(config.parents.base.as_ref());
    if let Some(missing) = parents.into_iter().find(|p| !p.exists()) {
        return Err(SweepError::MissingParent(missing.clone()));
    }
    let has_base = config.parents.base.is_some();

    let mut methods: Vec<MergeRecipe> = Vec::with_capacity(config.methods.len());
    for spec in &config.methods {
        let recipe = match spec {
            MethodSpec::Name(m) => MergeRecipe::new(*m, 0.0).with_seed(config.seed),
            MethodSpec::Template(t) => {
                let mut r =
                    MergeRecipe::new(t.method, 0.0).with_seed(t.seed.unwrap_or(config.seed));
                if let Some(p) = t.drop_rate {
                    r.drop_rate = p;
                }
                r.top_k_fraction = t.top_k_fraction;
                if let Some(f) = t.svt_threshold_fraction {
                    r.svt_threshold_fraction = f;
                }
                if let Some(n) = t.lore_iters {
                    r.lore_iters = n;
                }
                r
            }
        };
        if methods.iter().any(|m| m.method == recipe.method) {
            return Err(SweepError::InvalidConfig(format!(
                "{} listed twice; (method, strength) pairs must be unique",
                recipe.method
            )));
        }
        if recipe.method.requires_base() && !has_base {
            return Err(SweepError::BaseRequired {
                method: recipe.method,
            });
        }
        for &s in &grid {
            let r = MergeRecipe {
                strength: s,
                ..recipe.clone()
            };
            r.validate(has_base)
                .map_err(|e| SweepError::InvalidConfig(e.to_string()))?;
        }
        methods.push(recipe);
    }
    if config.workers == Some(0) {
        return Err(SweepError::InvalidConfig(
            "workers must be at least 1".into(),
        ));
    }

    Ok(SweepPlan {
        methods,
        grid,
        parents: config.parents.clone(),
        output_root: config.output_root.clone(),
        dtype_policy: config.dtype_policy,
        sidecars: config.sidecars,
        shard_limit_bytes: config
            .shard_limit_bytes
            .unwrap_or(WriterOptions::default().shard_limit_bytes),
        workers: config.workers,
    })
}
