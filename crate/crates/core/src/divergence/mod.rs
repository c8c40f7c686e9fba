//! Parameter-space divergence between two checkpoints.
//!
//! [`compute_divergence`] streams aligned tensor pairs twice: the first pass
//! gathers global sums and the largest |δ|, the second fills a histogram
//! that is symmetric about zero and, optionally, the squared-delta sketch
//! behind [`CumulativeCurve`]. Per-tensor partials are reduced in
//! name-sorted order, so results do not depend on scheduling.

mod curve;
mod probe;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use curve::{
    chi2_lorenz_reference, cumulative_sq_curve, CumulativeCurve, CurvePoint, SquaredDeltaSketch,
    LOG_BUCKETS,
};
pub use probe::{
    dare_viability_probe, probe_dir, ProbeEntry, ProbeManifest, ProbeOptions, PROBE_STREAM,
};

use crate::merge::{compensated_sum, MergeError};
use crate::store::{Checkpoint, StoreError};

pub const DEFAULT_BINS: usize = 2001;
pub const DEFAULT_THRESHOLD: f64 = 0.002;
pub const DEFAULT_CURVE_GRID: usize = 1000;
/// Squared deltas kept exactly before the curve switches to the log-bucket
/// sketch (8 bytes each).
pub const DEFAULT_EXACT_CURVE_LIMIT: u64 = 64 * 1024 * 1024;

#[derive(Debug, thiserror::Error)]
pub enum DivergenceError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Merge(#[from] MergeError),
    #[error("checkpoints are not aligned: {0}")]
    TensorSetMismatch(String),
    #[error("direct checkpoint has zero norm; relative distance undefined")]
    ZeroNorm,
    #[error("delta stream is empty")]
    EmptyStream,
    #[error("all deltas are zero; cumulative curve undefined")]
    DegenerateCurve,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub bin_left: f64,
    pub bin_right: f64,
    pub count: u64,
}

/// Global statistics of δ = θ_think − θ_direct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub histogram: Vec<HistogramBin>,
    pub threshold: f64,
    /// Share of parameters with |δ| ≤ threshold.
    pub fraction_within_threshold: f64,
    /// ‖δ‖₂ / ‖θ_direct‖₂.
    pub relative_l2: f64,
    pub total_params: u64,
    pub delta_mean: f64,
    pub delta_variance: f64,
    pub max_abs_delta: f64,
    pub l2_delta: f64,
    pub l2_direct: f64,
}

#[derive(Debug, Clone)]
pub struct DivergenceOptions {
    pub bins: usize,
    pub threshold: f64,
    /// Curve grid size; `None` skips the cumulative curve.
    pub curve_grid: Option<usize>,
    pub exact_curve_limit: u64,
    pub workers: Option<usize>,
}

impl Default for DivergenceOptions {
    fn default() -> Self {
        DivergenceOptions {
            bins: DEFAULT_BINS,
            threshold: DEFAULT_THRESHOLD,
            curve_grid: None,
            exact_curve_limit: DEFAULT_EXACT_CURVE_LIMIT,
            workers: None,
        }
    }
}

#[derive(Debug, Default, Clone)]
struct TensorStats {
    n: u64,
    within: u64,
    sum_delta: f64,
    sum_sq_delta: f64,
    sum_sq_direct: f64,
    max_abs: f64,
}

/// Checks that both checkpoints hold the same tensor names and shapes and
/// returns the names in sorted order.
pub fn aligned_names(a: &Checkpoint, b: &Checkpoint) -> Result<Vec<String>, DivergenceError> {
    for (name, meta) in a.tensors() {
        match b.meta(name) {
            None => {
                return Err(DivergenceError::TensorSetMismatch(format!(
                    "{name} missing from {}",
                    b.path().display()
                )))
            }
            Some(m) if m.shape != meta.shape => {
                return Err(DivergenceError::TensorSetMismatch(format!(
                    "{name}: shape {:?} vs {:?}",
                    meta.shape, m.shape
                )))
            }
            _ => {}
        }
    }
    if let Some(extra) = b.tensor_names().find(|n| a.meta(n).is_none()) {
        return Err(DivergenceError::TensorSetMismatch(format!(
            "{extra} missing from {}",
            a.path().display()
        )));
    }
    Ok(a.tensor_names().map(str::to_string).collect())
}

pub(crate) fn thread_pool(workers: Option<usize>) -> rayon::ThreadPool {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        b = b.num_threads(w.max(1));
    }
    b.build().expect("thread pool")
}

fn load_deltas(
    direct: &Checkpoint,
    think: &Checkpoint,
    name: &str,
) -> Result<(Vec<f32>, Vec<f64>), DivergenceError> {
    let d = direct.load_tensor(name)?.values;
    let t = think.load_tensor(name)?.values;
    let delta = d
        .iter()
        .zip(&t)
        .map(|(&a, &b)| f64::from(b) - f64::from(a))
        .collect();
    Ok((d, delta))
}

/// Histogram and global statistics of θ_think − θ_direct.
pub fn compute_divergence(
    direct: &Checkpoint,
    think: &Checkpoint,
    opts: &DivergenceOptions,
) -> Result<DivergenceReport, DivergenceError> {
    let opts = DivergenceOptions {
        curve_grid: None,
        ..opts.clone()
    };
    compute_divergence_with_curve(direct, think, &opts).map(|(r, _)| r)
}

/// [`compute_divergence`] plus the cumulative squared-delta curve when
/// `opts.curve_grid` is set.
pub fn compute_divergence_with_curve(
    direct: &Checkpoint,
    think: &Checkpoint,
    opts: &DivergenceOptions,
) -> Result<(DivergenceReport, Option<CumulativeCurve>), DivergenceError> {
    if opts.bins == 0 {
        return Err(DivergenceError::InvalidParameter(
            "bins must be positive".into(),
        ));
    }
    if !(opts.threshold >= 0.0) {
        return Err(DivergenceError::InvalidParameter(format!(
            "threshold must be non-negative, got {}",
            opts.threshold
        )));
    }
    let names = aligned_names(direct, think)?;
    let pool = thread_pool(opts.workers);
    let threshold = opts.threshold;

    let per_tensor: Vec<TensorStats> = pool.install(|| {
        names
            .par_iter()
            .map(|name| {
                let (d, delta) = load_deltas(direct, think, name)?;
                Ok(TensorStats {
                    n: delta.len() as u64,
                    within: delta.iter().filter(|x| x.abs() <= threshold).count() as u64,
                    sum_delta: compensated_sum(delta.iter().copied()),
                    sum_sq_delta: compensated_sum(delta.iter().map(|x| x * x)),
                    sum_sq_direct: compensated_sum(d.iter().map(|&x| f64::from(x) * f64::from(x))),
                    max_abs: delta.iter().fold(0.0f64, |m, x| m.max(x.abs())),
                })
            })
            .collect::<Result<_, DivergenceError>>()
    })?;

    let n: u64 = per_tensor.iter().map(|s| s.n).sum();
    let within: u64 = per_tensor.iter().map(|s| s.within).sum();
    let sum_delta = compensated_sum(per_tensor.iter().map(|s| s.sum_delta));
    let sum_sq_delta = compensated_sum(per_tensor.iter().map(|s| s.sum_sq_delta));
    let sum_sq_direct = compensated_sum(per_tensor.iter().map(|s| s.sum_sq_direct));
    let max_abs = per_tensor.iter().fold(0.0f64, |m, s| m.max(s.max_abs));
    if n == 0 {
        return Err(DivergenceError::EmptyStream);
    }
    if sum_sq_direct == 0.0 {
        return Err(DivergenceError::ZeroNorm);
    }

    let half_range = if max_abs > 0.0 {
        max_abs
    } else if threshold > 0.0 {
        threshold
    } else {
        1.0
    };
    let bins = opts.bins;
    let width = 2.0 * half_range / bins as f64;
    let bin_of =
        |x: f64| -> usize { (((x + half_range) / width).floor().max(0.0) as usize).min(bins - 1) };

    let exact_curve = n <= opts.exact_curve_limit;
    let max_sq = max_abs * max_abs;
    let mut counts = vec![0u64; bins];
    let mut sketch: Option<SquaredDeltaSketch> = None;
    // one tensor per worker in flight; partial results are folded in name
    // order so the outcome does not depend on scheduling
    let chunk = pool.current_num_threads().max(1);
    for group in names.chunks(chunk) {
        let partial: Vec<(Vec<u64>, Option<SquaredDeltaSketch>)> = pool.install(|| {
            group
                .par_iter()
                .map(|name| {
                    let (_, delta) = load_deltas(direct, think, name)?;
                    let mut counts = vec![0u64; bins];
                    for &x in &delta {
                        counts[bin_of(x)] += 1;
                    }
                    let sketch = opts.curve_grid.map(|_| {
                        let mut s = if exact_curve {
                            SquaredDeltaSketch::exact()
                        } else {
                            SquaredDeltaSketch::log_buckets(max_sq)
                        };
                        s.extend(delta.iter().copied());
                        s
                    });
                    Ok((counts, sketch))
                })
                .collect::<Result<_, DivergenceError>>()
        })?;
        for (c, s) in partial {
            for (acc, v) in counts.iter_mut().zip(c) {
                *acc += v;
            }
            if let Some(s) = s {
                match sketch.as_mut() {
                    None => sketch = Some(s),
                    Some(acc) => acc.merge(s),
                }
            }
        }
    }
    let histogram = counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin {
            bin_left: -half_range + i as f64 * width,
            bin_right: -half_range + (i + 1) as f64 * width,
            count,
        })
        .collect();
    let mean = sum_delta / n as f64;
    let report = DivergenceReport {
        histogram,
        threshold,
        fraction_within_threshold: within as f64 / n as f64,
        relative_l2: sum_sq_delta.sqrt() / sum_sq_direct.sqrt(),
        total_params: n,
        delta_mean: mean,
        delta_variance: (sum_sq_delta / n as f64 - mean * mean).max(0.0),
        max_abs_delta: max_abs,
        l2_delta: sum_sq_delta.sqrt(),
        l2_direct: sum_sq_direct.sqrt(),
    };
    let curve = match (opts.curve_grid, sketch) {
        (Some(grid), Some(s)) => Some(s.curve(grid, report.delta_variance)?),
        _ => None,
    };
    Ok((report, curve))
}

/// Writes the report (and curve, when present) as pretty JSON.
pub fn write_report_json(
    path: &Path,
    report: &DivergenceReport,
    curve: Option<&CumulativeCurve>,
) -> Result<(), StoreError> {
    #[derive(Serialize)]
    struct Doc<'a> {
        report: &'a DivergenceReport,
        #[serde(skip_serializing_if = "Option::is_none")]
        cumulative_curve: Option<&'a CumulativeCurve>,
    }
    let text = serde_json::to_string_pretty(&Doc {
        report,
        cumulative_curve: curve,
    })
    .expect("report serializes");
    write_file(path, text.as_bytes())
}

/// Writes `histogram.csv` and, when present, `cumulative_curve.csv` into
/// `dir`.
pub fn write_csv(
    dir: &Path,
    report: &DivergenceReport,
    curve: Option<&CumulativeCurve>,
) -> Result<Vec<PathBuf>, StoreError> {
    std::fs::create_dir_all(dir).map_err(|e| StoreError::io(dir, e))?;
    let mut written = Vec::new();
    let path = dir.join("histogram.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    for bin in &report.histogram {
        w.serialize(bin).map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| StoreError::io(&path, e))?;
    written.push(path);
    if let Some(curve) = curve {
        let path = dir.join("cumulative_curve.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
        w.write_record(["quantile", "cumulative_share", "reference_share"])
            .map_err(|e| csv_err(&path, e))?;
        for (p, r) in curve.points.iter().zip(&curve.reference_points) {
            w.write_record([
                p.quantile.to_string(),
                p.cumulative_share.to_string(),
                r.cumulative_share.to_string(),
            ])
            .map_err(|e| csv_err(&path, e))?;
        }
        w.flush().map_err(|e| StoreError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

fn csv_err(path: &Path, e: csv::Error) -> StoreError {
    StoreError::io(path, std::io::Error::other(e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| StoreError::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| StoreError::io(path, e))
}
