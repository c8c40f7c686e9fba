use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::DivergenceError;

/// Number of log-domain buckets used once squared deltas no longer fit the
/// exact budget.
pub const LOG_BUCKETS: usize = 4096;
/// Dynamic range of the log buckets, in powers of two below the maximum.
const LOG_SPAN: f64 = 64.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub quantile: f64,
    pub cumulative_share: f64,
}

/// Share of Σδ² carried by the smallest `q` fraction of squared deltas,
/// next to the same functional for a variance-matched χ²(1) (the square of
/// a Gaussian difference).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulativeCurve {
    pub points: Vec<CurvePoint>,
    pub reference_points: Vec<CurvePoint>,
    /// Empirical variance of δ the reference is scaled to.
    pub variance: f64,
    pub total_count: u64,
    /// False when the curve was interpolated from log buckets.
    pub exact: bool,
}

impl CumulativeCurve {
    /// Largest vertical gap between the empirical and reference curves.
    pub fn sup_distance(&self) -> f64 {
        self.points
            .iter()
            .zip(&self.reference_points)
            .map(|(a, b)| (a.cumulative_share - b.cumulative_share).abs())
            .fold(0.0, f64::max)
    }
}

/// Cumulative share of a χ²(1) variable (scaled by any variance) held by
/// its lower `q` quantile: `q − 2aφ(a)` with `a = Φ⁻¹((1 + q)/2)`. The
/// functional is scale-free, so the variance only labels the reference.
pub fn chi2_lorenz_reference(q: f64) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    if q >= 1.0 {
        return 1.0;
    }
    let normal = Normal::standard();
    let a = normal.inverse_cdf((1.0 + q) / 2.0);
    if !a.is_finite() {
        return 1.0;
    }
    (q - 2.0 * a * normal.pdf(a)).clamp(0.0, 1.0)
}

/// Accumulator for squared deltas: exact values while small, a fixed
/// log-domain histogram otherwise.
#[derive(Debug, Clone)]
pub enum SquaredDeltaSketch {
    Exact(Vec<f64>),
    LogBuckets {
        max_sq: f64,
        zeros: u64,
        counts: Vec<u64>,
        sums: Vec<f64>,
    },
}

impl SquaredDeltaSketch {
    pub fn exact() -> Self {
        SquaredDeltaSketch::Exact(Vec::new())
    }

    /// Bucketed sketch for squared values in `[0, max_sq]`.
    pub fn log_buckets(max_sq: f64) -> Self {
        SquaredDeltaSketch::LogBuckets {
            max_sq,
            zeros: 0,
            counts: vec![0; LOG_BUCKETS],
            sums: vec![0.0; LOG_BUCKETS],
        }
    }

    fn bucket(max_sq: f64, sq: f64) -> usize {
        let lo = max_sq.log2() - LOG_SPAN;
        let b = ((sq.log2() - lo) / (LOG_SPAN / LOG_BUCKETS as f64)).floor();
        (b.max(0.0) as usize).min(LOG_BUCKETS - 1)
    }

    /// Adds deltas (not squares).
    pub fn extend(&mut self, deltas: impl IntoIterator<Item = f64>) {
        match self {
            SquaredDeltaSketch::Exact(v) => v.extend(deltas.into_iter().map(|d| d * d)),
            SquaredDeltaSketch::LogBuckets {
                max_sq,
                zeros,
                counts,
                sums,
            } => {
                for d in deltas {
                    let sq = d * d;
                    if sq == 0.0 {
                        *zeros += 1;
                    } else {
                        let b = Self::bucket(*max_sq, sq);
                        counts[b] += 1;
                        sums[b] += sq;
                    }
                }
            }
        }
    }

    pub fn merge(&mut self, other: SquaredDeltaSketch) {
        match (self, other) {
            (SquaredDeltaSketch::Exact(a), SquaredDeltaSketch::Exact(b)) => a.extend(b),
            (
                SquaredDeltaSketch::LogBuckets {
                    zeros,
                    counts,
                    sums,
                    ..
                },
                SquaredDeltaSketch::LogBuckets {
                    zeros: z2,
                    counts: c2,
                    sums: s2,
                    ..
                },
            ) => {
                *zeros += z2;
                for (a, b) in counts.iter_mut().zip(c2) {
                    *a += b;
                }
                for (a, b) in sums.iter_mut().zip(s2) {
                    *a += b;
                }
            }
            _ => panic!("cannot merge exact and bucketed sketches"),
        }
    }

    pub fn count(&self) -> u64 {
        match self {
            SquaredDeltaSketch::Exact(v) => v.len() as u64,
            SquaredDeltaSketch::LogBuckets { zeros, counts, .. } => {
                zeros + counts.iter().sum::<u64>()
            }
        }
    }

    /// Evaluates the curve on `grid + 1` evenly spaced quantiles.
    pub fn curve(self, grid: usize, variance: f64) -> Result<CumulativeCurve, DivergenceError> {
        if grid == 0 {
            return Err(DivergenceError::InvalidParameter(
                "grid must be positive".into(),
            ));
        }
        let n = self.count();
        if n == 0 {
            return Err(DivergenceError::EmptyStream);
        }
        // smallest-k partial sums at k_j = floor(j·n / grid)
        let ks: Vec<u64> = (0..=grid)
            .map(|j| ((j as u128 * n as u128) / grid as u128) as u64)
            .collect();
        let (partial, exact) = match self {
            SquaredDeltaSketch::Exact(mut v) => {
                v.sort_unstable_by(f64::total_cmp);
                let mut prefix = Vec::with_capacity(v.len() + 1);
                let mut acc = 0.0f64;
                prefix.push(0.0);
                for x in &v {
                    acc += x;
                    prefix.push(acc);
                }
                (
                    ks.iter().map(|&k| prefix[k as usize]).collect::<Vec<_>>(),
                    true,
                )
            }
            SquaredDeltaSketch::LogBuckets {
                zeros,
                counts,
                sums,
                ..
            } => {
                let mut out = Vec::with_capacity(ks.len());
                for &k in &ks {
                    let mut need = k.saturating_sub(zeros);
                    let mut acc = 0.0;
                    for (c, s) in counts.iter().zip(&sums) {
                        if need == 0 {
                            break;
                        }
                        if *c <= need {
                            acc += s;
                            need -= c;
                        } else {
                            acc += s * (need as f64 / *c as f64);
                            need = 0;
                        }
                    }
                    out.push(acc);
                }
                (out, false)
            }
        };
        let total = *partial.last().expect("grid has points");
        if total == 0.0 {
            return Err(DivergenceError::DegenerateCurve);
        }
        let mut points = Vec::with_capacity(grid + 1);
        let mut reference_points = Vec::with_capacity(grid + 1);
        let mut running = 0.0f64;
        let mut running_ref = 0.0f64;
        for (j, p) in partial.iter().enumerate() {
            let q = j as f64 / grid as f64;
            running = running.max((p / total).min(1.0));
            running_ref = running_ref.max(chi2_lorenz_reference(q));
            points.push(CurvePoint {
                quantile: q,
                cumulative_share: running,
            });
            reference_points.push(CurvePoint {
                quantile: q,
                cumulative_share: running_ref,
            });
        }
        points.last_mut().expect("non-empty").cumulative_share = 1.0;
        reference_points
            .last_mut()
            .expect("non-empty")
            .cumulative_share = 1.0;
        Ok(CumulativeCurve {
            points,
            reference_points,
            variance,
            total_count: n,
            exact,
        })
    }
}

/// Cumulative squared-delta curve of an in-memory delta stream.
pub fn cumulative_sq_curve(
    deltas: impl IntoIterator<Item = f64>,
    grid: usize,
) -> Result<CumulativeCurve, DivergenceError> {
    let deltas: Vec<f64> = deltas.into_iter().collect();
    if deltas.is_empty() {
        return Err(DivergenceError::EmptyStream);
    }
    let n = deltas.len() as f64;
    let mean = deltas.iter().sum::<f64>() / n;
    let variance = deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
    let mut sketch = SquaredDeltaSketch::exact();
    sketch.extend(deltas);
    sketch.curve(grid, variance)
}
