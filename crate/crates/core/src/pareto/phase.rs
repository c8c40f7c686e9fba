use serde::{Deserialize, Serialize};

use super::ParetoError;

/// Share of the accuracy range the gain window has to cover.
pub const GAIN_SHARE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDifference {
    pub from: f64,
    pub to: f64,
    pub delta: f64,
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseChangeReport {
    pub benchmark: String,
    pub max_slope_interval: (f64, f64),
    pub max_slope: f64,
    /// Shortest strength window whose accuracy increases add up to half of
    /// the accuracy range.
    pub gain_window: (f64, f64),
    /// Sum of positive increases inside the window over the accuracy range.
    pub gain_share: f64,
    pub steps: Vec<StepDifference>,
}

/// Locates the steepest step and the shortest window holding half of the
/// accuracy gain in a `(strength, accuracy)` series. Ties go to the
/// smaller strength.
pub fn detect_phase_change(
    benchmark: &str,
    series: &[(f64, f64)],
) -> Result<PhaseChangeReport, ParetoError> {
    if series.len() < 3 {
        return Err(ParetoError::TooFewPoints(series.len()));
    }
    if series.iter().any(|(s, a)| !s.is_finite() || !a.is_finite())
        || series.windows(2).any(|w| w[1].0 <= w[0].0)
    {
        return Err(ParetoError::NotIncreasing);
    }
    let (lo, hi) = series
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, a)| {
            (lo.min(a), hi.max(a))
        });
    let range = hi - lo;
    if range <= 1e-12 * hi.abs().max(1.0) {
        return Err(ParetoError::NoTransition);
    }

    let steps: Vec<StepDifference> = series
        .windows(2)
        .map(|w| {
            let delta = w[1].1 - w[0].1;
            StepDifference {
                from: w[0].0,
                to: w[1].0,
                delta,
                slope: delta / (w[1].0 - w[0].0),
            }
        })
        .collect();

    let steepest = steps
        .iter()
        .map(|s| s.slope)
        .fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-9 * steps.iter().map(|s| s.slope.abs()).fold(0.0, f64::max);
    let k = steps
        .iter()
        .position(|s| s.slope >= steepest - tol)
        .expect("at least two steps");

    // prefix sums of positive increases
    let mut gain = vec![0.0; steps.len() + 1];
    for (i, s) in steps.iter().enumerate() {
        gain[i + 1] = gain[i] + s.delta.max(0.0);
    }
    let target = GAIN_SHARE * range * (1.0 - 1e-12);
    let mut best: Option<(usize, usize, f64)> = None;
    for i in 0..series.len() {
        for j in i + 1..series.len() {
            if gain[j] - gain[i] >= target {
                let width = series[j].0 - series[i].0;
                let shorter = best.is_none_or(|(_, _, w)| width < w - 1e-12 * w.abs().max(1.0));
                if shorter {
                    best = Some((i, j, width));
                }
                break;
            }
        }
    }
    // a series that only falls has no gain to localise
    let (i, j, _) = best.ok_or(ParetoError::NoTransition)?;

    Ok(PhaseChangeReport {
        benchmark: benchmark.to_string(),
        max_slope_interval: (steps[k].from, steps[k].to),
        max_slope: steps[k].slope,
        gain_window: (series[i].0, series[j].0),
        gain_share: (gain[j] - gain[i]) / range,
        steps,
    })
}
