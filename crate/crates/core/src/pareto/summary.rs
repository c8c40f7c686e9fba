use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EvalRecord, ParetoError, ParetoPoint};

#[derive(Debug, Clone)]
pub struct SummaryOptions {
    pub ci_level: f64,
    pub bootstrap_n: usize,
    pub seed: u64,
}

impl Default for SummaryOptions {
    fn default() -> Self {
        SummaryOptions {
            ci_level: 0.90,
            bootstrap_n: 10_000,
            seed: 0,
        }
    }
}

/// Accuracy with a percentile-bootstrap interval and token statistics.
///
/// Each bootstrap replicate draws `n_trials` trials with replacement; the
/// interval bounds are the lower empirical quantiles of the replicate means
/// at `(1 - ci_level) / 2` and `(1 + ci_level) / 2`.
pub fn summarize(record: &EvalRecord, opts: &SummaryOptions) -> Result<ParetoPoint, ParetoError> {
    if record.trials.is_empty() {
        return Err(ParetoError::InvalidParameter("record has no trials".into()));
    }
    if !(opts.ci_level > 0.0 && opts.ci_level < 1.0) {
        return Err(ParetoError::InvalidParameter(format!(
            "ci_level {} outside (0, 1)",
            opts.ci_level
        )));
    }
    if opts.bootstrap_n == 0 {
        return Err(ParetoError::InvalidParameter(
            "bootstrap_n must be positive".into(),
        ));
    }
    let n = record.trials.len();
    let correct: Vec<bool> = record.trials.iter().map(|t| t.correct).collect();
    let hits = correct.iter().filter(|&&c| c).count();
    let mean = hits as f64 / n as f64;

    let ci = if hits == 0 || hits == n {
        (mean, mean)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut reps: Vec<u32> = (0..opts.bootstrap_n)
            .map(|_| (0..n).filter(|_| correct[rng.random_range(0..n)]).count() as u32)
            .collect();
        reps.sort_unstable();
        let alpha = (1.0 - opts.ci_level) / 2.0;
        let q = |p: f64| {
            let idx = ((p * reps.len() as f64).ceil() as usize).clamp(1, reps.len()) - 1;
            f64::from(reps[idx]) / n as f64
        };
        (q(alpha).min(mean), q(1.0 - alpha).max(mean))
    };

    let mut tokens: Vec<u64> = record.trials.iter().map(|t| t.output_tokens).collect();
    tokens.sort_unstable();
    let mean_tokens = tokens.iter().map(|&t| t as f64).sum::<f64>() / n as f64;
    let median_tokens = if n % 2 == 1 {
        tokens[n / 2] as f64
    } else {
        (tokens[n / 2 - 1] as f64 + tokens[n / 2] as f64) / 2.0
    };
    Ok(ParetoPoint {
        model_id: record.model_id.clone(),
        benchmark: record.benchmark.clone(),
        method: record.method.clone(),
        strength: record.strength,
        accuracy_mean: mean,
        accuracy_ci: ci,
        mean_tokens,
        median_tokens,
        n_trials: n,
    })
}
