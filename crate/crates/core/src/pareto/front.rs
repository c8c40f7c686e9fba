use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::ParetoPoint;

/// `a` dominates `b`: no worse on accuracy and tokens, strictly better on
/// at least one.
pub fn dominates(a: &ParetoPoint, b: &ParetoPoint) -> bool {
    a.accuracy_mean >= b.accuracy_mean
        && a.mean_tokens <= b.mean_tokens
        && (a.accuracy_mean > b.accuracy_mean || a.mean_tokens < b.mean_tokens)
}

fn front_order(a: &ParetoPoint, b: &ParetoPoint) -> Ordering {
    a.mean_tokens
        .total_cmp(&b.mean_tokens)
        .then(b.accuracy_mean.total_cmp(&a.accuracy_mean))
        .then_with(|| a.model_id.cmp(&b.model_id))
        .then_with(|| a.benchmark.cmp(&b.benchmark))
}

/// Non-dominated points, sorted by token cost ascending. Exact duplicates
/// do not dominate each other and are all kept.
pub fn pareto_front(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    let mut sorted: Vec<&ParetoPoint> = points.iter().collect();
    sorted.sort_by(|a, b| front_order(a, b));
    let mut front = Vec::new();
    // best accuracy among points with strictly fewer tokens
    let mut best_before = f64::NEG_INFINITY;
    let mut i = 0;
    while i < sorted.len() {
        let tokens = sorted[i].mean_tokens;
        let group_end = sorted[i..]
            .iter()
            .position(|p| p.mean_tokens != tokens)
            .map_or(sorted.len(), |k| i + k);
        let group_best = sorted[i].accuracy_mean;
        if group_best > best_before {
            front.extend(
                sorted[i..group_end]
                    .iter()
                    .take_while(|p| p.accuracy_mean == group_best)
                    .map(|p| (*p).clone()),
            );
            best_before = group_best;
        }
        i = group_end;
    }
    front
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub point: ParetoPoint,
    /// The point's lower CI bound lies above the parent's upper bound.
    pub ci_robust: bool,
}

/// Points that dominate `parent`, in input order.
pub fn pareto_improvements(points: &[ParetoPoint], parent: &ParetoPoint) -> Vec<Improvement> {
    points
        .iter()
        .filter(|p| dominates(p, parent))
        .map(|p| Improvement {
            ci_robust: p.accuracy_ci.0 > parent.accuracy_ci.1,
            point: p.clone(),
        })
        .collect()
}
