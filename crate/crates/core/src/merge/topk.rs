/// Number of entries selected by `fraction` of `n`, rounding up. Products
/// within 1e-9 of an integer count as that integer, so `(1/3) * 3` selects
/// one entry rather than two.
pub fn fraction_count(fraction: f64, n: usize) -> usize {
    let x = fraction * n as f64;
    let r = x.round();
    let m = if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r
    } else {
        x.ceil()
    };
    (m.max(0.0) as usize).min(n)
}

/// Marks the `m` entries with the largest score. Ties at the cut-off are
/// resolved in favour of the lower index.
pub fn top_k_mask(scores: &[f64], m: usize) -> Vec<bool> {
    let n = scores.len();
    if m >= n {
        return vec![true; n];
    }
    if m == 0 {
        return vec![false; n];
    }
    let mut sorted = scores.to_vec();
    let (_, cutoff, _) = sorted.select_nth_unstable_by(m - 1, |a, b| b.total_cmp(a));
    let cutoff = *cutoff;
    drop(sorted);
    let above = scores
        .iter()
        .filter(|s| s.total_cmp(&cutoff).is_gt())
        .count();
    let mut ties_left = m - above;
    scores
        .iter()
        .map(|s| match s.total_cmp(&cutoff) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Equal if ties_left > 0 => {
                ties_left -= 1;
                true
            }
            _ => false,
        })
        .collect()
}

/// Zeroes all but the `m` largest-magnitude entries.
pub(crate) fn keep_top_magnitude(values: &[f64], m: usize) -> Vec<f64> {
    let scores: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    let mask = top_k_mask(&scores, m);
    values
        .iter()
        .zip(mask)
        .map(|(&v, keep)| if keep { v } else { 0.0 })
        .collect()
}

/// Selection mask over |think − direct| for the top-k strategies.
pub(crate) fn diff_mask(direct: &[f32], think: &[f32], fraction: f64) -> Vec<bool> {
    let scores: Vec<f64> = direct
        .iter()
        .zip(think)
        .map(|(&d, &t)| (f64::from(t) - f64::from(d)).abs())
        .collect();
    top_k_mask(&scores, fraction_count(fraction, scores.len()))
}
