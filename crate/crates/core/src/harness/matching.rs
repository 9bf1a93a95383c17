//! Assignment of estimated locations to true impact points.

/// Interval `I_j = [m_{j-1}, m_j)` around the `j`-th truth, with `m_0 = a`,
/// `m_S = b` and interior bounds at midpoints. The last interval is closed.
pub fn matching_intervals(taus_true: &[f64], a: f64, b: f64) -> Vec<(f64, f64)> {
    let s = taus_true.len();
    (0..s)
        .map(|j| {
            let lo = if j == 0 { a } else { 0.5 * (taus_true[j - 1] + taus_true[j]) };
            let hi = if j + 1 == s { b } else { 0.5 * (taus_true[j] + taus_true[j + 1]) };
            (lo, hi)
        })
        .collect()
}

/// For each truth, the candidate inside its interval closest to it, or `None`.
/// Equidistant candidates resolve to the one listed first.
pub fn match_candidates(taus_true: &[f64], candidates: &[f64], a: f64, b: f64) -> Vec<Option<f64>> {
    let intervals = matching_intervals(taus_true, a, b);
    let last = intervals.len().saturating_sub(1);
    intervals
        .iter()
        .enumerate()
        .map(|(j, &(lo, hi))| {
            let inside = |c: f64| c >= lo && (c < hi || (j == last && c <= hi));
            let mut best: Option<f64> = None;
            for &c in candidates.iter().filter(|&&c| inside(c)) {
                if best.is_none_or(|m| (c - taus_true[j]).abs() < (m - taus_true[j]).abs()) {
                    best = Some(c);
                }
            }
            best
        })
        .collect()
}
