//! Small numeric helpers shared by the filters and samplers.
//!
//! Everything that touches particle weights works in log space; the functions
//! here centralise the max-shift tricks so callers never exponentiate raw
//! log-weights directly.

/// log(sum(exp(x_i))) with the usual max-shift for stability.
///
/// Returns negative infinity for an empty slice or when every entry is
/// negative infinity.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        // All -inf (or empty): the sum is zero. A +inf or NaN max propagates.
        return m + 0.0;
    }
    let s: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

/// log(mean(exp(x_i))): the log of an arithmetic average of likelihoods.
pub fn log_mean_exp(xs: &[f64]) -> f64 {
    log_sum_exp(xs) - (xs.len() as f64).ln()
}

/// Normalized weights from log-weights. The output sums to one whenever at
/// least one input is finite.
pub fn normalized_weights(log_w: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(log_w);
    log_w.iter().map(|&lw| (lw - lse).exp()).collect()
}

/// Effective sample size (sum w)^2 / sum(w^2), computed from log-weights.
///
/// Equals the particle count for equal weights and 1 when a single particle
/// carries all mass. Returns 0 when every weight is zero.
pub fn effective_sample_size(log_w: &[f64]) -> f64 {
    let m = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return 0.0;
    }
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for &lw in log_w {
        let w = (lw - m).exp();
        s1 += w;
        s2 += w * w;
    }
    s1 * s1 / s2
}

/// Weighted average of `values` under normalized weights derived from
/// `log_w`. Slices must be the same length.
pub fn weighted_mean(values: &[f64], log_w: &[f64]) -> f64 {
    debug_assert_eq!(values.len(), log_w.len());
    let w = normalized_weights(log_w);
    values.iter().zip(&w).map(|(v, w)| v * w).sum()
}

/// Sample mean.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (n-1 denominator).
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Linear-interpolation quantile (the R type-7 rule) on unsorted data.
/// `p` must lie in [0, 1]; the input must be non-empty.
pub fn quantile(xs: &[f64], p: f64) -> f64 {
    assert!(!xs.is_empty(), "quantile of empty slice");
    assert!((0.0..=1.0).contains(&p), "quantile level out of range");
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN in quantile input"));
    let h = (sorted.len() as f64 - 1.0) * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}
