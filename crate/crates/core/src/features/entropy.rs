//! Normalized Shannon entropy over observed categories.

/// Shannon entropy of the category counts, normalized by `ln k` where `k`
/// is the number of categories actually observed (count > 0).
///
/// Returns 0 when fewer than two categories are observed, 1 exactly when
/// the observed categories are uniform, and a value in `[0, 1]` otherwise.
/// Computed from counts as `(ln n - (1/n) * sum(c_i ln c_i)) / ln k` and
/// clamped so floating-point rounding can never leave the unit interval.
pub fn normalized_entropy(counts: &[u64]) -> f64 {
    let observed: Vec<u64> = counts.iter().copied().filter(|&c| c > 0).collect();
    let k = observed.len();
    if k <= 1 {
        return 0.0;
    }
    let n: u64 = observed.iter().sum();
    let nf = n as f64;
    let sum_c_ln_c: f64 = observed.iter().map(|&c| (c as f64) * (c as f64).ln()).sum();
    let h = nf.ln() - sum_c_ln_c / nf;
    (h / (k as f64).ln()).clamp(0.0, 1.0)
}
