use std::ops::Range;

/// Splits `0..n` into `parts` contiguous ranges whose lengths differ by at most one;
/// the first `n % parts` ranges take the extra row. Trailing ranges may be empty
/// when `parts > n`.
pub fn balanced_ranges(n: usize, parts: usize) -> Vec<Range<usize>> {
    assert!(parts >= 1, "parts must be at least 1");
    let base = n / parts;
    let extra = n % parts;
    let mut start = 0;
    (0..parts)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}
