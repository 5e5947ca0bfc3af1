/// Nearest-rank percentile of an ascending-sorted slice: the element at
/// 1-based rank `ceil(pct / 100 * N)`, clamped to `[1, N]`.
///
/// The result is always a member of the sample. Returns `None` for an empty
/// slice.
pub fn nearest_rank<T: Copy>(sorted: &[T], pct: f64) -> Option<T> {
    if sorted.is_empty() {
        return None;
    }
    let n = sorted.len();
    // pct * n first keeps integer percentiles exact (0.9 * 100 is not 90).
    let rank = (pct * n as f64 / 100.0).ceil();
    let rank = if rank.is_nan() {
        1
    } else {
        (rank as usize).clamp(1, n)
    };
    Some(sorted[rank - 1])
}
