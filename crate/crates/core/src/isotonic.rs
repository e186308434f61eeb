//! Euclidean projection onto `{lo ≤ x_1 ≤ … ≤ x_n ≤ hi}`.

/// Pool-adjacent-violators fit of a nondecreasing sequence.
pub fn pava(y: &[f64]) -> Vec<f64> {
    // (block sum, block length)
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(y.len());
    for &v in y {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (s1, n1) = blocks[blocks.len() - 1];
            let (s0, n0) = blocks[blocks.len() - 2];
            if s0 / n0 as f64 <= s1 / n1 as f64 {
                break;
            }
            blocks.pop();
            *blocks.last_mut().unwrap() = (s0 + s1, n0 + n1);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(s, n)| std::iter::repeat_n(s / n as f64, n))
        .collect()
}

/// Monotone fit followed by clamping, which together give the projection
/// onto the bounded monotone cone.
pub fn project_monotone_box(y: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    pava(y).into_iter().map(|v| v.clamp(lo, hi)).collect()
}
