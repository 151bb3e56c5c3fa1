//! Composite trapezoid rule on uniform grids.

use crate::stats::pairwise_sum;

/// `nodes` equally spaced points covering `[lo, hi]`, endpoints included.
pub fn grid(lo: f64, hi: f64, nodes: usize) -> Vec<f64> {
    assert!(nodes >= 2, "a grid needs at least two nodes");
    let h = (hi - lo) / (nodes - 1) as f64;
    (0..nodes).map(|i| lo + h * i as f64).collect()
}

/// `∫_lo^hi f` by the trapezoid rule.
pub fn trapezoid(f: impl Fn(f64) -> f64, lo: f64, hi: f64, nodes: usize) -> f64 {
    let xs = grid(lo, hi, nodes);
    let h = (hi - lo) / (nodes - 1) as f64;
    let last = nodes - 1;
    let terms: Vec<f64> = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| if i == 0 || i == last { 0.5 * f(x) } else { f(x) })
        .collect();
    h * pairwise_sum(&terms)
}

/// `∫∫ f` over a rectangle by the tensor-product trapezoid rule.
pub fn trapezoid_2d(
    f: impl Fn(f64, f64) -> f64,
    (lo0, hi0): (f64, f64),
    (lo1, hi1): (f64, f64),
    nodes: usize,
) -> f64 {
    trapezoid(|x| trapezoid(|y| f(x, y), lo1, hi1, nodes), lo0, hi0, nodes)
}
