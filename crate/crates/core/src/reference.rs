//! Literal, slow implementations used as oracles for the fast paths.

use crate::coincidence::Histogram;

/// Histogram of every difference `b − a`, binned like `like`.
pub fn all_pairs_histogram(a: &[i64], b: &[i64], like: &Histogram) -> Vec<u32> {
    let mut counts = vec![0; like.len()];
    for &ta in a {
        for &tb in b {
            let d = tb - ta;
            if d >= like.lower_edge_fs() && d < like.upper_edge_fs() {
                counts[((d - like.lower_edge_fs()) / like.bin_width_fs) as usize] += 1;
            }
        }
    }
    counts
}

/// Overlapping TDEV at factor `m` straight from its definition:
/// `TDEV² = Σ_j [Σ_{i=j}^{j+m-1} (x[i+2m] − 2x[i+m] + x[i])]² / (6 m² (N − 3m + 1))`.
///
/// # Panics
/// If `m == 0` or `3m > x.len()`.
pub fn tdev_literal(x: &[f64], m: usize) -> f64 {
    let n = x.len();
    assert!(m > 0 && 3 * m <= n, "need 1 ≤ m ≤ N/3");
    let mut outer = 0.0;
    for j in 0..=n - 3 * m {
        let mut inner = 0.0;
        for i in j..j + m {
            inner += x[i + 2 * m] - 2.0 * x[i + m] + x[i];
        }
        outer += inner * inner;
    }
    (outer / (6.0 * (m * m) as f64 * (n - 3 * m + 1) as f64)).sqrt()
}
