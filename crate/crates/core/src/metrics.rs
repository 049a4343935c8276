//! The four saliency benchmark metrics: Kullback-Leibler divergence (KLD),
//! Pearson correlation (CC), Normalized Scanpath Saliency (NSS), and
//! histogram intersection similarity (SIM).
//!
//! KLD comes in two regimes:
//!
//! - `stable` regularizes both raw rasters with epsilon before normalizing,
//!   then evaluates the exact divergence `sum g ln(g/p)`. Identical inputs
//!   score exactly 0 under any epsilon, and the result is insensitive to the
//!   choice of epsilon beyond the sixth decimal on ordinary inputs.
//! - `legacy_dreyeve` reproduces the behavior class of the historically used
//!   implementation, `sum G ln(eps + G / (P + eps))` over sum-normalized
//!   maps. Its scores drift negative as epsilon grows (visibly so at
//!   eps = 1e-4 even on identical inputs) and it exists only for conformance
//!   demonstrations, never for rankings.
//!
//! CC and NSS use population statistics. All reductions run through the
//! fixed-order pairwise tree in [`crate::numeric`] so results do not depend
//! on partitioning.

use crate::numeric::pairwise_sum;
use crate::raster::{FixationMap, SaliencyMap};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Single-precision machine epsilon, the classic MATLAB `eps('single')`.
pub const EPSILON_MATLAB: f64 = 1.192_092_9e-7;
/// Double-precision machine epsilon, the common Python default.
pub const EPSILON_NUMPY: f64 = 2.220_446_049_250_313e-16;
/// The "small constant" variant found in several published implementations.
pub const EPSILON_SMALL: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("raster dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("raster has no positive mass")]
    NonPositiveMass,
    #[error("negative value at pixel {0}")]
    NegativeValue(usize),
    #[error("raster has zero variance")]
    ZeroVariance,
    #[error("fixation map has no fixations")]
    NoFixations,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KldMode {
    Stable,
    LegacyDreyeve,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    pub kld_mode: KldMode,
    pub epsilon: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self { kld_mode: KldMode::Stable, epsilon: EPSILON_NUMPY }
    }
}

impl MetricConfig {
    pub fn stable(epsilon: f64) -> Self {
        Self { kld_mode: KldMode::Stable, epsilon }
    }

    pub fn legacy(epsilon: f64) -> Self {
        Self { kld_mode: KldMode::LegacyDreyeve, epsilon }
    }
}

fn check_dims(a: &SaliencyMap, b: &SaliencyMap) -> Result<(), MetricError> {
    if !a.same_dims(b) {
        return Err(MetricError::DimensionMismatch(a.width(), a.height(), b.width(), b.height()));
    }
    Ok(())
}

fn check_nonnegative(map: &SaliencyMap) -> Result<(), MetricError> {
    if let Some(i) = map.values().iter().position(|&v| v < 0.0) {
        return Err(MetricError::NegativeValue(i));
    }
    Ok(())
}

/// A constant raster has zero variance by definition; detect it exactly
/// instead of through a rounded second moment.
fn is_constant(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] == w[1])
}

/// Normalize a raster into a probability distribution (sums to 1).
pub fn to_distribution(map: &SaliencyMap) -> Result<Vec<f64>, MetricError> {
    check_nonnegative(map)?;
    let values: Vec<f64> = map.values().to_vec();
    let total = pairwise_sum(&values);
    if total <= 0.0 {
        return Err(MetricError::NonPositiveMass);
    }
    Ok(values.into_iter().map(|v| v / total).collect())
}

/// Regularize with epsilon, then normalize. The epsilon floor guarantees a
/// strictly positive distribution.
fn to_regularized_distribution(map: &SaliencyMap, eps: f64) -> Result<Vec<f64>, MetricError> {
    check_nonnegative(map)?;
    let values: Vec<f64> = map.values().iter().map(|&v| v + eps).collect();
    let total = pairwise_sum(&values);
    if total <= 0.0 {
        return Err(MetricError::NonPositiveMass);
    }
    Ok(values.into_iter().map(|v| v / total).collect())
}

/// Kullback-Leibler divergence of the prediction from the ground truth,
/// `KLD(gt || pred)`, in the regime selected by `cfg`.
pub fn kld(gt: &SaliencyMap, pred: &SaliencyMap, cfg: &MetricConfig) -> Result<f64, MetricError> {
    check_dims(gt, pred)?;
    // Both rasters must carry mass regardless of regime.
    check_nonnegative(gt)?;
    check_nonnegative(pred)?;
    if gt.max_value() <= 0.0 || pred.max_value() <= 0.0 {
        return Err(MetricError::NonPositiveMass);
    }
    let eps = cfg.epsilon;
    match cfg.kld_mode {
        KldMode::Stable => {
            let g = to_regularized_distribution(gt, eps)?;
            let p = to_regularized_distribution(pred, eps)?;
            let terms: Vec<f64> =
                g.iter().zip(p.iter()).map(|(&gi, &pi)| gi * (gi / pi).ln()).collect();
            Ok(pairwise_sum(&terms))
        }
        KldMode::LegacyDreyeve => {
            let g = to_distribution(gt)?;
            let p = to_distribution(pred)?;
            let terms: Vec<f64> = g
                .iter()
                .zip(p.iter())
                .map(|(&gi, &pi)| if gi > 0.0 { gi * (eps + gi / (pi + eps)).ln() } else { 0.0 })
                .collect();
            Ok(pairwise_sum(&terms))
        }
    }
}

/// Pearson correlation coefficient between two rasters.
pub fn cc(gt: &SaliencyMap, pred: &SaliencyMap) -> Result<f64, MetricError> {
    check_dims(gt, pred)?;
    let a: Vec<f64> = gt.values().to_vec();
    let b: Vec<f64> = pred.values().to_vec();
    if is_constant(&a) || is_constant(&b) {
        return Err(MetricError::ZeroVariance);
    }
    let n = a.len() as f64;
    let mean_a = pairwise_sum(&a) / n;
    let mean_b = pairwise_sum(&b) / n;
    let cov_terms: Vec<f64> =
        a.iter().zip(b.iter()).map(|(&x, &y)| (x - mean_a) * (y - mean_b)).collect();
    let var_a_terms: Vec<f64> = a.iter().map(|&x| (x - mean_a) * (x - mean_a)).collect();
    let var_b_terms: Vec<f64> = b.iter().map(|&y| (y - mean_b) * (y - mean_b)).collect();
    let var_a = pairwise_sum(&var_a_terms);
    let var_b = pairwise_sum(&var_b_terms);
    if var_a <= 0.0 || var_b <= 0.0 {
        return Err(MetricError::ZeroVariance);
    }
    Ok((pairwise_sum(&cov_terms) / (var_a.sqrt() * var_b.sqrt())).clamp(-1.0, 1.0))
}

/// Normalized Scanpath Saliency: mean z-score of the prediction at the
/// fixated pixels, with population standard deviation.
pub fn nss(fix: &FixationMap, pred: &SaliencyMap) -> Result<f64, MetricError> {
    if fix.width() != pred.width() || fix.height() != pred.height() {
        return Err(MetricError::DimensionMismatch(
            fix.width(),
            fix.height(),
            pred.width(),
            pred.height(),
        ));
    }
    if fix.count() == 0 {
        return Err(MetricError::NoFixations);
    }
    let values: Vec<f64> = pred.values().to_vec();
    if is_constant(&values) {
        return Err(MetricError::ZeroVariance);
    }
    let n = values.len() as f64;
    let mean = pairwise_sum(&values) / n;
    let var_terms: Vec<f64> = values.iter().map(|&v| (v - mean) * (v - mean)).collect();
    let std = (pairwise_sum(&var_terms) / n).sqrt();
    if std <= 0.0 {
        return Err(MetricError::ZeroVariance);
    }
    let scores: Vec<f64> =
        fix.pixels().map(|(x, y)| (pred.get(x, y) - mean) / std).collect();
    Ok(pairwise_sum(&scores) / scores.len() as f64)
}

/// Histogram intersection similarity: `sum min(G, P)` over the normalized
/// maps; 1 for identical distributions, 0 for disjoint support.
pub fn sim(gt: &SaliencyMap, pred: &SaliencyMap) -> Result<f64, MetricError> {
    check_dims(gt, pred)?;
    let g = to_distribution(gt)?;
    let p = to_distribution(pred)?;
    let terms: Vec<f64> = g.iter().zip(p.iter()).map(|(&a, &b)| a.min(b)).collect();
    Ok(pairwise_sum(&terms).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_map(w: u32, h: u32, seed: u64) -> SaliencyMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values =
            (0..(w as usize) * (h as usize)).map(|_| rng.gen_range(0.0f64..1.0)).collect();
        SaliencyMap::from_values(w, h, values).unwrap()
    }

    fn map_from(w: u32, h: u32, values: &[f64]) -> SaliencyMap {
        SaliencyMap::from_values(w, h, values.to_vec()).unwrap()
    }

    #[test]
    fn uniform_distribution_normalizes_to_equal_cells() {
        let m = map_from(10, 10, &[3.0; 100]);
        let d = to_distribution(&m).unwrap();
        assert!(d.iter().all(|&v| (v - 0.01).abs() < 1e-15));
    }

    #[test]
    fn negative_cell_reported_with_index() {
        let m = SaliencyMap::from_values(2, 1, vec![0.5, -0.25]).unwrap();
        assert!(matches!(to_distribution(&m), Err(MetricError::NegativeValue(1))));
    }

    #[test]
    fn distribution_sums_to_one() {
        let m = random_map(128, 96, 4);
        let d = to_distribution(&m).unwrap();
        let total = pairwise_sum(&d);
        assert!((total - 1.0).abs() <= 1e-12, "sum = {total}");
    }

    #[test]
    fn stable_kld_is_zero_on_identical_maps_for_all_presets() {
        let m = random_map(64, 64, 7);
        for eps in [EPSILON_MATLAB, EPSILON_NUMPY, EPSILON_SMALL] {
            let v = kld(&m, &m, &MetricConfig::stable(eps)).unwrap();
            assert!(v.abs() <= 1e-12, "eps {eps}: kld = {v}");
        }
    }

    #[test]
    fn legacy_kld_goes_negative_on_identical_maps_with_large_epsilon() {
        let m = random_map(64, 64, 8);
        let v = kld(&m, &m, &MetricConfig::legacy(EPSILON_SMALL)).unwrap();
        assert!(v < 0.0, "legacy kld = {v}");
    }

    #[test]
    fn stable_kld_is_insensitive_to_machine_epsilon_choice() {
        let a = random_map(1000, 1000, 9);
        let b = random_map(1000, 1000, 10);
        let v1 = kld(&a, &b, &MetricConfig::stable(EPSILON_MATLAB)).unwrap();
        let v2 = kld(&a, &b, &MetricConfig::stable(EPSILON_NUMPY)).unwrap();
        assert!((v1 - v2).abs() <= 1e-5, "matlab {v1} vs numpy {v2}");
    }

    #[test]
    fn kld_is_asymmetric() {
        let a = map_from(2, 1, &[0.9, 0.1]);
        let b = map_from(2, 1, &[0.4, 0.6]);
        let cfg = MetricConfig::default();
        let ab = kld(&a, &b, &cfg).unwrap();
        let ba = kld(&b, &a, &cfg).unwrap();
        assert!((ab - ba).abs() > 1e-3, "KLD unexpectedly symmetric: {ab} vs {ba}");
    }

    #[test]
    fn kld_dimension_mismatch_rejected() {
        let a = random_map(4, 4, 1);
        let b = random_map(4, 5, 1);
        assert!(matches!(
            kld(&a, &b, &MetricConfig::default()),
            Err(MetricError::DimensionMismatch(4, 4, 4, 5))
        ));
    }

    #[test]
    fn kld_requires_positive_mass() {
        let a = random_map(4, 4, 2);
        let z = SaliencyMap::zeros(4, 4);
        assert!(matches!(kld(&a, &z, &MetricConfig::default()), Err(MetricError::NonPositiveMass)));
    }

    #[test]
    fn cc_is_one_on_self_and_minus_one_on_complement() {
        let m = map_from(4, 1, &[1.0, 0.0, 1.0, 0.0]);
        assert!((cc(&m, &m).unwrap() - 1.0).abs() < 1e-12);
        let inv = map_from(4, 1, &[0.0, 1.0, 0.0, 1.0]);
        assert!((cc(&m, &inv).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn cc_matches_two_pass_covariance_oracle() {
        for seed in 0..20 {
            let a = random_map(32, 32, 100 + seed);
            let b = random_map(32, 32, 200 + seed);
            let got = cc(&a, &b).unwrap();
            // Oracle: direct two-pass covariance with naive accumulation.
            let av: Vec<f64> = a.values().to_vec();
            let bv: Vec<f64> = b.values().to_vec();
            let n = av.len() as f64;
            let ma = av.iter().sum::<f64>() / n;
            let mb = bv.iter().sum::<f64>() / n;
            let cov: f64 = av.iter().zip(&bv).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
            let sa = (av.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n).sqrt();
            let sb = (bv.iter().map(|y| (y - mb).powi(2)).sum::<f64>() / n).sqrt();
            let expect = cov / (sa * sb);
            assert!((got - expect).abs() < 1e-9, "cc {got} vs oracle {expect}");
        }
    }

    #[test]
    fn cc_zero_variance_rejected() {
        let flat = map_from(3, 1, &[0.5, 0.5, 0.5]);
        let other = map_from(3, 1, &[0.1, 0.2, 0.3]);
        assert!(matches!(cc(&flat, &other), Err(MetricError::ZeroVariance)));
    }

    #[test]
    fn nss_on_uniform_prediction_is_a_contract_error() {
        let mut fix = FixationMap::zeros(10, 10);
        fix.mark(5, 5);
        let flat = map_from(10, 10, &[0.3; 100]);
        assert!(matches!(nss(&fix, &flat), Err(MetricError::ZeroVariance)));
    }

    #[test]
    fn nss_single_spike_matches_closed_form() {
        // 100-pixel map, single spike of 1 at the only fixation.
        let mut values = vec![0.0f64; 100];
        values[37] = 1.0;
        let pred = map_from(10, 10, &values);
        let mut fix = FixationMap::zeros(10, 10);
        fix.mark(7, 3); // index 37
        let got = nss(&fix, &pred).unwrap();
        let mean = 1.0f64 / 100.0;
        let std = ((1.0 - mean) * (1.0 - mean) / 100.0 + 99.0 * mean * mean / 100.0).sqrt();
        let expect = (1.0 - mean) / std;
        assert!((got - expect).abs() < 1e-9, "nss {got} vs closed form {expect}");
    }

    #[test]
    fn nss_requires_fixations() {
        let fix = FixationMap::zeros(4, 4);
        let pred = random_map(4, 4, 3);
        assert!(matches!(nss(&fix, &pred), Err(MetricError::NoFixations)));
    }

    #[test]
    fn sim_identical_is_one_and_disjoint_is_zero() {
        let m = random_map(16, 16, 20);
        assert!((sim(&m, &m).unwrap() - 1.0).abs() < 1e-12);
        let a = map_from(4, 1, &[1.0, 1.0, 0.0, 0.0]);
        let b = map_from(4, 1, &[0.0, 0.0, 1.0, 1.0]);
        assert_eq!(sim(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn sim_matches_min_sum_oracle() {
        for seed in 0..20 {
            let a = random_map(24, 24, 300 + seed);
            let b = random_map(24, 24, 400 + seed);
            let got = sim(&a, &b).unwrap();
            let sa: f64 = a.values().iter().sum();
            let sb: f64 = b.values().iter().sum();
            let expect: f64 = a
                .values()
                .iter()
                .zip(b.values())
                .map(|(&x, &y)| (x / sa).min(y / sb))
                .sum();
            assert!((got - expect).abs() < 1e-12, "sim {got} vs oracle {expect}");
        }
    }

    #[test]
    fn kld_matches_direct_oracle_in_both_modes() {
        for seed in 0..10 {
            let a = random_map(20, 20, 500 + seed);
            let b = random_map(20, 20, 600 + seed);
            let eps = EPSILON_SMALL;

            let got = kld(&a, &b, &MetricConfig::stable(eps)).unwrap();
            let ga: Vec<f64> = a.values().iter().map(|&v| v + eps).collect();
            let gb: Vec<f64> = b.values().iter().map(|&v| v + eps).collect();
            let (sa, sb) = (ga.iter().sum::<f64>(), gb.iter().sum::<f64>());
            let expect: f64 = ga
                .iter()
                .zip(&gb)
                .map(|(&x, &y)| (x / sa) * ((x / sa) / (y / sb)).ln())
                .sum();
            assert!((got - expect).abs() < 1e-9, "stable {got} vs oracle {expect}");

            let got = kld(&a, &b, &MetricConfig::legacy(eps)).unwrap();
            let ga: Vec<f64> = a.values().to_vec();
            let gb: Vec<f64> = b.values().to_vec();
            let (sa, sb) = (ga.iter().sum::<f64>(), gb.iter().sum::<f64>());
            let expect: f64 = ga
                .iter()
                .zip(&gb)
                .map(|(&x, &y)| {
                    let (g, p) = (x / sa, y / sb);
                    if g > 0.0 { g * (eps + g / (p + eps)).ln() } else { 0.0 }
                })
                .sum();
            assert!((got - expect).abs() < 1e-9, "legacy {got} vs oracle {expect}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn stable_kld_respects_gibbs_inequality(seed_a in 0u64..1000, seed_b in 0u64..1000) {
            let a = random_map(16, 16, seed_a);
            let b = random_map(16, 16, seed_b.wrapping_add(7777));
            let v = kld(&a, &b, &MetricConfig::default()).unwrap();
            prop_assert!(v >= -1e-9, "kld = {}", v);
        }

        #[test]
        fn distribution_metrics_absorb_prediction_scale(seed in 0u64..500) {
            let gt = random_map(16, 16, seed);
            let pred = random_map(16, 16, seed.wrapping_add(31));
            let cfg = MetricConfig::default();
            let base_kld = kld(&gt, &pred, &cfg).unwrap();
            let base_cc = cc(&gt, &pred).unwrap();
            let base_sim = sim(&gt, &pred).unwrap();
            for scale in [1e-3f64, 1.0, 1e3] {
                let scaled = SaliencyMap::from_values(
                    16, 16,
                    pred.values().iter().map(|&v| v * scale).collect(),
                ).unwrap();
                prop_assert!((kld(&gt, &scaled, &cfg).unwrap() - base_kld).abs() <= 1e-9);
                prop_assert!((cc(&gt, &scaled).unwrap() - base_cc).abs() <= 1e-9);
                prop_assert!((sim(&gt, &scaled).unwrap() - base_sim).abs() <= 1e-9);
            }
        }

        #[test]
        fn nss_is_invariant_under_positive_affine_transforms(
            seed in 0u64..500,
            a in 0.1f64..10.0,
            b in -5.0f64..5.0,
        ) {
            let pred = random_map(12, 12, seed);
            let mut fix = FixationMap::zeros(12, 12);
            fix.mark((seed % 12) as u32, ((seed / 12) % 12) as u32);
            fix.mark(3, 7);
            let base = nss(&fix, &pred).unwrap();
            let transformed = SaliencyMap::from_values(
                12, 12,
                pred.values().iter().map(|&v| a * v + b).collect(),
            ).unwrap();
            let got = nss(&fix, &transformed).unwrap();
            prop_assert!((got - base).abs() <= 1e-9, "{} vs {}", got, base);
        }

        #[test]
        fn sim_is_symmetric(seed in 0u64..500) {
            let a = random_map(16, 16, seed);
            let b = random_map(16, 16, seed.wrapping_add(97));
            let ab = sim(&a, &b).unwrap();
            let ba = sim(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() <= 1e-12);
        }
    }
}
