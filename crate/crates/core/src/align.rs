//! Temporal correspondence between the driver-view (ETG) and rooftop (GAR)
//! frame streams.
//!
//! The two cameras record at different rates (9000 vs 7500 frames per video
//! by default) and may be offset by a manually determined number of GAR
//! frames. The mapping is floor-based linear interpolation plus the offset,
//! clamped to the valid GAR range.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AlignError {
    #[error("frame {frame} out of range [0, {limit})")]
    OutOfRange { frame: u32, limit: u32 },
    #[error("invalid alignment spec: {0}")]
    InvalidSpec(String),
}

/// Frame counts and manual offset tying one ETG stream to one GAR stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentSpec {
    pub n_etg: u32,
    pub n_gar: u32,
    /// GAR-domain shift; positive when the GAR recording leads the ETG one.
    pub offset_frames: i32,
}

impl AlignmentSpec {
    pub fn new(n_etg: u32, n_gar: u32, offset_frames: i32) -> Result<Self, AlignError> {
        if n_etg == 0 || n_gar == 0 {
            return Err(AlignError::InvalidSpec("frame counts must be positive".into()));
        }
        if offset_frames.unsigned_abs() >= n_gar {
            return Err(AlignError::InvalidSpec(format!(
                "|offset_frames| = {} must be < n_gar = {}",
                offset_frames.unsigned_abs(),
                n_gar
            )));
        }
        Ok(Self { n_etg, n_gar, offset_frames })
    }

    /// The stock stream lengths with no offset.
    pub fn default_streams() -> Self {
        Self { n_etg: 9000, n_gar: 7500, offset_frames: 0 }
    }
}

/// Map an ETG frame index to its corresponding GAR frame index.
///
/// Returns `clamp(floor(e * n_gar / n_etg) + offset_frames, 0, n_gar - 1)`;
/// monotone non-decreasing in `e`.
pub fn etg_to_gar(spec: &AlignmentSpec, e: u32) -> Result<u32, AlignError> {
    if e >= spec.n_etg {
        return Err(AlignError::OutOfRange { frame: e, limit: spec.n_etg });
    }
    let base = (u64::from(e) * u64::from(spec.n_gar) / u64::from(spec.n_etg)) as i64;
    let shifted = base + i64::from(spec.offset_frames);
    Ok(shifted.clamp(0, i64::from(spec.n_gar) - 1) as u32)
}

/// Symmetric GAR frame window around `g`, clamped to the stream bounds.
///
/// The default half-width of 12 yields the 25-frame (1 s) aggregation window.
pub fn gar_window(spec: &AlignmentSpec, g: u32, half_width: u32) -> Result<(u32, u32), AlignError> {
    if g >= spec.n_gar {
        return Err(AlignError::OutOfRange { frame: g, limit: spec.n_gar });
    }
    let lo = g.saturating_sub(half_width);
    let hi = (g + half_width).min(spec.n_gar - 1);
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stock(offset: i32) -> AlignmentSpec {
        AlignmentSpec::new(9000, 7500, offset).unwrap()
    }

    #[test]
    fn origin_maps_to_origin() {
        assert_eq!(etg_to_gar(&stock(0), 0).unwrap(), 0);
    }

    #[test]
    fn stock_ratio_is_five_sixths() {
        assert_eq!(etg_to_gar(&stock(0), 6).unwrap(), 5);
        assert_eq!(etg_to_gar(&stock(0), 5).unwrap(), 4);
        assert_eq!(etg_to_gar(&stock(0), 8999).unwrap(), 7499);
    }

    #[test]
    fn offset_shifts_and_clamps() {
        // Offset of 9 mirrors the worst observed stream misalignment.
        let spec = stock(9);
        assert_eq!(etg_to_gar(&spec, 0).unwrap(), 9);
        // floor(8999 * 7500 / 9000) + 9 = 7499 + 9, clamped to 7499.
        assert_eq!(etg_to_gar(&spec, 8999).unwrap(), 7499);

        let neg = stock(-9);
        assert_eq!(etg_to_gar(&neg, 0).unwrap(), 0);
        assert_eq!(etg_to_gar(&neg, 12).unwrap(), 1);
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(matches!(
            etg_to_gar(&stock(0), 9000),
            Err(AlignError::OutOfRange { frame: 9000, .. })
        ));
        assert!(matches!(
            gar_window(&stock(0), 7500, 12),
            Err(AlignError::OutOfRange { frame: 7500, .. })
        ));
    }

    #[test]
    fn window_spans_25_frames_in_the_interior() {
        let (lo, hi) = gar_window(&stock(0), 100, 12).unwrap();
        assert_eq!((lo, hi), (88, 112));
        assert_eq!(hi - lo + 1, 25);
    }

    #[test]
    fn window_clamps_at_both_ends() {
        assert_eq!(gar_window(&stock(0), 0, 12).unwrap(), (0, 12));
        assert_eq!(gar_window(&stock(0), 7499, 12).unwrap(), (7487, 7499));
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(AlignmentSpec::new(0, 7500, 0).is_err());
        assert!(AlignmentSpec::new(9000, 0, 0).is_err());
        assert!(AlignmentSpec::new(9000, 7500, 7500).is_err());
        assert!(AlignmentSpec::new(9000, 7500, -7500).is_err());
    }

    proptest! {
        #[test]
        fn mapping_is_monotone_non_decreasing(
            n_etg in 1u32..20_000,
            n_gar in 1u32..20_000,
            offset in -50i32..50,
            e in 0u32..19_999,
        ) {
            prop_assume!(offset.unsigned_abs() < n_gar);
            prop_assume!(e + 1 < n_etg);
            let spec = AlignmentSpec::new(n_etg, n_gar, offset).unwrap();
            let a = etg_to_gar(&spec, e).unwrap();
            let b = etg_to_gar(&spec, e + 1).unwrap();
            prop_assert!(a <= b);
        }

        #[test]
        fn identity_when_streams_match_and_no_offset(n in 1u32..10_000, e in 0u32..9_999) {
            prop_assume!(e < n);
            let spec = AlignmentSpec::new(n, n, 0).unwrap();
            prop_assert_eq!(etg_to_gar(&spec, e).unwrap(), e);
        }

        // Surjectivity of the shifted mapping: with n_etg >= n_gar and a
        // non-negative offset, every GAR index from the offset up is hit.
        // (With a negative offset the top |offset| indices have no preimage;
        // the clamp only fills in at the low end.)
        #[test]
        fn covers_gar_range_for_nonnegative_offsets(
            n_gar in 1u32..500,
            extra in 0u32..500,
            offset in 0i32..100,
        ) {
            let n_etg = n_gar + extra;
            prop_assume!((offset as u32) < n_gar);
            let spec = AlignmentSpec::new(n_etg, n_gar, offset).unwrap();
            let mut hit = vec![false; n_gar as usize];
            for e in 0..n_etg {
                hit[etg_to_gar(&spec, e).unwrap() as usize] = true;
            }
            for g in (offset as usize)..(n_gar as usize) {
                prop_assert!(hit[g], "gar index {} has no preimage", g);
            }
        }
    }
}
