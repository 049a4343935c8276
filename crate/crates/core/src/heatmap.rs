//! Per-key-frame ground-truth assembly: gather the fixation window around a
//! key frame, filter and remediate events, trace them to the key frame
//! through optical flow, rasterize, and blur.
//!
//! Two aggregation modes exist:
//!
//! - the corrected mode ([`collect_window`] + [`rasterize`] +
//!   [`gaussian_blur`]) keeps only fixations, drops gaze irrelevant to the
//!   driving scene, projects through per-frame homographies, and traces
//!   through flow;
//! - [`legacy_aggregate`] reproduces the original style for comparison:
//!   no event filtering, motion compensation by homography chains, and
//!   per-point Gaussian responses combined by pixelwise max.
//!
//! Every event entering the pipeline either contributes a point to some key
//! frame or lands in the exclusion log with a machine-readable reason
//! (CSV `etg_frame,timestamp_us,reason`).

use crate::align::{etg_to_gar, AlignError, AlignmentSpec};
use crate::flowprop::{trace_to_key, FlowError, FlowProvider};
use crate::geometry::{clamp_to_frame, project_point, GeometryError, Homography, PixelPoint};
use crate::ingest::{EventClass, FixationEvent, GazeLabel};
use crate::raster::{FixationMap, SaliencyMap};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HeatmapError {
    #[error("alignment error: {0}")]
    Align(#[from] AlignError),
    #[error("geometry error: {0}")]
    Geometry(#[from] GeometryError),
    #[error("flow error: {0}")]
    Flow(#[from] FlowError),
    #[error("no homography for ETG frame {0}")]
    MissingHomography(u32),
    #[error("no chain homography for GAR step {0} -> {1}")]
    MissingChainHomography(u32, u32),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed exclusion log at line {0}")]
    MalformedLog(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeatmapConfig {
    /// Gaussian sigma in pixels; 40 px is roughly the human fovea radius at
    /// the recording resolution.
    pub sigma_px: f64,
    /// Kernel truncation radius in pixels.
    pub truncate_radius: u32,
    /// Half-width of the temporal aggregation window in GAR frames; 12 gives
    /// the 25-frame (1 s) window.
    pub window_half: u32,
}

impl Default for HeatmapConfig {
    fn default() -> Self {
        Self::with_sigma(40.0)
    }
}

impl HeatmapConfig {
    /// Config with the given sigma and the standard 3-sigma truncation.
    pub fn with_sigma(sigma_px: f64) -> Self {
        assert!(sigma_px > 0.0, "sigma must be positive");
        Self { sigma_px, truncate_radius: (3.0 * sigma_px).ceil() as u32, window_half: 12 }
    }
}

/// How a collected point entered the key frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Ordinary scene fixation.
    Scene,
    /// Gaze labeled (or projected) outside the scene camera view and pushed
    /// to the frame edge.
    OutOfView,
    /// Left the raster while being traced to the key frame.
    TracedExit,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Scene => "scene",
            Provenance::OutOfView => "out_of_view",
            Provenance::TracedExit => "traced_exit",
        }
    }
}

/// Why an event was dropped from the corrected ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    Saccade,
    Blink,
    TrackerError,
    InVehicleSpeedometer,
    InVehicleOther,
    OobError,
}

impl ExclusionReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ExclusionReason::Saccade => "saccade",
            ExclusionReason::Blink => "blink",
            ExclusionReason::TrackerError => "tracker_error",
            ExclusionReason::InVehicleSpeedometer => "in_vehicle_speedometer",
            ExclusionReason::InVehicleOther => "in_vehicle_other",
            ExclusionReason::OobError => "oob_error",
        }
    }

    pub fn parse(tok: &str) -> Option<Self> {
        Some(match tok {
            "saccade" => ExclusionReason::Saccade,
            "blink" => ExclusionReason::Blink,
            "tracker_error" => ExclusionReason::TrackerError,
            "in_vehicle_speedometer" => ExclusionReason::InVehicleSpeedometer,
            "in_vehicle_other" => ExclusionReason::InVehicleOther,
            "oob_error" => ExclusionReason::OobError,
            _ => return None,
        })
    }
}

/// Classify an event: `None` means retained for the corrected ground truth.
///
/// Mirror fixations are retained — they still reflect the driving scene —
/// while speedometer and other in-vehicle gaze plus out-of-bounds tracker
/// errors are dropped. Out-of-view fixations are retained and later pushed
/// to the frame edge.
pub fn exclusion_reason(event: &FixationEvent) -> Option<ExclusionReason> {
    match event.event_class {
        EventClass::Saccade => Some(ExclusionReason::Saccade),
        EventClass::Blink => Some(ExclusionReason::Blink),
        EventClass::Error => Some(ExclusionReason::TrackerError),
        EventClass::Fixation => match event.gaze_label {
            GazeLabel::InVehicleSpeedometer => Some(ExclusionReason::InVehicleSpeedometer),
            GazeLabel::InVehicleOther => Some(ExclusionReason::InVehicleOther),
            GazeLabel::OobError => Some(ExclusionReason::OobError),
            GazeLabel::Scene | GazeLabel::InVehicleMirror | GazeLabel::OutOfView => None,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExclusionRecord {
    pub etg_frame: u32,
    pub timestamp_us: i64,
    pub reason: ExclusionReason,
}

/// One whole-video filtering pass: the retained events and the exclusion log
/// (one record per excluded event, in input order).
pub fn partition_events(events: &[FixationEvent]) -> (Vec<FixationEvent>, Vec<ExclusionRecord>) {
    let mut retained = Vec::new();
    let mut excluded = Vec::new();
    for e in events {
        match exclusion_reason(e) {
            Some(reason) => excluded.push(ExclusionRecord {
                etg_frame: e.etg_frame,
                timestamp_us: e.timestamp_us,
                reason,
            }),
            None => retained.push(e.clone()),
        }
    }
    (retained, excluded)
}

pub fn write_exclusion_log(path: &Path, records: &[ExclusionRecord]) -> Result<(), HeatmapError> {
    let mut out = String::from("etg_frame,timestamp_us,reason\n");
    for r in records {
        out.push_str(&format!("{},{},{}\n", r.etg_frame, r.timestamp_us, r.reason.as_str()));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_exclusion_log(path: &Path) -> Result<Vec<ExclusionRecord>, HeatmapError> {
    let text = std::fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line.trim() != "etg_frame,timestamp_us,reason" {
                return Err(HeatmapError::MalformedLog(1));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let line_no = (i + 1) as u64;
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(HeatmapError::MalformedLog(line_no));
        }
        let etg_frame = parts[0].parse().map_err(|_| HeatmapError::MalformedLog(line_no))?;
        let timestamp_us = parts[1].parse().map_err(|_| HeatmapError::MalformedLog(line_no))?;
        let reason =
            ExclusionReason::parse(parts[2]).ok_or(HeatmapError::MalformedLog(line_no))?;
        records.push(ExclusionRecord { etg_frame, timestamp_us, reason });
    }
    Ok(records)
}

/// Source of per-ETG-frame homographies (ETG -> aligned GAR view).
pub trait HomographyProvider: Sync {
    fn homography(&self, etg_frame: u32) -> Option<Homography>;
}

impl HomographyProvider for HashMap<u32, Homography> {
    fn homography(&self, etg_frame: u32) -> Option<Homography> {
        self.get(&etg_frame).copied()
    }
}

/// Provider mapping every frame to the same homography; fixtures use the
/// identity.
pub struct UniformHomography(pub Homography);

impl HomographyProvider for UniformHomography {
    fn homography(&self, _etg_frame: u32) -> Option<Homography> {
        Some(self.0)
    }
}

/// A fixation point delivered to a key frame, with its origin for auditing.
#[derive(Debug, Clone, PartialEq)]
pub struct CollectedPoint {
    pub etg_frame: u32,
    pub timestamp_us: i64,
    pub point: PixelPoint,
    pub provenance: Provenance,
}

/// Result of gathering one key frame's window.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WindowCollection {
    pub points: Vec<CollectedPoint>,
    /// Exclusions for events whose aligned frame fell inside this window.
    pub exclusions: Vec<ExclusionRecord>,
}

/// Gather every event whose aligned GAR frame lies within
/// `key_gar_frame ± cfg.window_half`, apply the event filter, project
/// retained fixations into the GAR view, trace them to the key frame, and
/// clamp to the raster.
pub fn collect_window(
    key_gar_frame: u32,
    events: &[FixationEvent],
    spec: &AlignmentSpec,
    homographies: &dyn HomographyProvider,
    flows: &dyn FlowProvider,
    cfg: &HeatmapConfig,
    width: u32,
    height: u32,
) -> Result<WindowCollection, HeatmapError> {
    let mut out = WindowCollection::default();
    for e in events {
        let g = etg_to_gar(spec, e.etg_frame)?;
        if g.abs_diff(key_gar_frame) > cfg.window_half {
            continue;
        }
        if let Some(reason) = exclusion_reason(e) {
            out.exclusions.push(ExclusionRecord {
                etg_frame: e.etg_frame,
                timestamp_us: e.timestamp_us,
                reason,
            });
            continue;
        }
        let h = homographies
            .homography(e.etg_frame)
            .ok_or(HeatmapError::MissingHomography(e.etg_frame))?;
        let projected = project_point(&h, &PixelPoint::new(e.x, e.y))?;
        let (start, fell_outside) = clamp_to_frame(&projected, width, height);
        let (traced, exited) = trace_to_key(&start, g, key_gar_frame, flows)?;
        let (point, _) = clamp_to_frame(&traced, width, height);
        let provenance = if e.gaze_label == GazeLabel::OutOfView || fell_outside {
            Provenance::OutOfView
        } else if exited {
            Provenance::TracedExit
        } else {
            Provenance::Scene
        };
        out.points.push(CollectedPoint {
            etg_frame: e.etg_frame,
            timestamp_us: e.timestamp_us,
            point,
            provenance,
        });
    }
    Ok(out)
}

/// Mark each point's nearest pixel; points rounding to the same pixel count
/// once.
pub fn rasterize(points: &[PixelPoint], width: u32, height: u32) -> FixationMap {
    let mut map = FixationMap::zeros(width, height);
    for p in points {
        let x = (p.x.round().clamp(0.0, f64::from(width - 1))) as u32;
        let y = (p.y.round().clamp(0.0, f64::from(height - 1))) as u32;
        map.mark(x, y);
    }
    map
}

fn gaussian_kernel(sigma: f64, radius: u32) -> Vec<f64> {
    let mut k = Vec::with_capacity(2 * radius as usize + 1);
    for i in -(radius as i64)..=(radius as i64) {
        k.push((-((i * i) as f64) / (2.0 * sigma * sigma)).exp());
    }
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

/// Separable Gaussian blur with zero padding, peak-normalized so any
/// non-empty map has maximum exactly 1 (an all-zero input stays all-zero).
pub fn gaussian_blur(fm: &FixationMap, cfg: &HeatmapConfig) -> SaliencyMap {
    let (w, h) = (fm.width() as usize, fm.height() as usize);
    let radius = cfg.truncate_radius as i64;
    let kernel = gaussian_kernel(cfg.sigma_px, cfg.truncate_radius);

    let mut src = vec![0.0f64; w * h];
    for (x, y) in fm.pixels() {
        src[(y as usize) * w + x as usize] = 1.0;
    }

    // Horizontal pass.
    let mut mid = vec![0.0f64; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        if row.iter().all(|&v| v == 0.0) {
            continue;
        }
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, dx) in (-radius..=radius).enumerate() {
                let sx = x as i64 + dx;
                if sx < 0 || sx >= w as i64 {
                    continue; // zero padding
                }
                acc += row[sx as usize] * kernel[ki];
            }
            mid[y * w + x] = acc;
        }
    }

    // Vertical pass.
    let mut dst = vec![0.0f64; w * h];
    for x in 0..w {
        let any = (0..h).any(|y| mid[y * w + x] != 0.0);
        if !any {
            continue;
        }
        for y in 0..h {
            let mut acc = 0.0;
            for (ki, dy) in (-radius..=radius).enumerate() {
                let sy = y as i64 + dy;
                if sy < 0 || sy >= h as i64 {
                    continue;
                }
                acc += mid[sy as usize * w + x] * kernel[ki];
            }
            dst[y * w + x] = acc;
        }
    }

    let max = dst.iter().cloned().fold(0.0f64, f64::max);
    let values: Vec<f64> =
        if max > 0.0 { dst.into_iter().map(|v| v / max).collect() } else { dst };
    SaliencyMap::from_values(fm.width(), fm.height(), values)
        .expect("blur output has valid shape and finite values")
}

/// Convenience: one key frame of corrected ground truth.
pub struct KeyFrameTruth {
    pub saliency: SaliencyMap,
    pub fixations: FixationMap,
    pub collection: WindowCollection,
}

#[allow(clippy::too_many_arguments)]
pub fn new_mode_ground_truth(
    key_gar_frame: u32,
    events: &[FixationEvent],
    spec: &AlignmentSpec,
    homographies: &dyn HomographyProvider,
    flows: &dyn FlowProvider,
    cfg: &HeatmapConfig,
    width: u32,
    height: u32,
) -> Result<KeyFrameTruth, HeatmapError> {
    let collection =
        collect_window(key_gar_frame, events, spec, homographies, flows, cfg, width, height)?;
    let points: Vec<PixelPoint> = collection.points.iter().map(|p| p.point).collect();
    let fixations = rasterize(&points, width, height);
    let saliency = gaussian_blur(&fixations, cfg);
    Ok(KeyFrameTruth { saliency, fixations, collection })
}

/// Source of GAR -> GAR motion-compensation homographies between consecutive
/// frames, used only by the legacy mode.
pub trait GarChainProvider: Sync {
    /// Homography for the unit step `from -> to` (`|from - to| == 1`).
    fn step(&self, from: u32, to: u32) -> Option<Homography>;
}

/// No motion compensation: every step is the identity.
pub struct IdentityChain;

impl GarChainProvider for IdentityChain {
    fn step(&self, _from: u32, _to: u32) -> Option<Homography> {
        Some(Homography::identity())
    }
}

impl GarChainProvider for HashMap<(u32, u32), Homography> {
    fn step(&self, from: u32, to: u32) -> Option<Homography> {
        self.get(&(from, to)).copied()
    }
}

/// Original-style ground truth: points from each window frame are motion
/// compensated to the key frame through the homography chain (not flow),
/// with no event filtering, and each point contributes a truncated Gaussian
/// response; responses combine by pixelwise max and the result is
/// peak-normalized.
pub fn legacy_aggregate(
    frame_points: &[(u32, Vec<PixelPoint>)],
    key_gar_frame: u32,
    chain: &dyn GarChainProvider,
    cfg: &HeatmapConfig,
    width: u32,
    height: u32,
) -> Result<SaliencyMap, HeatmapError> {
    let (w, h) = (width as usize, height as usize);
    let mut acc = vec![0.0f64; w * h];
    let radius = cfg.truncate_radius as i64;
    let two_sigma_sq = 2.0 * cfg.sigma_px * cfg.sigma_px;

    for &(frame, ref points) in frame_points {
        for p in points {
            // Walk the chain one step at a time toward the key frame.
            let mut pos = *p;
            let mut f = frame;
            while f != key_gar_frame {
                let next = if key_gar_frame > f { f + 1 } else { f - 1 };
                let h_step =
                    chain.step(f, next).ok_or(HeatmapError::MissingChainHomography(f, next))?;
                pos = project_point(&h_step, &pos)?;
                f = next;
            }
            // Truncated response on the same square support as the blur
            // kernel so the two modes agree on single-point inputs.
            let x_lo = ((pos.x - radius as f64).ceil() as i64).max(0);
            let x_hi = ((pos.x + radius as f64).floor() as i64).min(width as i64 - 1);
            let y_lo = ((pos.y - radius as f64).ceil() as i64).max(0);
            let y_hi = ((pos.y + radius as f64).floor() as i64).min(height as i64 - 1);
            for y in y_lo..=y_hi {
                for x in x_lo..=x_hi {
                    let d2 = (x as f64 - pos.x).powi(2) + (y as f64 - pos.y).powi(2);
                    let resp = (-d2 / two_sigma_sq).exp();
                    let cell = &mut acc[y as usize * w + x as usize];
                    if resp > *cell {
                        *cell = resp;
                    }
                }
            }
        }
    }

    let max = acc.iter().cloned().fold(0.0f64, f64::max);
    let values: Vec<f64> =
        if max > 0.0 { acc.into_iter().map(|v| v / max).collect() } else { acc };
    Ok(SaliencyMap::from_values(width, height, values)
        .expect("legacy output has valid shape and finite values"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowprop::{FlowField, MemoryFlowProvider};

    fn event(
        etg_frame: u32,
        class: EventClass,
        x: f64,
        y: f64,
        label: GazeLabel,
    ) -> FixationEvent {
        FixationEvent {
            etg_frame,
            timestamp_us: i64::from(etg_frame) * 40_000,
            event_class: class,
            x,
            y,
            gaze_label: label,
        }
    }

    fn zero_flow_provider(n: u32, w: u32, h: u32) -> MemoryFlowProvider {
        let mut p = MemoryFlowProvider::default();
        for k in 0..n {
            p.insert_forward(k, FlowField::zeros(w, h));
            if k > 0 {
                p.insert_backward(k, FlowField::zeros(w, h));
            }
        }
        p
    }

    fn identity_streams(n: u32) -> AlignmentSpec {
        AlignmentSpec::new(n, n, 0).unwrap()
    }

    #[test]
    fn window_of_non_fixations_yields_blank_truth() {
        let events = vec![
            event(10, EventClass::Saccade, 50.0, 50.0, GazeLabel::Scene),
            event(11, EventClass::Blink, 60.0, 60.0, GazeLabel::Scene),
        ];
        let spec = identity_streams(64);
        let flows = zero_flow_provider(64, 128, 96);
        let homs = UniformHomography(Homography::identity());
        let cfg = HeatmapConfig::with_sigma(5.0);
        let truth =
            new_mode_ground_truth(10, &events, &spec, &homs, &flows, &cfg, 128, 96).unwrap();
        assert!(truth.collection.points.is_empty());
        assert_eq!(truth.collection.exclusions.len(), 2);
        assert!(truth.saliency.is_blank());
        assert_eq!(truth.fixations.count(), 0);
    }

    #[test]
    fn single_scene_fixation_at_key_survives_with_scene_provenance() {
        let events = vec![event(20, EventClass::Fixation, 40.0, 30.0, GazeLabel::Scene)];
        let spec = identity_streams(64);
        let flows = zero_flow_provider(64, 128, 96);
        let homs = UniformHomography(Homography::identity());
        let cfg = HeatmapConfig::with_sigma(5.0);
        let col =
            collect_window(20, &events, &spec, &homs, &flows, &cfg, 128, 96).unwrap();
        assert_eq!(col.points.len(), 1);
        assert_eq!(col.points[0].point, PixelPoint::new(40.0, 30.0));
        assert_eq!(col.points[0].provenance, Provenance::Scene);
    }

    #[test]
    fn speedometer_fixation_dropped_scene_kept() {
        let events = vec![
            event(20, EventClass::Fixation, 40.0, 30.0, GazeLabel::Scene),
            event(21, EventClass::Fixation, 64.0, 80.0, GazeLabel::InVehicleSpeedometer),
        ];
        let spec = identity_streams(64);
        let flows = zero_flow_provider(64, 128, 96);
        let homs = UniformHomography(Homography::identity());
        let cfg = HeatmapConfig::with_sigma(5.0);
        let col = collect_window(20, &events, &spec, &homs, &flows, &cfg, 128, 96).unwrap();
        assert_eq!(col.points.len(), 1);
        assert_eq!(col.points[0].etg_frame, 20);
        assert_eq!(col.exclusions.len(), 1);
        assert_eq!(col.exclusions[0].reason, ExclusionReason::InVehicleSpeedometer);
    }

    #[test]
    fn mirror_fixations_are_retained() {
        let e = event(5, EventClass::Fixation, 1.0, 1.0, GazeLabel::InVehicleMirror);
        assert_eq!(exclusion_reason(&e), None);
    }

    #[test]
    fn out_of_view_fixation_is_clamped_with_out_of_view_provenance() {
        let events = vec![event(20, EventClass::Fixation, 500.0, 30.0, GazeLabel::OutOfView)];
        let spec = identity_streams(64);
        let flows = zero_flow_provider(64, 128, 96);
        let homs = UniformHomography(Homography::identity());
        let cfg = HeatmapConfig::with_sigma(5.0);
        let col = collect_window(20, &events, &spec, &homs, &flows, &cfg, 128, 96).unwrap();
        assert_eq!(col.points[0].point, PixelPoint::new(127.0, 30.0));
        assert_eq!(col.points[0].provenance, Provenance::OutOfView);
    }

    #[test]
    fn missing_homography_is_reported() {
        let events = vec![event(20, EventClass::Fixation, 4.0, 3.0, GazeLabel::Scene)];
        let spec = identity_streams(64);
        let flows = zero_flow_provider(64, 128, 96);
        let homs: HashMap<u32, Homography> = HashMap::new();
        let cfg = HeatmapConfig::with_sigma(5.0);
        match collect_window(20, &events, &spec, &homs, &flows, &cfg, 128, 96) {
            Err(HeatmapError::MissingHomography(20)) => {}
            other => panic!("expected MissingHomography(20), got {other:?}"),
        }
    }

    #[test]
    fn rasterize_dedupes_to_pixel_grid() {
        assert_eq!(rasterize(&[], 16, 16).count(), 0);
        let one = rasterize(&[PixelPoint::new(10.0, 10.0)], 16, 16);
        assert_eq!(one.count(), 1);
        assert!(one.is_set(10, 10));
        let two = rasterize(
            &[PixelPoint::new(10.2, 9.9), PixelPoint::new(9.8, 10.1)],
            16,
            16,
        );
        assert_eq!(two.count(), 1);
    }

    #[test]
    fn blur_peak_and_sigma_profile() {
        let mut fm = FixationMap::zeros(512, 512);
        fm.mark(256, 256);
        let cfg = HeatmapConfig::default(); // sigma 40
        let sal = gaussian_blur(&fm, &cfg);
        assert_eq!(sal.get(256, 256), 1.0);
        let at_sigma = sal.get(256 + 40, 256);
        let expect = (-0.5f64).exp();
        assert!(
            (at_sigma - expect).abs() / expect <= 1e-3,
            "value at sigma {at_sigma} vs {expect}"
        );
    }

    #[test]
    fn blur_of_blank_map_stays_blank() {
        let fm = FixationMap::zeros(64, 64);
        let sal = gaussian_blur(&fm, &HeatmapConfig::with_sigma(5.0));
        assert!(sal.is_blank());
    }

    #[test]
    fn distant_fixations_each_reach_unit_peak() {
        // >= 6 sigma apart: mutual influence is below 1e-6.
        let cfg = HeatmapConfig::with_sigma(8.0);
        let mut fm = FixationMap::zeros(256, 64);
        fm.mark(50, 32);
        fm.mark(160, 32); // 110 px apart, > 13 sigma
        let sal = gaussian_blur(&fm, &cfg);
        assert!((sal.get(50, 32) - 1.0).abs() <= 1e-6);
        assert!((sal.get(160, 32) - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn blur_commutes_with_interior_translation() {
        let cfg = HeatmapConfig::with_sigma(5.0); // radius 15
        let (w, h) = (128u32, 96u32);
        let (dx, dy) = (7i64, -4i64);
        let mut a = FixationMap::zeros(w, h);
        a.mark(40, 40);
        a.mark(60, 50);
        let mut b = FixationMap::zeros(w, h);
        b.mark((40 + dx) as u32, (40 + dy) as u32);
        b.mark((60 + dx) as u32, (50 + dy) as u32);
        let sa = gaussian_blur(&a, &cfg);
        let sb = gaussian_blur(&b, &cfg);
        let mut max_diff = 0.0f64;
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let (ox, oy) = (x - dx, y - dy);
                let va = if ox >= 0 && ox < w as i64 && oy >= 0 && oy < h as i64 {
                    sa.get(ox as u32, oy as u32)
                } else {
                    0.0
                };
                let vb = sb.get(x as u32, y as u32);
                max_diff = max_diff.max((va - vb).abs());
            }
        }
        assert!(max_diff <= 1e-9, "max abs diff {max_diff}");
    }

    #[test]
    fn legacy_single_point_matches_blur_mode() {
        let cfg = HeatmapConfig::with_sigma(6.0);
        let (w, h) = (96u32, 80u32);
        let legacy = legacy_aggregate(
            &[(10, vec![PixelPoint::new(48.0, 40.0)])],
            10,
            &IdentityChain,
            &cfg,
            w,
            h,
        )
        .unwrap();
        let mut fm = FixationMap::zeros(w, h);
        fm.mark(48, 40);
        let blurred = gaussian_blur(&fm, &cfg);
        let mut max_diff = 0.0f64;
        for (a, b) in legacy.values().iter().zip(blurred.values()) {
            max_diff = max_diff.max((a - b).abs());
        }
        assert!(max_diff <= 1e-6, "modes diverge by {max_diff}");
    }

    #[test]
    fn legacy_keeps_saccade_trail_new_mode_removes_it() {
        let (w, h) = (256u32, 128u32);
        let cfg = HeatmapConfig::with_sigma(5.0); // radius 15
        let key = 12u32;
        let spec = identity_streams(64);
        let flows = zero_flow_provider(64, w, h);
        let homs = UniformHomography(Homography::identity());

        // One genuine fixation plus a vertical saccade trail far from it.
        let mut events = vec![event(key, EventClass::Fixation, 40.0, 64.0, GazeLabel::Scene)];
        let trail: Vec<(u32, f64, f64)> =
            (0..6).map(|i| (key - 3 + i, 200.0, 30.0 + 10.0 * f64::from(i))).collect();
        for &(f, x, y) in &trail {
            events.push(event(f, EventClass::Saccade, x, y, GazeLabel::Scene));
        }

        let truth = new_mode_ground_truth(key, &events, &spec, &homs, &flows, &cfg, w, h).unwrap();

        // Legacy input: everything, mapped per frame, identity chain.
        let mut frame_points: Vec<(u32, Vec<PixelPoint>)> =
            vec![(key, vec![PixelPoint::new(40.0, 64.0)])];
        for &(f, x, y) in &trail {
            frame_points.push((f, vec![PixelPoint::new(x, y)]));
        }
        let legacy =
            legacy_aggregate(&frame_points, key, &IdentityChain, &cfg, w, h).unwrap();

        for &(_, x, y) in &trail {
            let (xi, yi) = (x as u32, y as u32);
            assert!(legacy.get(xi, yi) > 0.0, "legacy lost trail point at ({xi},{yi})");
            assert_eq!(truth.saliency.get(xi, yi), 0.0, "trail leaked into corrected gt");
        }
        assert!(truth.saliency.get(40, 64) == 1.0);
    }

    #[test]
    fn legacy_max_semantics_cap_overlapping_responses() {
        let cfg = HeatmapConfig::with_sigma(6.0);
        let sal = legacy_aggregate(
            &[(0, vec![PixelPoint::new(30.0, 30.0), PixelPoint::new(32.0, 30.0)])],
            0,
            &IdentityChain,
            &cfg,
            64,
            64,
        )
        .unwrap();
        assert!(sal.max_value() <= 1.0);
        assert_eq!(sal.get(30, 30).max(sal.get(32, 30)), 1.0);
    }

    #[test]
    fn exclusion_log_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("excl.csv");
        let records = vec![
            ExclusionRecord { etg_frame: 3, timestamp_us: 120_000, reason: ExclusionReason::Blink },
            ExclusionRecord {
                etg_frame: 9,
                timestamp_us: 360_000,
                reason: ExclusionReason::InVehicleSpeedometer,
            },
        ];
        write_exclusion_log(&path, &records).unwrap();
        assert_eq!(read_exclusion_log(&path).unwrap(), records);
    }

    #[test]
    fn every_event_is_point_or_exclusion() {
        // Conservation over a small mixed set: windows covering all frames.
        let (w, h) = (64u32, 64u32);
        let n = 30u32;
        let spec = identity_streams(n);
        let flows = zero_flow_provider(n, w, h);
        let homs = UniformHomography(Homography::identity());
        let cfg = HeatmapConfig::with_sigma(4.0);
        let events = vec![
            event(2, EventClass::Fixation, 10.0, 10.0, GazeLabel::Scene),
            event(5, EventClass::Saccade, 20.0, 20.0, GazeLabel::Scene),
            event(9, EventClass::Fixation, 30.0, 30.0, GazeLabel::InVehicleSpeedometer),
            event(14, EventClass::Fixation, 90.0, 10.0, GazeLabel::OutOfView),
            event(22, EventClass::Blink, 0.0, 0.0, GazeLabel::Scene),
            event(27, EventClass::Fixation, 40.0, 50.0, GazeLabel::InVehicleMirror),
        ];
        let (retained, excluded) = partition_events(&events);
        assert_eq!(retained.len() + excluded.len(), events.len());

        let mut seen = vec![false; events.len()];
        for key in 0..n {
            let col = collect_window(key, &events, &spec, &homs, &flows, &cfg, w, h).unwrap();
            for p in &col.points {
                let idx = events
                    .iter()
                    .position(|e| e.etg_frame == p.etg_frame && e.timestamp_us == p.timestamp_us)
                    .unwrap();
                seen[idx] = true;
            }
        }
        for rec in &excluded {
            let idx = events
                .iter()
                .position(|e| e.etg_frame == rec.etg_frame && e.timestamp_us == rec.timestamp_us)
                .unwrap();
            assert!(!seen[idx], "event both excluded and collected");
            seen[idx] = true;
        }
        assert!(seen.iter().all(|&b| b), "some event vanished: {seen:?}");
    }
}
