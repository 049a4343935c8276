//! Self-contained synthetic dataset generator: a small "video" with frames,
//! flow fields, point correspondences, eye-tracker events, telemetry, and
//! annotations, all consistent with one known homography and one known
//! constant motion.
//!
//! The generated data is deliberately analyzable: scene fixations ride the
//! optical flow, so after tracing, every window collapses onto a single
//! known pixel per key frame; correspondences are exact except for a few
//! planted outliers; and the event list covers every class and label the
//! pipeline must handle.

use crate::align::AlignmentSpec;
use crate::config::{EpsilonSpec, MetricsSection, PipelineConfig};
use crate::flowprop::{write_flo, FlowField};
use crate::geometry::{
    project_point, write_correspondences, Correspondence, Homography, PixelPoint, RansacConfig,
};
use crate::heatmap::HeatmapConfig;
use crate::ingest::{
    write_annotations, write_fixation_log, write_telemetry, AnnotationSet, EventClass,
    FixationEvent, GazeLabel, GlobalContext, Intersection, IntersectionType, LateralLabel,
    LateralSegment, Location, Priority, TelemetrySample, TimeOfDay, Weather,
};
use crate::raster::GrayImage;
use crate::tasklab::{ActionConfig, Route};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Ingest(#[from] crate::ingest::IngestError),
    #[error("{0}")]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error("{0}")]
    Flow(#[from] crate::flowprop::FlowError),
    #[error("{0}")]
    Raster(#[from] crate::raster::RasterError),
    #[error("{0}")]
    Task(#[from] crate::tasklab::TaskError),
    #[error("{0}")]
    Config(#[from] crate::config::ConfigError),
}

/// What was generated and where, plus the ground-truth knowledge a test
/// needs to verify pipeline output.
pub struct SyntheticDataset {
    pub root: PathBuf,
    pub alignment: AlignmentSpec,
    pub width: u32,
    pub height: u32,
    /// True ETG -> GAR homography behind the correspondence files.
    pub true_homography: Homography,
    /// Constant scene motion per GAR frame (matches the flow files).
    pub motion: (f64, f64),
    /// Base GAR position of the tracked gaze target at frame 0.
    pub gaze_base: PixelPoint,
    pub events: Vec<FixationEvent>,
    pub annotations: AnnotationSet,
    pub fixations_csv: PathBuf,
    pub telemetry_csv: PathBuf,
    pub annotations_json: PathBuf,
    pub route_csv: PathBuf,
    pub config_json: PathBuf,
    pub frames_dir: PathBuf,
    pub flow_dir: PathBuf,
    pub corr_dir: PathBuf,
    pub pred_dir: PathBuf,
}

impl SyntheticDataset {
    /// The GAR-view location of the gaze target at a key frame; after
    /// tracing, every retained scene fixation in the window lands here.
    pub fn target_at(&self, gar_frame: u32) -> PixelPoint {
        PixelPoint::new(
            self.gaze_base.x + self.motion.0 * f64::from(gar_frame),
            self.gaze_base.y + self.motion.1 * f64::from(gar_frame),
        )
    }
}

/// ETG frames whose events are withheld so that GAR keys 34..=36 have blank
/// ground truth under the fixture's window half-width of 3.
fn in_event_gap(etg_frame: u32) -> bool {
    (35..=45).contains(&etg_frame)
}

/// Generate the full fixture under `root`. Deterministic for a fixed seed.
pub fn generate(root: &Path, seed: u64) -> Result<SyntheticDataset, SyntheticError> {
    let width = 128u32;
    let height = 96u32;
    let n_etg = 60u32;
    let n_gar = 50u32;
    let offset = 2i32;
    let alignment = AlignmentSpec::new(n_etg, n_gar, offset).expect("valid fixture alignment");
    let motion = (0.8f64, -0.3f64);
    let gaze_base = PixelPoint::new(30.0, 40.0);
    let true_homography = Homography::from_rows([
        [1.05, 0.02, 4.0],
        [-0.01, 0.98, -2.0],
        [2e-5, -1e-5, 1.0],
    ])?;
    let h_inv = true_homography.inverse()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    std::fs::create_dir_all(root)?;
    let frames_dir = root.join("frames");
    let flow_dir = root.join("flows");
    let corr_dir = root.join("corr");
    let pred_dir = root.join("pred_center");
    for d in [&frames_dir, &flow_dir, &corr_dir, &pred_dir] {
        std::fs::create_dir_all(d)?;
    }

    // --- frames: a sinusoidal pattern advected by the constant motion ----
    for k in 0..n_gar {
        let mut img = GrayImage::zeros(width, height);
        let (sx, sy) = (motion.0 * f64::from(k), motion.1 * f64::from(k));
        for y in 0..height {
            for x in 0..width {
                let v = 127.5
                    * (1.0
                        + (0.31 * (f64::from(x) - sx)).sin()
                            * (0.23 * (f64::from(y) - sy)).cos());
                img.set(x, y, v as f32);
            }
        }
        img.write_pgm(&frames_dir.join(format!("frame_{k:06}.pgm")))?;
    }

    // --- flow files: constant motion, forward and backward ---------------
    let fwd = FlowField::constant(width, height, motion.0 as f32, motion.1 as f32);
    let bwd = FlowField::constant(width, height, -motion.0 as f32, -motion.1 as f32);
    for k in 0..n_gar.saturating_sub(1) {
        write_flo(&flow_dir.join(format!("flow_fwd_{k:06}.flo")), &fwd)?;
    }
    for k in 1..n_gar {
        write_flo(&flow_dir.join(format!("flow_bwd_{k:06}.flo")), &bwd)?;
    }

    // --- correspondences: exact grid through the true homography, plus two
    // planted outliers per frame ------------------------------------------
    for e in 0..n_etg {
        let mut corrs = Vec::new();
        for gy in 0..3 {
            for gx in 0..4 {
                let src = PixelPoint::new(
                    10.0 + f64::from(gx) * 32.0 + f64::from(e % 3),
                    8.0 + f64::from(gy) * 30.0 + f64::from(e % 5),
                );
                let dst = project_point(&true_homography, &src)?;
                corrs.push(Correspondence { src, dst });
            }
        }
        for c in corrs.iter_mut().take(2) {
            c.dst = PixelPoint::new(
                rng.gen_range(0.0..f64::from(width)),
                rng.gen_range(0.0..f64::from(height)),
            );
        }
        write_correspondences(&corr_dir.join(format!("corr_{e:06}.csv")), &corrs)?;
    }

    // --- eye-tracker events ----------------------------------------------
    let mut events = Vec::new();
    let gar_of = |e: u32| crate::align::etg_to_gar(&alignment, e).expect("in range");
    for e in 0..n_etg {
        if in_event_gap(e) {
            continue;
        }
        let ts = i64::from(e) * 40_000;
        let scene_gar = gar_of(e);
        let target = PixelPoint::new(
            gaze_base.x + motion.0 * f64::from(scene_gar),
            gaze_base.y + motion.1 * f64::from(scene_gar),
        );
        let etg_pt = project_point(&h_inv, &target)?;
        let mk = |class: EventClass, x: f64, y: f64, label: GazeLabel| FixationEvent {
            etg_frame: e,
            timestamp_us: ts,
            event_class: class,
            x,
            y,
            gaze_label: label,
        };
        let event = match e {
            6 => mk(EventClass::Fixation, 500.0, 700.0, GazeLabel::InVehicleSpeedometer),
            12 => mk(EventClass::Fixation, 480.0, 650.0, GazeLabel::InVehicleOther),
            18 => mk(EventClass::Fixation, -900.0, 2000.0, GazeLabel::OobError),
            24 => {
                // Driver looks outside the scene camera view.
                let out = project_point(&h_inv, &PixelPoint::new(f64::from(width) + 25.0, 10.0))?;
                mk(EventClass::Fixation, out.x, out.y, GazeLabel::OutOfView)
            }
            26 => mk(EventClass::Error, f64::NAN, f64::NAN, GazeLabel::OobError),
            30 => mk(EventClass::Fixation, etg_pt.x, etg_pt.y, GazeLabel::InVehicleMirror),
            8 | 9 | 20 | 21 => mk(
                EventClass::Saccade,
                100.0 + f64::from(e) * 2.0,
                10.0 + f64::from(e) * 6.0,
                GazeLabel::Scene,
            ),
            14 | 15 => mk(EventClass::Blink, 0.0, 0.0, GazeLabel::Scene),
            _ => mk(EventClass::Fixation, etg_pt.x, etg_pt.y, GazeLabel::Scene),
        };
        events.push(event);
        if e == 10 {
            // Second sample on the same frame, later timestamp.
            events.push(FixationEvent {
                etg_frame: e,
                timestamp_us: ts + 20_000,
                event_class: EventClass::Saccade,
                x: 120.0,
                y: 80.0,
                gaze_label: GazeLabel::Scene,
            });
        }
    }
    let fixations_csv = root.join("fixations.csv");
    write_fixation_log(&fixations_csv, &events)?;

    // --- telemetry: stop, accelerate, cruise ------------------------------
    let samples: Vec<TelemetrySample> = (0..n_gar)
        .map(|f| {
            let speed = if f < 15 {
                0.0
            } else if f < 35 {
                0.6 * f64::from(f - 14)
            } else {
                12.0
            };
            TelemetrySample {
                gar_frame: f,
                speed_kmh: speed,
                lat: 44.5 + 1e-5 * f64::from(f),
                lon: 10.5,
            }
        })
        .collect();
    let telemetry_csv = root.join("telemetry.csv");
    write_telemetry(&telemetry_csv, &samples)?;

    // --- annotations -------------------------------------------------------
    let annotations = AnnotationSet {
        lateral_segments: vec![
            LateralSegment { start_frame: 10, end_frame: 15, label: LateralLabel::UTurn },
            LateralSegment { start_frame: 20, end_frame: 28, label: LateralLabel::TurnRight },
        ],
        intersections: vec![
            Intersection {
                entry_frame: 20,
                exit_frame: 30,
                kind: IntersectionType::Unsignalized,
                priority: Priority::Yield,
                first_fixation_frame: Some(18),
            },
            Intersection {
                entry_frame: 40,
                exit_frame: 45,
                kind: IntersectionType::Merge,
                priority: Priority::RightOfWay,
                first_fixation_frame: None,
            },
        ],
        global_context: GlobalContext {
            weather: Weather::Cloudy,
            time_of_day: TimeOfDay::Morning,
            location: Location::Suburban,
        },
        offset_frames: offset,
        n_etg,
        n_gar,
    };
    let annotations_json = root.join("annotations.json");
    write_annotations(&annotations_json, &annotations)?;

    let route = Route::new(HashMap::from([
        (0usize, (44.5002, 10.5)),
        (1usize, (44.50042, 10.5)),
    ]));
    let route_csv = root.join("route.csv");
    route.write_csv(&route_csv)?;

    // --- pipeline config sized for this miniature video -------------------
    let config = PipelineConfig {
        heatmap: HeatmapConfig { sigma_px: 6.0, truncate_radius: 18, window_half: 3 },
        ransac: RansacConfig { seed, ..RansacConfig::default() },
        metrics: MetricsSection {
            kld_mode: crate::metrics::KldMode::Stable,
            epsilon: EpsilonSpec::Named("numpy".into()),
        },
        actions: ActionConfig {
            median_window: 3,
            mean_window: 5,
            min_segment_frames: 5,
            ..ActionConfig::default()
        },
    };
    let config_json = root.join("config.json");
    config.save(&config_json)?;

    // --- a center-prior baseline prediction for every key frame -----------
    let center = PixelPoint::new(f64::from(width - 1) / 2.0, f64::from(height - 1) / 2.0);
    let mut prior = vec![0.0f64; (width as usize) * (height as usize)];
    let sigma = f64::from(width) / 4.0;
    for y in 0..height {
        for x in 0..width {
            let d2 = (f64::from(x) - center.x).powi(2) + (f64::from(y) - center.y).powi(2);
            prior[(y * width + x) as usize] = (-d2 / (2.0 * sigma * sigma)).exp();
        }
    }
    let prior = crate::raster::SaliencyMap::from_values(width, height, prior)?;
    for k in 0..n_gar {
        prior.write_pfm(&pred_dir.join(format!("{k:06}.pfm")))?;
    }

    Ok(SyntheticDataset {
        root: root.to_path_buf(),
        alignment,
        width,
        height,
        true_homography,
        motion,
        gaze_base,
        events,
        annotations,
        fixations_csv,
        telemetry_csv,
        annotations_json,
        route_csv,
        config_json,
        frames_dir,
        flow_dir,
        corr_dir,
        pred_dir,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowprop::read_flo;
    use crate::geometry::read_correspondences;
    use crate::ingest::{parse_annotations, parse_fixation_log, parse_telemetry};

    #[test]
    fn generated_dataset_parses_back_cleanly() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate(dir.path(), 42).unwrap();

        let events = parse_fixation_log(&ds.fixations_csv).unwrap();
        assert_eq!(events.len(), ds.events.len());
        assert!(events.iter().any(|e| e.event_class == EventClass::Saccade));
        assert!(events.iter().any(|e| e.gaze_label == GazeLabel::InVehicleSpeedometer));

        let telemetry = parse_telemetry(&ds.telemetry_csv).unwrap();
        assert_eq!(telemetry.len(), 50);

        let ann = parse_annotations(&ds.annotations_json).unwrap();
        assert_eq!(ann, ds.annotations);

        let flow = read_flo(&ds.flow_dir.join("flow_fwd_000000.flo")).unwrap();
        assert_eq!((flow.width(), flow.height()), (ds.width, ds.height));

        let corrs = read_correspondences(&ds.corr_dir.join("corr_000000.csv")).unwrap();
        assert_eq!(corrs.len(), 12);

        let cfg = PipelineConfig::load(&ds.config_json).unwrap();
        assert_eq!(cfg.heatmap.window_half, 3);
    }

    #[test]
    fn generation_is_deterministic() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        generate(d1.path(), 7).unwrap();
        generate(d2.path(), 7).unwrap();
        for name in ["fixations.csv", "telemetry.csv", "annotations.json", "config.json"] {
            let a = std::fs::read(d1.path().join(name)).unwrap();
            let b = std::fs::read(d2.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between runs");
        }
        let a = std::fs::read(d1.path().join("corr/corr_000005.csv")).unwrap();
        let b = std::fs::read(d2.path().join("corr/corr_000005.csv")).unwrap();
        assert_eq!(a, b);
    }
}
