//! Task and context labeling: longitudinal action labels derived from
//! telemetry, intersection context windows, per-sample task/context records,
//! dataset statistics, and per-sample training weights.
//!
//! Outputs:
//! - timeline CSV `frame,longitudinal,lateral`
//! - context records as JSON lines, one per 16-frame sample (8-frame stride)
//! - weights CSV `video_id,start_frame,weight`
//! - stats CSV `axis,label,count,mean_frames,std_frames,pct_frames`

use crate::ingest::{
    AnnotationSet, GlobalContext, IntersectionType, LateralLabel, Priority, TelemetrySample,
};
use crate::metrics::{kld, MetricConfig, MetricError};
use crate::numeric::{mean_and_population_std, pairwise_mean, pairwise_sum};
use crate::raster::SaliencyMap;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;
use thiserror::Error;

/// Frames per training sample.
pub const SAMPLE_FRAMES: u32 = 16;
/// Stride between sample starts (samples overlap by 8 frames).
pub const SAMPLE_STRIDE: u32 = 8;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("need at least {need} samples, got {got}")]
    InsufficientSamples { need: usize, got: usize },
    #[error("array lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("negative distance {0}")]
    NegativeDistance(f64),
    #[error("sample window [{start}, {start}+{len}) outside the labeled video")]
    WindowOutOfRange { start: u32, len: u32 },
    #[error("invalid action config: {0}")]
    InvalidConfig(String),
    #[error("metric error: {0}")]
    Metric(#[from] MetricError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed row at line {0}")]
    MalformedRow(u64),
    #[error("unknown label token {0:?}")]
    UnknownLabel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActionConfig {
    pub stop_speed_kmh: f64,
    pub accel_threshold_ms2: f64,
    pub fps: f64,
    pub median_window: usize,
    pub mean_window: usize,
    pub min_segment_frames: usize,
}

impl Default for ActionConfig {
    fn default() -> Self {
        Self {
            stop_speed_kmh: 1.0,
            accel_threshold_ms2: 0.4,
            fps: 25.0,
            median_window: 5,
            mean_window: 25,
            min_segment_frames: 12,
        }
    }
}

impl ActionConfig {
    pub fn validate(&self) -> Result<(), TaskError> {
        if self.stop_speed_kmh <= 0.0 || self.accel_threshold_ms2 <= 0.0 || self.fps <= 0.0 {
            return Err(TaskError::InvalidConfig("thresholds and fps must be positive".into()));
        }
        if self.median_window % 2 == 0 || self.mean_window % 2 == 0 {
            return Err(TaskError::InvalidConfig("filter windows must be odd".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LongitudinalLabel {
    Maintain,
    Accelerate,
    Decelerate,
    Stopped,
}

impl LongitudinalLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            LongitudinalLabel::Maintain => "maintain",
            LongitudinalLabel::Accelerate => "accelerate",
            LongitudinalLabel::Decelerate => "decelerate",
            LongitudinalLabel::Stopped => "stopped",
        }
    }

    pub fn parse(tok: &str) -> Result<Self, TaskError> {
        match tok {
            "maintain" => Ok(LongitudinalLabel::Maintain),
            "accelerate" => Ok(LongitudinalLabel::Accelerate),
            "decelerate" => Ok(LongitudinalLabel::Decelerate),
            "stopped" => Ok(LongitudinalLabel::Stopped),
            other => Err(TaskError::UnknownLabel(other.to_string())),
        }
    }

    pub const ALL: [LongitudinalLabel; 4] = [
        LongitudinalLabel::Maintain,
        LongitudinalLabel::Accelerate,
        LongitudinalLabel::Decelerate,
        LongitudinalLabel::Stopped,
    ];
}

/// Per-frame action labels for one video; both axes cover every frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionTimeline {
    pub longitudinal: Vec<LongitudinalLabel>,
    pub lateral: Vec<LateralLabel>,
}

impl ActionTimeline {
    pub fn len(&self) -> usize {
        self.longitudinal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.longitudinal.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Speed smoothing and acceleration
// ---------------------------------------------------------------------------

fn median_filter(values: &[f64], window: usize) -> Vec<f64> {
    let half = (window / 2) as i64;
    let n = values.len() as i64;
    let mut out = Vec::with_capacity(values.len());
    let mut buf = Vec::with_capacity(window);
    for t in 0..n {
        buf.clear();
        for d in -half..=half {
            let idx = (t + d).clamp(0, n - 1) as usize; // edge replication
            buf.push(values[idx]);
        }
        buf.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out.push(buf[buf.len() / 2]);
    }
    out
}

fn mean_filter(values: &[f64], window: usize) -> Vec<f64> {
    let half = (window / 2) as i64;
    let n = values.len() as i64;
    let mut out = Vec::with_capacity(values.len());
    for t in 0..n {
        let mut acc = 0.0;
        for d in -half..=half {
            acc += values[(t + d).clamp(0, n - 1) as usize];
        }
        out.push(acc / window as f64);
    }
    out
}

/// Interpolate telemetry speed to every frame `0..=last_sample_frame`, then
/// median-filter (outlier removal) and moving-average (smoothing), both
/// edge-replicated.
pub fn smooth_speed(samples: &[TelemetrySample], cfg: &ActionConfig) -> Result<Vec<f64>, TaskError> {
    cfg.validate()?;
    if samples.len() < 2 {
        return Err(TaskError::InsufficientSamples { need: 2, got: samples.len() });
    }
    let last = samples.last().unwrap().gar_frame;
    let mut per_frame = Vec::with_capacity(last as usize + 1);
    let mut seg = 0usize;
    for frame in 0..=last {
        while seg + 1 < samples.len() && samples[seg + 1].gar_frame <= frame {
            seg += 1;
        }
        let v = if frame <= samples[0].gar_frame {
            samples[0].speed_kmh
        } else if seg + 1 >= samples.len() {
            samples[seg].speed_kmh
        } else {
            let (a, b) = (&samples[seg], &samples[seg + 1]);
            let t = f64::from(frame - a.gar_frame) / f64::from(b.gar_frame - a.gar_frame);
            a.speed_kmh + t * (b.speed_kmh - a.speed_kmh)
        };
        per_frame.push(v);
    }
    let filtered = median_filter(&per_frame, cfg.median_window);
    Ok(mean_filter(&filtered, cfg.mean_window))
}

/// Central-difference acceleration in m/s² from per-frame speed in km/h:
/// `a_t = (v_{t+1} - v_{t-1}) / 3.6 * fps / 2`, one-sided at the ends.
pub fn compute_acceleration(speed_kmh: &[f64], fps: f64) -> Result<Vec<f64>, TaskError> {
    let n = speed_kmh.len();
    if n < 3 {
        return Err(TaskError::InsufficientSamples { need: 3, got: n });
    }
    let to_ms = 1.0 / 3.6;
    let mut out = Vec::with_capacity(n);
    out.push((speed_kmh[1] - speed_kmh[0]) * to_ms * fps);
    for t in 1..n - 1 {
        out.push((speed_kmh[t + 1] - speed_kmh[t - 1]) * to_ms * fps / 2.0);
    }
    out.push((speed_kmh[n - 1] - speed_kmh[n - 2]) * to_ms * fps);
    Ok(out)
}

// ---------------------------------------------------------------------------
// Longitudinal labeling
// ---------------------------------------------------------------------------

fn run_lengths<L: Copy + Eq>(labels: &[L]) -> Vec<(L, usize, usize)> {
    let mut runs = Vec::new();
    let mut start = 0;
    for i in 1..=labels.len() {
        if i == labels.len() || labels[i] != labels[start] {
            runs.push((labels[start], start, i - start));
            start = i;
        }
    }
    runs
}

/// Merge runs shorter than `min_len` into the longer adjacent run (ties go
/// to the earlier one), repeating until stable.
fn merge_short_segments<L: Copy + Eq>(labels: &mut [L], min_len: usize) {
    loop {
        let runs = run_lengths(labels);
        if runs.len() <= 1 {
            return;
        }
        let Some(i) = runs.iter().position(|&(_, _, len)| len < min_len) else {
            return;
        };
        let target = if i == 0 {
            runs[1].0
        } else if i == runs.len() - 1 {
            runs[i - 1].0
        } else if runs[i - 1].2 >= runs[i + 1].2 {
            runs[i - 1].0
        } else {
            runs[i + 1].0
        };
        let (_, start, len) = runs[i];
        labels[start..start + len].iter_mut().for_each(|l| *l = target);
    }
}

/// Per-frame longitudinal labels: stopped below the speed floor, otherwise
/// accelerate / decelerate by the signed threshold, otherwise maintain.
/// Segments shorter than `cfg.min_segment_frames` are merged away.
pub fn label_longitudinal(
    speed_kmh: &[f64],
    accel_ms2: &[f64],
    cfg: &ActionConfig,
) -> Result<Vec<LongitudinalLabel>, TaskError> {
    cfg.validate()?;
    if speed_kmh.len() != accel_ms2.len() {
        return Err(TaskError::LengthMismatch(speed_kmh.len(), accel_ms2.len()));
    }
    let mut labels: Vec<LongitudinalLabel> = speed_kmh
        .iter()
        .zip(accel_ms2.iter())
        .map(|(&v, &a)| {
            if v <= cfg.stop_speed_kmh {
                LongitudinalLabel::Stopped
            } else if a >= cfg.accel_threshold_ms2 {
                LongitudinalLabel::Accelerate
            } else if a <= -cfg.accel_threshold_ms2 {
                LongitudinalLabel::Decelerate
            } else {
                LongitudinalLabel::Maintain
            }
        })
        .collect();
    merge_short_segments(&mut labels, cfg.min_segment_frames);
    Ok(labels)
}

/// Per-frame lateral labels from the manual annotation segments; frames not
/// covered by any segment are `straight`.
pub fn lateral_timeline(n_frames: u32, ann: &AnnotationSet) -> Vec<LateralLabel> {
    let mut labels = vec![LateralLabel::Straight; n_frames as usize];
    for seg in &ann.lateral_segments {
        let end = seg.end_frame.min(n_frames.saturating_sub(1));
        for f in seg.start_frame..=end {
            if (f as usize) < labels.len() {
                labels[f as usize] = seg.label;
            }
        }
    }
    labels
}

/// Assemble both axes for one video from telemetry and annotations.
pub fn build_timeline(
    samples: &[TelemetrySample],
    ann: &AnnotationSet,
    cfg: &ActionConfig,
) -> Result<ActionTimeline, TaskError> {
    let speed = smooth_speed(samples, cfg)?;
    let accel = compute_acceleration(&speed, cfg.fps)?;
    let longitudinal = label_longitudinal(&speed, &accel, cfg)?;
    let lateral = lateral_timeline(longitudinal.len() as u32, ann);
    Ok(ActionTimeline { longitudinal, lateral })
}

// ---------------------------------------------------------------------------
// Intersection context windows
// ---------------------------------------------------------------------------

/// Gaze-action delay in frames applied before right-of-way intersections.
pub const ROW_LEAD_FRAMES: u32 = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntersectionWindow {
    pub start: u32,
    pub end: u32,
    pub kind: IntersectionType,
    pub priority: Priority,
}

/// Context windows: yield intersections start at the driver's first fixation
/// on the intersecting road; right-of-way ones start 25 frames (~1 s) before
/// entry.
pub fn intersection_windows(ann: &AnnotationSet) -> Vec<IntersectionWindow> {
    ann.intersections
        .iter()
        .map(|i| {
            let start = match (i.priority, i.first_fixation_frame) {
                (Priority::Yield, Some(f)) => f,
                _ => i.entry_frame.saturating_sub(ROW_LEAD_FRAMES),
            };
            IntersectionWindow { start, end: i.exit_frame, kind: i.kind, priority: i.priority }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Local context
// ---------------------------------------------------------------------------

/// Maximum distance (m) at which an upcoming intersection is announced,
/// as a function of current speed in km/h.
pub fn max_lead_distance_m(speed_kmh: f64) -> f64 {
    speed_kmh * 2.22 + 37.144
}

/// Pass a distance through the lead gate: the distance itself when the
/// intersection is close enough to announce, `f64::INFINITY` otherwise.
pub fn lead_distance_gate(speed_kmh: f64, distance_m: f64) -> Result<f64, TaskError> {
    if distance_m < 0.0 {
        return Err(TaskError::NegativeDistance(distance_m));
    }
    if distance_m <= max_lead_distance_m(speed_kmh) {
        Ok(distance_m)
    } else {
        Ok(f64::INFINITY)
    }
}

/// Great-circle distance in meters (spherical earth, R = 6371 km).
pub fn haversine_m(a: (f64, f64), b: (f64, f64)) -> f64 {
    const R: f64 = 6_371_000.0;
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let s = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * R * s.sqrt().asin()
}

/// GPS coordinates of annotated intersections, keyed by their index in
/// `AnnotationSet::intersections`. Loaded from CSV
/// `intersection_index,lat,lon`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Route {
    coords: HashMap<usize, (f64, f64)>,
}

impl Route {
    pub fn new(coords: HashMap<usize, (f64, f64)>) -> Self {
        Self { coords }
    }

    pub fn coord(&self, intersection_index: usize) -> Option<(f64, f64)> {
        self.coords.get(&intersection_index).copied()
    }

    pub fn read_csv(path: &Path) -> Result<Self, TaskError> {
        let text = std::fs::read_to_string(path)?;
        let mut coords = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if i == 0 {
                if line.trim() != "intersection_index,lat,lon" {
                    return Err(TaskError::MalformedRow(1));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let line_no = (i + 1) as u64;
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 3 {
                return Err(TaskError::MalformedRow(line_no));
            }
            let idx: usize = parts[0].trim().parse().map_err(|_| TaskError::MalformedRow(line_no))?;
            let lat: f64 = parts[1].trim().parse().map_err(|_| TaskError::MalformedRow(line_no))?;
            let lon: f64 = parts[2].trim().parse().map_err(|_| TaskError::MalformedRow(line_no))?;
            coords.insert(idx, (lat, lon));
        }
        Ok(Self { coords })
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), TaskError> {
        let mut rows: Vec<_> = self.coords.iter().collect();
        rows.sort_by_key(|(idx, _)| **idx);
        let mut out = String::from("intersection_index,lat,lon\n");
        for (idx, (lat, lon)) in rows {
            out.push_str(&format!("{idx},{lat},{lon}\n"));
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NextAction {
    TurnRight,
    TurnLeft,
    DriveStraight,
}

mod inf_or_number {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Str(s) if s == "inf" => Ok(f64::INFINITY),
            Raw::Str(s) => Err(de::Error::custom(format!("expected number or \"inf\", got {s:?}"))),
        }
    }
}

/// Task/context feature bundle for one 16-frame sample: global context,
/// local context (upcoming intersection), and current action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextRecord {
    pub start_frame: u32,
    pub weather: crate::ingest::Weather,
    pub time_of_day: crate::ingest::TimeOfDay,
    pub location: crate::ingest::Location,
    /// Distance in meters to the nearest current/upcoming intersection;
    /// `inf` when none is within the speed-dependent lead distance.
    #[serde(with = "inf_or_number")]
    pub distance_to_intersection_m: f64,
    /// Priority at that intersection; absent when no intersection lies ahead.
    pub priority: Option<Priority>,
    pub next_action: NextAction,
    pub speed_kmh: Vec<f64>,
    pub accel_ms2: Vec<f64>,
    /// Modal lateral label over the sample; ties go to the label occurring
    /// later in the window.
    pub lateral_action: LateralLabel,
}

fn interpolate_latlon(samples: &[TelemetrySample], frame: u32) -> (f64, f64) {
    debug_assert!(!samples.is_empty());
    if frame <= samples[0].gar_frame {
        return (samples[0].lat, samples[0].lon);
    }
    for pair in samples.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if frame <= b.gar_frame {
            let t = f64::from(frame - a.gar_frame) / f64::from(b.gar_frame - a.gar_frame);
            return (a.lat + t * (b.lat - a.lat), a.lon + t * (b.lon - a.lon));
        }
    }
    let last = samples.last().unwrap();
    (last.lat, last.lon)
}

fn modal_lateral(window: &[LateralLabel]) -> LateralLabel {
    let mut counts: HashMap<LateralLabel, (usize, usize)> = HashMap::new();
    for (i, &l) in window.iter().enumerate() {
        let e = counts.entry(l).or_insert((0, 0));
        e.0 += 1;
        e.1 = i; // last occurrence
    }
    let mut best: Option<(LateralLabel, usize, usize)> = None;
    for (label, (count, last)) in counts {
        let better = match best {
            None => true,
            Some((_, bc, bl)) => count > bc || (count == bc && last > bl),
        };
        if better {
            best = Some((label, count, last));
        }
    }
    best.expect("window is non-empty").0
}

/// Assemble one sample's context record.
///
/// "Now" is the final frame of the window (the frame the sample predicts
/// for). The upcoming intersection is the one with the earliest entry whose
/// window has not yet been exited; its distance passes through the lead
/// gate, and the next action is the first upcoming turn maneuver.
#[allow(clippy::too_many_arguments)]
pub fn build_context_record(
    start_frame: u32,
    timeline: &ActionTimeline,
    speed_kmh: &[f64],
    accel_ms2: &[f64],
    telemetry: &[TelemetrySample],
    ann: &AnnotationSet,
    route: &Route,
    global: &GlobalContext,
) -> Result<ContextRecord, TaskError> {
    let end = start_frame as usize + SAMPLE_FRAMES as usize;
    if end > timeline.len() || end > speed_kmh.len() || end > accel_ms2.len() {
        return Err(TaskError::WindowOutOfRange { start: start_frame, len: SAMPLE_FRAMES });
    }
    let now = start_frame + SAMPLE_FRAMES - 1;

    let upcoming = ann
        .intersections
        .iter()
        .enumerate()
        .filter(|(_, i)| i.exit_frame >= now)
        .min_by_key(|(idx, i)| (i.entry_frame, *idx));
    let speed_now = speed_kmh[now as usize];
    let (distance, priority) = match upcoming {
        Some((idx, inter)) => {
            let d = match (route.coord(idx), telemetry.is_empty()) {
                (Some(coord), false) => {
                    let here = interpolate_latlon(telemetry, now);
                    lead_distance_gate(speed_now, haversine_m(here, coord))?
                }
                _ => f64::INFINITY,
            };
            (d, Some(inter.priority))
        }
        None => (f64::INFINITY, None),
    };

    let next_action = ann
        .lateral_segments
        .iter()
        .filter(|s| s.end_frame >= now)
        .find_map(|s| match s.label {
            LateralLabel::TurnLeft => Some(NextAction::TurnLeft),
            LateralLabel::TurnRight => Some(NextAction::TurnRight),
            _ => None,
        })
        .unwrap_or(NextAction::DriveStraight);

    let range = start_frame as usize..end;
    Ok(ContextRecord {
        start_frame,
        weather: global.weather,
        time_of_day: global.time_of_day,
        location: global.location,
        distance_to_intersection_m: distance,
        priority,
        next_action,
        speed_kmh: speed_kmh[range.clone()].to_vec(),
        accel_ms2: accel_ms2[range.clone()].to_vec(),
        lateral_action: modal_lateral(&timeline.lateral[range]),
    })
}

pub fn write_context_records(path: &Path, records: &[ContextRecord]) -> Result<(), TaskError> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("context record serializes"));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_context_records(path: &Path) -> Result<Vec<ContextRecord>, TaskError> {
    let text = std::fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: ContextRecord =
            serde_json::from_str(line).map_err(|_| TaskError::MalformedRow((i + 1) as u64))?;
        records.push(r);
    }
    Ok(records)
}

// ---------------------------------------------------------------------------
// Sample weights
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleWeight {
    pub video_id: String,
    pub start_frame: u32,
    pub weight: f64,
}

/// Pixelwise mean of the non-blank ground-truth maps of a video. `None` when
/// every map is blank.
pub fn video_mean_map(maps: &[SaliencyMap]) -> Option<SaliencyMap> {
    let nonblank: Vec<&SaliencyMap> = maps.iter().filter(|m| !m.is_blank()).collect();
    let first = *nonblank.first()?;
    let (w, h) = (first.width(), first.height());
    let n = (w as usize) * (h as usize);
    let mut acc = vec![0.0f64; n];
    for m in &nonblank {
        for (a, &v) in acc.iter_mut().zip(m.values()) {
            *a += v;
        }
    }
    let count = nonblank.len() as f64;
    let values: Vec<f64> = acc.into_iter().map(|v| v / count).collect();
    Some(SaliencyMap::from_values(w, h, values).expect("mean map is finite"))
}

/// Mean stable-mode KLD between the sample's non-blank ground-truth frames
/// and the video's mean map; 0 when the whole sample is blank.
pub fn sample_weight(
    sample_maps: &[SaliencyMap],
    video_mean: &SaliencyMap,
    cfg: &MetricConfig,
) -> Result<f64, TaskError> {
    let mut values = Vec::new();
    for m in sample_maps {
        if !m.same_dims(video_mean) {
            return Err(TaskError::Metric(MetricError::DimensionMismatch(
                m.width(),
                m.height(),
                video_mean.width(),
                video_mean.height(),
            )));
        }
        if m.is_blank() {
            continue;
        }
        values.push(kld(m, video_mean, &MetricConfig::stable(cfg.epsilon))?);
    }
    Ok(pairwise_mean(&values).unwrap_or(0.0))
}

pub fn write_weights(path: &Path, weights: &[SampleWeight]) -> Result<(), TaskError> {
    let mut out = String::from("video_id,start_frame,weight\n");
    for w in weights {
        out.push_str(&format!("{},{},{}\n", w.video_id, w.start_frame, w.weight));
    }
    std::fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Timeline CSV
// ---------------------------------------------------------------------------

pub fn write_timeline(path: &Path, timeline: &ActionTimeline) -> Result<(), TaskError> {
    let mut out = String::from("frame,longitudinal,lateral\n");
    for (i, (lon, lat)) in timeline.longitudinal.iter().zip(&timeline.lateral).enumerate() {
        out.push_str(&format!("{},{},{}\n", i, lon.as_str(), lat.as_str()));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_timeline(path: &Path) -> Result<ActionTimeline, TaskError> {
    let text = std::fs::read_to_string(path)?;
    let mut longitudinal = Vec::new();
    let mut lateral = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line.trim() != "frame,longitudinal,lateral" {
                return Err(TaskError::MalformedRow(1));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let line_no = (i + 1) as u64;
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(TaskError::MalformedRow(line_no));
        }
        let frame: usize = parts[0].parse().map_err(|_| TaskError::MalformedRow(line_no))?;
        if frame != longitudinal.len() {
            return Err(TaskError::MalformedRow(line_no));
        }
        longitudinal.push(LongitudinalLabel::parse(parts[1])?);
        lateral.push(LateralLabel::parse(parts[2]).map_err(|_| {
            TaskError::UnknownLabel(parts[2].to_string())
        })?);
    }
    Ok(ActionTimeline { longitudinal, lateral })
}

// ---------------------------------------------------------------------------
// Dataset statistics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatsAxis {
    Lateral,
    Longitudinal,
    Intersection,
}

impl StatsAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            StatsAxis::Lateral => "lateral",
            StatsAxis::Longitudinal => "longitudinal",
            StatsAxis::Intersection => "intersection",
        }
    }
}

/// One row of the stats table: segment count, duration moments (population
/// std), and share of all frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub axis: StatsAxis,
    pub label: String,
    pub count: usize,
    pub mean_frames: f64,
    pub std_frames: f64,
    pub pct_frames: f64,
}

fn duration_stats(durations: &[f64]) -> (f64, f64) {
    mean_and_population_std(durations).unwrap_or((0.0, 0.0))
}

/// Per-label segment counts, duration moments, and frame shares across all
/// videos, for both action axes and the intersection context windows.
pub fn dataset_stats(timelines: &[ActionTimeline], annotations: &[AnnotationSet]) -> Vec<StatsRow> {
    let total_frames: usize = timelines.iter().map(|t| t.len()).sum();
    let total = total_frames.max(1) as f64;
    let mut rows = Vec::new();

    // Lateral axis.
    let mut lat_durations: HashMap<LateralLabel, Vec<f64>> = HashMap::new();
    let mut lat_frames: HashMap<LateralLabel, usize> = HashMap::new();
    for t in timelines {
        for (label, _, len) in run_lengths(&t.lateral) {
            lat_durations.entry(label).or_default().push(len as f64);
            *lat_frames.entry(label).or_default() += len;
        }
    }
    const LATERAL_ORDER: [LateralLabel; 6] = [
        LateralLabel::Straight,
        LateralLabel::TurnRight,
        LateralLabel::LaneChangeRight,
        LateralLabel::LaneChangeLeft,
        LateralLabel::TurnLeft,
        LateralLabel::UTurn,
    ];
    for label in LATERAL_ORDER {
        let durations = lat_durations.get(&label).cloned().unwrap_or_default();
        let (mean, std) = duration_stats(&durations);
        rows.push(StatsRow {
            axis: StatsAxis::Lateral,
            label: label.as_str().to_string(),
            count: durations.len(),
            mean_frames: mean,
            std_frames: std,
            pct_frames: 100.0 * *lat_frames.get(&label).unwrap_or(&0) as f64 / total,
        });
    }

    // Longitudinal axis.
    let mut lon_durations: HashMap<LongitudinalLabel, Vec<f64>> = HashMap::new();
    let mut lon_frames: HashMap<LongitudinalLabel, usize> = HashMap::new();
    for t in timelines {
        for (label, _, len) in run_lengths(&t.longitudinal) {
            lon_durations.entry(label).or_default().push(len as f64);
            *lon_frames.entry(label).or_default() += len;
        }
    }
    for label in LongitudinalLabel::ALL {
        let durations = lon_durations.get(&label).cloned().unwrap_or_default();
        let (mean, std) = duration_stats(&durations);
        rows.push(StatsRow {
            axis: StatsAxis::Longitudinal,
            label: label.as_str().to_string(),
            count: durations.len(),
            mean_frames: mean,
            std_frames: std,
            pct_frames: 100.0 * *lon_frames.get(&label).unwrap_or(&0) as f64 / total,
        });
    }

    // Intersections, via the context windows.
    let mut int_durations: HashMap<IntersectionType, Vec<f64>> = HashMap::new();
    for ann in annotations {
        for w in intersection_windows(ann) {
            int_durations.entry(w.kind).or_default().push(f64::from(w.end - w.start + 1));
        }
    }
    for kind in IntersectionType::ALL {
        let durations = int_durations.get(&kind).cloned().unwrap_or_default();
        let (mean, std) = duration_stats(&durations);
        let frames: f64 = pairwise_sum(&durations);
        rows.push(StatsRow {
            axis: StatsAxis::Intersection,
            label: kind.as_str().to_string(),
            count: durations.len(),
            mean_frames: mean,
            std_frames: std,
            pct_frames: 100.0 * frames / total,
        });
    }

    rows
}

pub fn write_stats(path: &Path, rows: &[StatsRow]) -> Result<(), TaskError> {
    let mut out = String::from("axis,label,count,mean_frames,std_frames,pct_frames\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.2},{:.2},{:.2}\n",
            r.axis.as_str(),
            r.label,
            r.count,
            r.mean_frames,
            r.std_frames,
            r.pct_frames
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}
