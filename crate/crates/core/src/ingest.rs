//! Parsers and writers for the external data the pipeline consumes:
//! eye-tracker event logs, vehicle telemetry, and manual annotation files.
//!
//! File schemas:
//! - fixation CSV: header `etg_frame,timestamp_us,event_class,x,y,gaze_label`
//!   (the `gaze_label` column may be absent; it defaults to `scene`)
//! - telemetry CSV: header `gar_frame,speed_kmh,lat,lon`
//! - annotation JSON: `lateral_segments`, `intersections`, `global_context`,
//!   `offset_frames`, `n_etg`, `n_gar`
//!
//! Parsing is total over these grammars: every rejected input produces a
//! positioned error, never a partial result.

use crate::align::AlignmentSpec;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("annotation JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bad header: expected {expected:?}, found {found:?}")]
    BadHeader { expected: &'static str, found: String },
    #[error("malformed row at line {0}")]
    MalformedRow(u64),
    #[error("unknown enum token {0:?}")]
    UnknownEnum(String),
    #[error("duplicate telemetry frame {0}")]
    DuplicateFrame(u32),
    #[error("negative speed at frame {0}")]
    NegativeSpeed(u32),
    #[error("lateral segments ({0}, {1}) and ({2}, {3}) overlap")]
    OverlappingSegments(u32, u32, u32, u32),
    #[error("lateral segment ({0}, {1}) has start > end")]
    InvalidSegment(u32, u32),
    #[error("yield intersection entering at frame {0} lacks first_fixation_frame")]
    MissingFirstFixation(u32),
    #[error("right-of-way intersection entering at frame {0} carries a first_fixation_frame")]
    SpuriousFirstFixation(u32),
    #[error("intersection entering at frame {entry} is invalid: {detail}")]
    InvalidIntersection { entry: u32, detail: String },
    #[error("alignment fields invalid: {0}")]
    BadAlignment(String),
}

// ---------------------------------------------------------------------------
// Eye-tracker events
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventClass {
    Fixation,
    Saccade,
    Blink,
    Error,
}

impl EventClass {
    pub fn as_str(self) -> &'static str {
        match self {
            EventClass::Fixation => "fixation",
            EventClass::Saccade => "saccade",
            EventClass::Blink => "blink",
            EventClass::Error => "error",
        }
    }

    fn parse(tok: &str) -> Result<Self, IngestError> {
        match tok {
            "fixation" => Ok(EventClass::Fixation),
            "saccade" => Ok(EventClass::Saccade),
            "blink" => Ok(EventClass::Blink),
            "error" => Ok(EventClass::Error),
            other => Err(IngestError::UnknownEnum(other.to_string())),
        }
    }
}

/// Manual label attached to a fixation describing where the gaze was
/// directed. Only meaningful for `event_class = fixation`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GazeLabel {
    Scene,
    InVehicleSpeedometer,
    InVehicleMirror,
    InVehicleOther,
    OutOfView,
    OobError,
}

impl GazeLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            GazeLabel::Scene => "scene",
            GazeLabel::InVehicleSpeedometer => "in_vehicle_speedometer",
            GazeLabel::InVehicleMirror => "in_vehicle_mirror",
            GazeLabel::InVehicleOther => "in_vehicle_other",
            GazeLabel::OutOfView => "out_of_view",
            GazeLabel::OobError => "oob_error",
        }
    }

    fn parse(tok: &str) -> Result<Self, IngestError> {
        match tok {
            // Missing label means an ordinary scene fixation; only a few
            // percent of fixations carry special labels.
            "" | "scene" => Ok(GazeLabel::Scene),
            "in_vehicle_speedometer" => Ok(GazeLabel::InVehicleSpeedometer),
            "in_vehicle_mirror" => Ok(GazeLabel::InVehicleMirror),
            "in_vehicle_other" => Ok(GazeLabel::InVehicleOther),
            "out_of_view" => Ok(GazeLabel::OutOfView),
            "oob_error" => Ok(GazeLabel::OobError),
            other => Err(IngestError::UnknownEnum(other.to_string())),
        }
    }
}

/// One eye-tracker sample in driver-view (ETG) image coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct FixationEvent {
    pub etg_frame: u32,
    pub timestamp_us: i64,
    pub event_class: EventClass,
    pub x: f64,
    pub y: f64,
    pub gaze_label: GazeLabel,
}

const FIXATION_HEADER: &str = "etg_frame,timestamp_us,event_class,x,y,gaze_label";
const FIXATION_HEADER_NO_LABEL: &str = "etg_frame,timestamp_us,event_class,x,y";

pub fn parse_fixation_log(path: &Path) -> Result<Vec<FixationEvent>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_path(path).map_err(csv_to_ingest)?;
    let header = rdr.headers().map_err(csv_to_ingest)?.iter().collect::<Vec<_>>().join(",");
    let has_label = match header.as_str() {
        FIXATION_HEADER => true,
        FIXATION_HEADER_NO_LABEL => false,
        _ => return Err(IngestError::BadHeader { expected: FIXATION_HEADER, found: header }),
    };
    let expected_cols = if has_label { 6 } else { 5 };

    let mut events = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_to_ingest)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != expected_cols {
            return Err(IngestError::MalformedRow(line));
        }
        let etg_frame: u32 = field(&rec, 0, line)?;
        let timestamp_us: i64 = field(&rec, 1, line)?;
        let event_class = EventClass::parse(&rec[2])?;
        let x: f64 = field(&rec, 3, line)?;
        let y: f64 = field(&rec, 4, line)?;
        let gaze_label = if has_label { GazeLabel::parse(&rec[5])? } else { GazeLabel::Scene };
        // Coordinates must be finite for every class except tracker errors.
        if event_class != EventClass::Error && !(x.is_finite() && y.is_finite()) {
            return Err(IngestError::MalformedRow(line));
        }
        events.push(FixationEvent { etg_frame, timestamp_us, event_class, x, y, gaze_label });
    }
    events.sort_by_key(|e| (e.etg_frame, e.timestamp_us));
    Ok(events)
}

pub fn write_fixation_log(path: &Path, events: &[FixationEvent]) -> Result<(), IngestError> {
    let mut out = String::with_capacity(events.len() * 40 + 64);
    out.push_str(FIXATION_HEADER);
    out.push('\n');
    for e in events {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            e.etg_frame,
            e.timestamp_us,
            e.event_class.as_str(),
            e.x,
            e.y,
            e.gaze_label.as_str()
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Telemetry
// ---------------------------------------------------------------------------

/// One vehicle telemetry sample keyed to a rooftop-camera (GAR) frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TelemetrySample {
    pub gar_frame: u32,
    pub speed_kmh: f64,
    pub lat: f64,
    pub lon: f64,
}

const TELEMETRY_HEADER: &str = "gar_frame,speed_kmh,lat,lon";

pub fn parse_telemetry(path: &Path) -> Result<Vec<TelemetrySample>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(csv_to_ingest)?;
    let header = rdr.headers().map_err(csv_to_ingest)?.iter().collect::<Vec<_>>().join(",");
    if header != TELEMETRY_HEADER {
        return Err(IngestError::BadHeader { expected: TELEMETRY_HEADER, found: header });
    }
    let mut samples = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_to_ingest)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 4 {
            return Err(IngestError::MalformedRow(line));
        }
        let gar_frame: u32 = field(&rec, 0, line)?;
        let speed_kmh: f64 = field(&rec, 1, line)?;
        let lat: f64 = field(&rec, 2, line)?;
        let lon: f64 = field(&rec, 3, line)?;
        if speed_kmh < 0.0 || !speed_kmh.is_finite() {
            return Err(IngestError::NegativeSpeed(gar_frame));
        }
        if !(lat.is_finite() && lon.is_finite() && lat.abs() <= 90.0 && lon.abs() <= 180.0) {
            return Err(IngestError::MalformedRow(line));
        }
        samples.push(TelemetrySample { gar_frame, speed_kmh, lat, lon });
    }
    samples.sort_by_key(|s| s.gar_frame);
    for pair in samples.windows(2) {
        if pair[0].gar_frame == pair[1].gar_frame {
            return Err(IngestError::DuplicateFrame(pair[0].gar_frame));
        }
    }
    Ok(samples)
}

pub fn write_telemetry(path: &Path, samples: &[TelemetrySample]) -> Result<(), IngestError> {
    let mut out = String::with_capacity(samples.len() * 32 + 32);
    out.push_str(TELEMETRY_HEADER);
    out.push('\n');
    for s in samples {
        out.push_str(&format!("{},{},{},{}\n", s.gar_frame, s.speed_kmh, s.lat, s.lon));
    }
    std::fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Annotations
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LateralLabel {
    Straight,
    TurnLeft,
    TurnRight,
    LaneChangeLeft,
    LaneChangeRight,
    UTurn,
}

impl LateralLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            LateralLabel::Straight => "straight",
            LateralLabel::TurnLeft => "turn_left",
            LateralLabel::TurnRight => "turn_right",
            LateralLabel::LaneChangeLeft => "lane_change_left",
            LateralLabel::LaneChangeRight => "lane_change_right",
            LateralLabel::UTurn => "u_turn",
        }
    }

    pub fn parse(tok: &str) -> Result<Self, IngestError> {
        match tok {
            "straight" => Ok(LateralLabel::Straight),
            "turn_left" => Ok(LateralLabel::TurnLeft),
            "turn_right" => Ok(LateralLabel::TurnRight),
            "lane_change_left" => Ok(LateralLabel::LaneChangeLeft),
            "lane_change_right" => Ok(LateralLabel::LaneChangeRight),
            "u_turn" => Ok(LateralLabel::UTurn),
            other => Err(IngestError::UnknownEnum(other.to_string())),
        }
    }
}

impl fmt::Display for LateralLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntersectionType {
    Roundabout,
    Merge,
    Signalized,
    Unsignalized,
}

impl IntersectionType {
    pub fn as_str(self) -> &'static str {
        match self {
            IntersectionType::Roundabout => "roundabout",
            IntersectionType::Merge => "merge",
            IntersectionType::Signalized => "signalized",
            IntersectionType::Unsignalized => "unsignalized",
        }
    }

    /// Human-readable name used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            IntersectionType::Roundabout => "Roundabout",
            IntersectionType::Merge => "Merge",
            IntersectionType::Signalized => "Signalized",
            IntersectionType::Unsignalized => "Unsignalized",
        }
    }

    pub const ALL: [IntersectionType; 4] = [
        IntersectionType::Roundabout,
        IntersectionType::Merge,
        IntersectionType::Signalized,
        IntersectionType::Unsignalized,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Priority {
    RightOfWay,
    Yield,
}

impl Priority {
    pub fn as_str(self) -> &'static str {
        match self {
            Priority::RightOfWay => "right_of_way",
            Priority::Yield => "yield",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Priority::RightOfWay => "RoW",
            Priority::Yield => "Yield",
        }
    }

    pub const ALL: [Priority; 2] = [Priority::RightOfWay, Priority::Yield];
}

/// Manually annotated lateral maneuver over an inclusive GAR frame range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "(u32, u32, LateralLabel)", into = "(u32, u32, LateralLabel)")]
pub struct LateralSegment {
    pub start_frame: u32,
    pub end_frame: u32,
    pub label: LateralLabel,
}

impl From<(u32, u32, LateralLabel)> for LateralSegment {
    fn from((start_frame, end_frame, label): (u32, u32, LateralLabel)) -> Self {
        Self { start_frame, end_frame, label }
    }
}

impl From<LateralSegment> for (u32, u32, LateralLabel) {
    fn from(s: LateralSegment) -> Self {
        (s.start_frame, s.end_frame, s.label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Intersection {
    pub entry_frame: u32,
    pub exit_frame: u32,
    #[serde(rename = "type")]
    pub kind: IntersectionType,
    pub priority: Priority,
    /// Frame of the driver's first fixation on the intersecting road.
    /// Present exactly when `priority = yield`; may precede `entry_frame`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_fixation_frame: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weather {
    Sunny,
    Cloudy,
    Rainy,
}

impl Weather {
    pub fn as_str(self) -> &'static str {
        match self {
            Weather::Sunny => "sunny",
            Weather::Cloudy => "cloudy",
            Weather::Rainy => "rainy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeOfDay {
    Morning,
    Evening,
    Night,
}

impl TimeOfDay {
    pub fn as_str(self) -> &'static str {
        match self {
            TimeOfDay::Morning => "morning",
            TimeOfDay::Evening => "evening",
            TimeOfDay::Night => "night",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    Highway,
    Urban,
    Suburban,
}

impl Location {
    pub fn as_str(self) -> &'static str {
        match self {
            Location::Highway => "highway",
            Location::Urban => "urban",
            Location::Suburban => "suburban",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalContext {
    pub weather: Weather,
    pub time_of_day: TimeOfDay,
    pub location: Location,
}

fn default_n_etg() -> u32 {
    9000
}

fn default_n_gar() -> u32 {
    7500
}

/// Full manual-annotation payload for one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub lateral_segments: Vec<LateralSegment>,
    pub intersections: Vec<Intersection>,
    pub global_context: GlobalContext,
    #[serde(default)]
    pub offset_frames: i32,
    #[serde(default = "default_n_etg")]
    pub n_etg: u32,
    #[serde(default = "default_n_gar")]
    pub n_gar: u32,
}

impl AnnotationSet {
    /// Stream-alignment parameters carried by this annotation file.
    pub fn alignment_spec(&self) -> Result<AlignmentSpec, IngestError> {
        AlignmentSpec::new(self.n_etg, self.n_gar, self.offset_frames)
            .map_err(|e| IngestError::BadAlignment(e.to_string()))
    }

    fn validate(mut self) -> Result<Self, IngestError> {
        self.lateral_segments.sort_by_key(|s| (s.start_frame, s.end_frame));
        for s in &self.lateral_segments {
            if s.start_frame > s.end_frame {
                return Err(IngestError::InvalidSegment(s.start_frame, s.end_frame));
            }
        }
        for pair in self.lateral_segments.windows(2) {
            if pair[1].start_frame <= pair[0].end_frame {
                return Err(IngestError::OverlappingSegments(
                    pair[0].start_frame,
                    pair[0].end_frame,
                    pair[1].start_frame,
                    pair[1].end_frame,
                ));
            }
        }
        for i in &self.intersections {
            if i.entry_frame > i.exit_frame {
                return Err(IngestError::InvalidIntersection {
                    entry: i.entry_frame,
                    detail: "entry_frame > exit_frame".into(),
                });
            }
            match (i.priority, i.first_fixation_frame) {
                (Priority::Yield, None) => {
                    return Err(IngestError::MissingFirstFixation(i.entry_frame))
                }
                (Priority::RightOfWay, Some(_)) => {
                    return Err(IngestError::SpuriousFirstFixation(i.entry_frame))
                }
                (Priority::Yield, Some(f)) if f > i.exit_frame => {
                    return Err(IngestError::InvalidIntersection {
                        entry: i.entry_frame,
                        detail: "first_fixation_frame > exit_frame".into(),
                    })
                }
                _ => {}
            }
        }
        self.alignment_spec()?;
        Ok(self)
    }
}

pub fn parse_annotations(path: &Path) -> Result<AnnotationSet, IngestError> {
    let text = std::fs::read_to_string(path)?;
    let set: AnnotationSet = serde_json::from_str(&text)?;
    set.validate()
}

pub fn write_annotations(path: &Path, ann: &AnnotationSet) -> Result<(), IngestError> {
    let mut text = serde_json::to_string_pretty(ann)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// helpers
// ---------------------------------------------------------------------------

fn field<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    idx: usize,
    line: u64,
) -> Result<T, IngestError> {
    rec[idx].trim().parse().map_err(|_| IngestError::MalformedRow(line))
}

fn csv_to_ingest(err: csv::Error) -> IngestError {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    if err.is_io_error() {
        match err.into_kind() {
            csv::ErrorKind::Io(io) => IngestError::Io(io),
            _ => IngestError::MalformedRow(line),
        }
    } else {
        IngestError::MalformedRow(line)
    }
}
