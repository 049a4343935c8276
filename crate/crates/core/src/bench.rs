//! Evaluation harness: score a directory of predicted saliency maps against
//! ground truth, apply the exclusion rules (blank ground truth, U-turn
//! frames, missing predictions), and aggregate per metric overall, per
//! action class, and per intersection context.
//!
//! Directory layout: rasters are keyed by a six-digit frame stem —
//! `NNNNNN.pfm` for ground truth and predictions, `NNNNNN.pbm` for fixation
//! maps. Frame scoring parallelizes; the reduction is a fixed-order pairwise
//! tree, so reports are byte-identical for any worker count.

use crate::ingest::{IntersectionType, LateralLabel, Priority};
use crate::metrics::{cc, kld, nss, sim, MetricConfig, MetricError};
use crate::numeric::pairwise_mean;
use crate::raster::{FixationMap, RasterError, SaliencyMap};
use crate::tasklab::{ActionTimeline, IntersectionWindow, LongitudinalLabel};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("raster error: {0}")]
    Raster(#[from] RasterError),
    #[error("metric error at frame {frame}: {source}")]
    Metric { frame: u32, source: MetricError },
    #[error("prediction dimensions differ from ground truth at frame {0}")]
    DimensionMismatch(u32),
    #[error("frame {0} not covered by the action timeline")]
    UnlabeledFrame(u32),
    #[error("fixation map missing for scored frame {0}")]
    MissingFixationMap(u32),
    #[error("run JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("empty evaluation run")]
    EmptyRun,
}

/// Action subset of a frame, by precedence:
/// stopped > lat+lon > lat > acc/dec > none.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionTag {
    None,
    Acc,
    Dec,
    Lat,
    LatLon,
    Stop,
}

impl ActionTag {
    pub fn display_name(self) -> &'static str {
        match self {
            ActionTag::None => "None",
            ActionTag::Acc => "Acc",
            ActionTag::Dec => "Dec",
            ActionTag::Lat => "Lat",
            ActionTag::LatLon => "Lat/Lon",
            ActionTag::Stop => "Stop",
        }
    }

    pub const ALL: [ActionTag; 6] = [
        ActionTag::None,
        ActionTag::Acc,
        ActionTag::Dec,
        ActionTag::Lat,
        ActionTag::LatLon,
        ActionTag::Stop,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalExclusionReason {
    BlankGt,
    UTurn,
    MissingPrediction,
}

impl EvalExclusionReason {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalExclusionReason::BlankGt => "blank_gt",
            EvalExclusionReason::UTurn => "u_turn",
            EvalExclusionReason::MissingPrediction => "missing_prediction",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameScore {
    pub frame: u32,
    pub kld: f64,
    pub cc: f64,
    pub nss: f64,
    pub sim: f64,
    pub action: ActionTag,
    pub context: Option<(IntersectionType, Priority)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalExclusion {
    pub frame: u32,
    pub reason: EvalExclusionReason,
}

/// Outcome of one evaluation pass: every ground-truth key frame is either
/// scored or excluded with a reason.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    pub scored: Vec<FrameScore>,
    pub excluded: Vec<EvalExclusion>,
}

impl EvalRun {
    pub fn total_frames(&self) -> usize {
        self.scored.len() + self.excluded.len()
    }
}

pub fn write_run_json(path: &Path, run: &EvalRun) -> Result<(), BenchError> {
    let mut text = serde_json::to_string_pretty(run)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_run_json(path: &Path) -> Result<EvalRun, BenchError> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Action and context tags for one frame.
///
/// The action tag follows the precedence stopped > lat+lon > lat >
/// acc/dec > none, where "lat" means any non-straight lateral label and
/// "lon" means accelerate or decelerate. The context tag is independent and
/// present when the frame lies inside an intersection window (the first
/// covering window in input order).
pub fn assign_subsets(
    frame: u32,
    timeline: &ActionTimeline,
    windows: &[IntersectionWindow],
) -> Result<(ActionTag, Option<(IntersectionType, Priority)>), BenchError> {
    let idx = frame as usize;
    if idx >= timeline.len() {
        return Err(BenchError::UnlabeledFrame(frame));
    }
    let lateral = timeline.lateral[idx];
    let longitudinal = timeline.longitudinal[idx];
    let lat = lateral != LateralLabel::Straight;
    let lon = matches!(longitudinal, LongitudinalLabel::Accelerate | LongitudinalLabel::Decelerate);
    let action = if longitudinal == LongitudinalLabel::Stopped {
        ActionTag::Stop
    } else if lat && lon {
        ActionTag::LatLon
    } else if lat {
        ActionTag::Lat
    } else if longitudinal == LongitudinalLabel::Accelerate {
        ActionTag::Acc
    } else if longitudinal == LongitudinalLabel::Decelerate {
        ActionTag::Dec
    } else {
        ActionTag::None
    };
    let context = windows
        .iter()
        .find(|w| w.start <= frame && frame <= w.end)
        .map(|w| (w.kind, w.priority));
    Ok((action, context))
}

/// List the frame indices present in a directory as `NNNNNN.<ext>` files,
/// sorted ascending.
pub fn list_frames(dir: &Path, ext: &str) -> Result<Vec<u32>, BenchError> {
    let mut frames = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if let Some(stem) = name.strip_suffix(&format!(".{ext}")) {
            if stem.len() == 6 {
                if let Ok(frame) = stem.parse::<u32>() {
                    frames.push(frame);
                }
            }
        }
    }
    frames.sort_unstable();
    Ok(frames)
}

pub fn frame_file(dir: &Path, frame: u32, ext: &str) -> std::path::PathBuf {
    dir.join(format!("{frame:06}.{ext}"))
}

/// Score every ground-truth key frame in `gt_dir` against `pred_dir`.
///
/// Exclusion precedence per frame: blank ground truth, then U-turn, then
/// missing prediction. A prediction with mismatched dimensions aborts the
/// run — silent resampling would distort the metrics. Deterministic for any
/// worker count.
pub fn evaluate(
    gt_dir: &Path,
    fix_dir: &Path,
    pred_dir: &Path,
    timeline: &ActionTimeline,
    windows: &[IntersectionWindow],
    metric_cfg: &MetricConfig,
) -> Result<EvalRun, BenchError> {
    let frames = list_frames(gt_dir, "pfm")?;

    enum Outcome {
        Scored(FrameScore),
        Excluded(EvalExclusion),
    }

    let outcomes: Vec<Outcome> = frames
        .par_iter()
        .map(|&frame| -> Result<Outcome, BenchError> {
            let gt = SaliencyMap::read_pfm(&frame_file(gt_dir, frame, "pfm"))?;
            if gt.is_blank() {
                return Ok(Outcome::Excluded(EvalExclusion {
                    frame,
                    reason: EvalExclusionReason::BlankGt,
                }));
            }
            let (action_probe, _) = assign_subsets(frame, timeline, windows)?;
            let idx = frame as usize;
            if timeline.lateral[idx] == LateralLabel::UTurn {
                return Ok(Outcome::Excluded(EvalExclusion {
                    frame,
                    reason: EvalExclusionReason::UTurn,
                }));
            }
            let pred_path = frame_file(pred_dir, frame, "pfm");
            if !pred_path.exists() {
                return Ok(Outcome::Excluded(EvalExclusion {
                    frame,
                    reason: EvalExclusionReason::MissingPrediction,
                }));
            }
            let pred = SaliencyMap::read_pfm(&pred_path)?;
            if !gt.same_dims(&pred) {
                return Err(BenchError::DimensionMismatch(frame));
            }
            let fix_path = frame_file(fix_dir, frame, "pbm");
            if !fix_path.exists() {
                return Err(BenchError::MissingFixationMap(frame));
            }
            let fix = FixationMap::read_pbm(&fix_path)?;

            let wrap = |source: MetricError| BenchError::Metric { frame, source };
            let score = FrameScore {
                frame,
                kld: kld(&gt, &pred, metric_cfg).map_err(wrap)?,
                cc: cc(&gt, &pred).map_err(wrap)?,
                nss: nss(&fix, &pred).map_err(wrap)?,
                sim: sim(&gt, &pred).map_err(wrap)?,
                action: action_probe,
                context: assign_subsets(frame, timeline, windows)?.1,
            };
            Ok(Outcome::Scored(score))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut run = EvalRun::default();
    for o in outcomes {
        match o {
            Outcome::Scored(s) => run.scored.push(s),
            Outcome::Excluded(e) => run.excluded.push(e),
        }
    }
    Ok(run)
}

/// Per-cell means and the number of frames behind them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub count: usize,
    pub kld: f64,
    pub cc: f64,
    pub nss: f64,
    pub sim: f64,
}

/// Aggregated report: overall, per action class, per intersection context.
/// Cells with no frames are absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportTables {
    pub overall: Option<CellStats>,
    pub actions: BTreeMap<ActionTag, CellStats>,
    pub contexts: BTreeMap<(IntersectionType, Priority), CellStats>,
}

fn cell_from_scores(scores: &[&FrameScore]) -> Option<CellStats> {
    if scores.is_empty() {
        return None;
    }
    let col = |f: fn(&FrameScore) -> f64| -> f64 {
        let values: Vec<f64> = scores.iter().map(|s| f(s)).collect();
        pairwise_mean(&values).expect("non-empty cell")
    };
    Some(CellStats {
        count: scores.len(),
        kld: col(|s| s.kld),
        cc: col(|s| s.cc),
        nss: col(|s| s.nss),
        sim: col(|s| s.sim),
    })
}

/// Reduce a run to report tables. Frames enter each cell in frame order and
/// are reduced with the fixed pairwise tree, so the result is independent of
/// how scoring was partitioned.
pub fn aggregate(run: &EvalRun) -> Result<ReportTables, BenchError> {
    if run.total_frames() == 0 {
        return Err(BenchError::EmptyRun);
    }
    let mut scored: Vec<&FrameScore> = run.scored.iter().collect();
    scored.sort_by_key(|s| s.frame);

    let mut tables = ReportTables { overall: cell_from_scores(&scored), ..Default::default() };
    for tag in ActionTag::ALL {
        let cell: Vec<&FrameScore> =
            scored.iter().filter(|s| s.action == tag).cloned().collect();
        if let Some(stats) = cell_from_scores(&cell) {
            tables.actions.insert(tag, stats);
        }
    }
    for kind in IntersectionType::ALL {
        for priority in Priority::ALL {
            let cell: Vec<&FrameScore> = scored
                .iter()
                .filter(|s| s.context == Some((kind, priority)))
                .cloned()
                .collect();
            if let Some(stats) = cell_from_scores(&cell) {
                tables.contexts.insert((kind, priority), stats);
            }
        }
    }
    Ok(tables)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

pub const METRIC_NAMES: [&str; 4] = ["KLD", "CC", "NSS", "SIM"];

fn metric_value(stats: &CellStats, metric: &str) -> f64 {
    match metric {
        "KLD" => stats.kld,
        "CC" => stats.cc,
        "NSS" => stats.nss,
        "SIM" => stats.sim,
        _ => unreachable!("unknown metric {metric}"),
    }
}

fn fmt4(v: f64) -> String {
    format!("{v:.4}")
}

fn subset_rows(tables: &ReportTables) -> Vec<(String, Option<&CellStats>)> {
    let mut rows: Vec<(String, Option<&CellStats>)> =
        vec![("All".to_string(), tables.overall.as_ref())];
    for tag in ActionTag::ALL {
        rows.push((tag.display_name().to_string(), tables.actions.get(&tag)));
    }
    for kind in IntersectionType::ALL {
        for priority in Priority::ALL {
            rows.push((
                format!("{} {}", kind.display_name(), priority.display_name()),
                tables.contexts.get(&(kind, priority)),
            ));
        }
    }
    rows
}

/// CSV report: one row per (subset, metric); absent cells are omitted.
pub fn render_csv(tables: &ReportTables) -> String {
    let mut out = String::from("subset,metric,count,value\n");
    for (name, cell) in subset_rows(tables) {
        if let Some(stats) = cell {
            for metric in METRIC_NAMES {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    name,
                    metric,
                    stats.count,
                    fmt4(metric_value(stats, metric))
                ));
            }
        }
    }
    out
}

/// Markdown report: subsets as rows, metrics as columns, absent cells as `-`.
pub fn render_markdown(tables: &ReportTables) -> String {
    let mut out = String::new();
    let header = "| Subset | Frames | KLD | CC | NSS | SIM |\n|---|---|---|---|---|---|\n";

    let all_rows = subset_rows(tables);
    let sections: [(&str, &[(String, Option<&CellStats>)]); 3] = [
        ("Overall", &all_rows[0..1]),
        ("Actions", &all_rows[1..7]),
        ("Context", &all_rows[7..]),
    ];
    for (title, rows) in sections {
        out.push_str(&format!("### {title}\n\n"));
        out.push_str(header);
        for (name, cell) in rows {
            match cell {
                Some(stats) => {
                    out.push_str(&format!(
                        "| {} | {} | {} | {} | {} | {} |\n",
                        name,
                        stats.count,
                        fmt4(stats.kld),
                        fmt4(stats.cc),
                        fmt4(stats.nss),
                        fmt4(stats.sim)
                    ));
                }
                None => {
                    out.push_str(&format!("| {name} | - | - | - | - | - |\n"));
                }
            }
        }
        out.push('\n');
    }
    out
}

pub fn emit_report(
    tables: &ReportTables,
    format: ReportFormat,
    path: &Path,
) -> Result<(), BenchError> {
    let text = match format {
        ReportFormat::Csv => render_csv(tables),
        ReportFormat::Markdown => render_markdown(tables),
    };
    std::fs::write(path, text)?;
    Ok(())
}
