//! Command-line driver for the gaze ground-truth pipeline and the saliency
//! benchmark harness.
//!
//! Exit codes: 0 on success, 1 on validation errors (bad data, contract
//! violations), 2 on I/O errors.

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use gazetruth::align::etg_to_gar;
use gazetruth::bench;
use gazetruth::config::PipelineConfig;
use gazetruth::flowprop::DirFlowProvider;
use gazetruth::geometry::{
    estimate_homography_ransac, project_point, read_correspondences, read_homography,
    write_homography, Homography, PixelPoint,
};
use gazetruth::heatmap::{
    self, legacy_aggregate, new_mode_ground_truth, partition_events, GarChainProvider,
    IdentityChain, write_exclusion_log,
};
use gazetruth::ingest::{parse_annotations, parse_fixation_log, parse_telemetry};
use gazetruth::metrics::KldMode;
use gazetruth::raster::SaliencyMap;
use gazetruth::tasklab::{
    self, build_context_record, build_timeline, intersection_windows, read_timeline, Route,
    SampleWeight, SAMPLE_FRAMES, SAMPLE_STRIDE,
};
use rayon::prelude::*;
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "gazetruth", version, about = "Drivers'-gaze ground-truth pipeline and saliency benchmark")]
struct Cli {
    /// JSON config file overriding the pipeline defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads (default: all available cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Seed override for randomized stages (RANSAC sampling).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Legacy modes: homography-chain ground-truth aggregation in `gt`,
    /// the historical KLD regime in `eval`.
    #[arg(long, global = true)]
    legacy: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Emit the ETG -> GAR frame mapping for one video as CSV.
    Align {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate per-frame homographies from correspondence files
    /// (`corr_NNNNNN.csv`) with RANSAC; writes `homography_NNNNNN.txt`.
    GazeMap {
        #[arg(long)]
        corr_dir: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Project and trace every retained fixation to its key frames; writes
    /// a point list CSV and the exclusion log.
    Propagate {
        #[arg(long)]
        fixations: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        homography_dir: PathBuf,
        #[arg(long)]
        flow_dir: PathBuf,
        #[arg(long)]
        width: u32,
        #[arg(long)]
        height: u32,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        exclusions: Option<PathBuf>,
    },
    /// Build per-key-frame ground truth: saliency PFMs, fixation PBMs, and
    /// the exclusion log (saliency only with --legacy).
    Gt {
        #[arg(long)]
        fixations: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        homography_dir: PathBuf,
        #[arg(long)]
        flow_dir: PathBuf,
        #[arg(long)]
        width: u32,
        #[arg(long)]
        height: u32,
        #[arg(long)]
        out_dir: PathBuf,
        /// GAR -> GAR chain homographies (`chain_NNNNNN.txt`, frame k to
        /// k+1) for legacy aggregation; identity chain when absent.
        #[arg(long)]
        chain_dir: Option<PathBuf>,
    },
    /// Derive the per-frame action timeline from telemetry and annotations.
    LabelActions {
        #[arg(long)]
        telemetry: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Assemble per-sample task/context records as JSON lines.
    Context {
        #[arg(long)]
        telemetry: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        timeline: PathBuf,
        #[arg(long)]
        route: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-sample weights from ground-truth deviation against the video
    /// mean map.
    Weights {
        #[arg(long)]
        gt_dir: PathBuf,
        #[arg(long)]
        video_id: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dataset statistics over one or more labeled videos.
    Stats {
        #[arg(long = "timeline", required = true)]
        timelines: Vec<PathBuf>,
        #[arg(long = "annotations", required = true)]
        annotations: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a prediction directory against ground truth.
    Eval {
        #[arg(long)]
        gt_dir: PathBuf,
        #[arg(long)]
        fix_dir: PathBuf,
        #[arg(long)]
        pred_dir: PathBuf,
        #[arg(long)]
        timeline: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render an evaluation run as a CSV or markdown table set.
    Report {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_enum)]
        format: ReportFormatArg,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReportFormatArg {
    Csv,
    Markdown,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify(&err))
        }
    }
}

/// 2 for I/O failures anywhere in the chain, 1 for everything else
/// (validation and contract errors).
fn classify(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 2;
        }
    }
    1
}

fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .context("configuring worker pool")?;
    }
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.ransac.seed = seed;
    }
    if cli.legacy {
        cfg.metrics.kld_mode = KldMode::LegacyDreyeve;
    }

    match cli.command {
        Command::Align { annotations, out } => cmd_align(&cfg, &annotations, &out),
        Command::GazeMap { corr_dir, out_dir } => cmd_gaze_map(&cfg, &corr_dir, &out_dir),
        Command::Propagate {
            fixations,
            annotations,
            homography_dir,
            flow_dir,
            width,
            height,
            out,
            exclusions,
        } => cmd_propagate(
            &cfg,
            &fixations,
            &annotations,
            &homography_dir,
            &flow_dir,
            width,
            height,
            &out,
            exclusions.as_deref(),
        ),
        Command::Gt {
            fixations,
            annotations,
            homography_dir,
            flow_dir,
            width,
            height,
            out_dir,
            chain_dir,
        } => cmd_gt(
            &cfg,
            cli.legacy,
            &fixations,
            &annotations,
            &homography_dir,
            &flow_dir,
            width,
            height,
            &out_dir,
            chain_dir.as_deref(),
        ),
        Command::LabelActions { telemetry, annotations, out } => {
            cmd_label_actions(&cfg, &telemetry, &annotations, &out)
        }
        Command::Context { telemetry, annotations, timeline, route, out } => {
            cmd_context(&cfg, &telemetry, &annotations, &timeline, route.as_deref(), &out)
        }
        Command::Weights { gt_dir, video_id, out } => {
            cmd_weights(&cfg, &gt_dir, &video_id, &out)
        }
        Command::Stats { timelines, annotations, out } => {
            cmd_stats(&timelines, &annotations, &out)
        }
        Command::Eval { gt_dir, fix_dir, pred_dir, timeline, annotations, out } => {
            cmd_eval(&cfg, &gt_dir, &fix_dir, &pred_dir, &timeline, &annotations, &out)
        }
        Command::Report { run, format, out } => cmd_report(&run, format, &out),
    }
}

fn cmd_align(_cfg: &PipelineConfig, annotations: &Path, out: &Path) -> Result<()> {
    let ann = parse_annotations(annotations)?;
    let spec = ann.alignment_spec()?;
    let mut text = String::from("etg_frame,gar_frame\n");
    for e in 0..spec.n_etg {
        text.push_str(&format!("{},{}\n", e, etg_to_gar(&spec, e)?));
    }
    std::fs::write(out, text)?;
    Ok(())
}

fn corr_frame(name: &str) -> Option<u32> {
    name.strip_prefix("corr_")?.strip_suffix(".csv")?.parse().ok()
}

fn cmd_gaze_map(cfg: &PipelineConfig, corr_dir: &Path, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let mut frames = Vec::new();
    for entry in std::fs::read_dir(corr_dir)? {
        let entry = entry?;
        if let Some(frame) = corr_frame(&entry.file_name().to_string_lossy()) {
            frames.push(frame);
        }
    }
    frames.sort_unstable();
    if frames.is_empty() {
        bail!("no correspondence files (corr_NNNNNN.csv) in {}", corr_dir.display());
    }
    frames.par_iter().try_for_each(|&frame| -> Result<()> {
        let corrs = read_correspondences(&corr_dir.join(format!("corr_{frame:06}.csv")))?;
        let (h, _inliers) = estimate_homography_ransac(&corrs, &cfg.ransac)
            .with_context(|| format!("estimating homography for frame {frame}"))?;
        write_homography(&out_dir.join(format!("homography_{frame:06}.txt")), &h)?;
        Ok(())
    })?;
    Ok(())
}

fn load_homographies(dir: &Path) -> Result<HashMap<u32, Homography>> {
    let mut map = HashMap::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name();
        let name = name.to_string_lossy().to_string();
        if let Some(frame) =
            name.strip_prefix("homography_").and_then(|s| s.strip_suffix(".txt"))
        {
            if let Ok(frame) = frame.parse::<u32>() {
                map.insert(frame, read_homography(&entry.path())?);
            }
        }
    }
    if map.is_empty() {
        bail!("no homography files (homography_NNNNNN.txt) in {}", dir.display());
    }
    Ok(map)
}

#[allow(clippy::too_many_arguments)]
fn cmd_propagate(
    cfg: &PipelineConfig,
    fixations: &Path,
    annotations: &Path,
    homography_dir: &Path,
    flow_dir: &Path,
    width: u32,
    height: u32,
    out: &Path,
    exclusions: Option<&Path>,
) -> Result<()> {
    let events = parse_fixation_log(fixations)?;
    let ann = parse_annotations(annotations)?;
    let spec = ann.alignment_spec()?;
    let homographies = load_homographies(homography_dir)?;
    let flows = DirFlowProvider::new(flow_dir);

    let per_key: Vec<(u32, heatmap::WindowCollection)> = (0..spec.n_gar)
        .into_par_iter()
        .map(|key| -> Result<(u32, heatmap::WindowCollection)> {
            let col = heatmap::collect_window(
                key,
                &events,
                &spec,
                &homographies,
                &flows,
                &cfg.heatmap,
                width,
                height,
            )?;
            Ok((key, col))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut text = String::from("key_frame,etg_frame,timestamp_us,x,y,provenance\n");
    for (key, col) in &per_key {
        for p in &col.points {
            text.push_str(&format!(
                "{},{},{},{},{},{}\n",
                key,
                p.etg_frame,
                p.timestamp_us,
                p.point.x,
                p.point.y,
                p.provenance.as_str()
            ));
        }
    }
    std::fs::write(out, text)?;

    let (_, excluded) = partition_events(&events);
    let excl_path = exclusions
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out.with_file_name("exclusions.csv"));
    write_exclusion_log(&excl_path, &excluded)?;
    Ok(())
}

/// Load a legacy GAR chain: `chain_NNNNNN.txt` maps frame k to k+1; inverse
/// steps are derived.
fn load_chain(dir: &Path) -> Result<HashMap<(u32, u32), Homography>> {
    let mut map = HashMap::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name();
        let name = name.to_string_lossy().to_string();
        if let Some(frame) = name.strip_prefix("chain_").and_then(|s| s.strip_suffix(".txt")) {
            if let Ok(k) = frame.parse::<u32>() {
                let h = read_homography(&entry.path())?;
                map.insert((k + 1, k), h.inverse()?);
                map.insert((k, k + 1), h);
            }
        }
    }
    if map.is_empty() {
        bail!("no chain files (chain_NNNNNN.txt) in {}", dir.display());
    }
    Ok(map)
}

#[allow(clippy::too_many_arguments)]
fn cmd_gt(
    cfg: &PipelineConfig,
    legacy: bool,
    fixations: &Path,
    annotations: &Path,
    homography_dir: &Path,
    flow_dir: &Path,
    width: u32,
    height: u32,
    out_dir: &Path,
    chain_dir: Option<&Path>,
) -> Result<()> {
    let events = parse_fixation_log(fixations)?;
    let ann = parse_annotations(annotations)?;
    let spec = ann.alignment_spec()?;
    let homographies = load_homographies(homography_dir)?;
    let gt_dir = out_dir.join("gt");
    std::fs::create_dir_all(&gt_dir)?;

    if legacy {
        // Everything with finite coordinates enters the legacy aggregation,
        // saccades and blinks included.
        let mut frame_points: HashMap<u32, Vec<PixelPoint>> = HashMap::new();
        for e in &events {
            if !(e.x.is_finite() && e.y.is_finite()) {
                continue;
            }
            let g = etg_to_gar(&spec, e.etg_frame)?;
            let h = homographies.get(&e.etg_frame).copied().ok_or_else(|| {
                anyhow::anyhow!("no homography for ETG frame {}", e.etg_frame)
            })?;
            frame_points.entry(g).or_default().push(project_point(&h, &PixelPoint::new(e.x, e.y))?);
        }
        let chain: Box<dyn GarChainProvider> = match chain_dir {
            Some(dir) => Box::new(load_chain(dir)?),
            None => Box::new(IdentityChain),
        };
        (0..spec.n_gar).into_par_iter().try_for_each(|key| -> Result<()> {
            let lo = key.saturating_sub(cfg.heatmap.window_half);
            let hi = (key + cfg.heatmap.window_half).min(spec.n_gar - 1);
            let window: Vec<(u32, Vec<PixelPoint>)> = (lo..=hi)
                .filter_map(|f| frame_points.get(&f).map(|pts| (f, pts.clone())))
                .collect();
            let sal =
                legacy_aggregate(&window, key, chain.as_ref(), &cfg.heatmap, width, height)?;
            sal.write_pfm(&bench::frame_file(&gt_dir, key, "pfm"))?;
            Ok(())
        })?;
        return Ok(());
    }

    let fix_dir = out_dir.join("fix");
    std::fs::create_dir_all(&fix_dir)?;
    let flows = DirFlowProvider::new(flow_dir);
    (0..spec.n_gar).into_par_iter().try_for_each(|key| -> Result<()> {
        let truth = new_mode_ground_truth(
            key,
            &events,
            &spec,
            &homographies,
            &flows,
            &cfg.heatmap,
            width,
            height,
        )?;
        truth.saliency.write_pfm(&bench::frame_file(&gt_dir, key, "pfm"))?;
        truth.fixations.write_pbm(&bench::frame_file(&fix_dir, key, "pbm"))?;
        Ok(())
    })?;
    let (_, excluded) = partition_events(&events);
    write_exclusion_log(&out_dir.join("exclusions.csv"), &excluded)?;
    Ok(())
}

fn cmd_label_actions(
    cfg: &PipelineConfig,
    telemetry: &Path,
    annotations: &Path,
    out: &Path,
) -> Result<()> {
    let samples = parse_telemetry(telemetry)?;
    let ann = parse_annotations(annotations)?;
    let timeline = build_timeline(&samples, &ann, &cfg.actions)?;
    tasklab::write_timeline(out, &timeline)?;
    Ok(())
}

fn cmd_context(
    cfg: &PipelineConfig,
    telemetry: &Path,
    annotations: &Path,
    timeline: &Path,
    route: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let samples = parse_telemetry(telemetry)?;
    let ann = parse_annotations(annotations)?;
    let timeline = read_timeline(timeline)?;
    let route = match route {
        Some(p) => Route::read_csv(p)?,
        None => Route::default(),
    };
    let speed = tasklab::smooth_speed(&samples, &cfg.actions)?;
    let accel = tasklab::compute_acceleration(&speed, cfg.actions.fps)?;
    let n = timeline.len().min(speed.len()) as u32;
    let mut records = Vec::new();
    let mut start = 0u32;
    while start + SAMPLE_FRAMES <= n {
        records.push(build_context_record(
            start,
            &timeline,
            &speed,
            &accel,
            &samples,
            &ann,
            &route,
            &ann.global_context,
        )?);
        start += SAMPLE_STRIDE;
    }
    tasklab::write_context_records(out, &records)?;
    Ok(())
}

fn cmd_weights(cfg: &PipelineConfig, gt_dir: &Path, video_id: &str, out: &Path) -> Result<()> {
    let frames = bench::list_frames(gt_dir, "pfm")?;
    if frames.is_empty() {
        bail!("no ground-truth PFMs in {}", gt_dir.display());
    }
    let maps: HashMap<u32, SaliencyMap> = frames
        .par_iter()
        .map(|&f| Ok((f, SaliencyMap::read_pfm(&bench::frame_file(gt_dir, f, "pfm"))?)))
        .collect::<Result<_>>()?;
    let all: Vec<SaliencyMap> = frames.iter().map(|f| maps[f].clone()).collect();
    let mean = tasklab::video_mean_map(&all)
        .ok_or_else(|| anyhow::anyhow!("every ground-truth map in the video is blank"))?;
    let metric_cfg = cfg.metrics.resolve()?;

    let last = *frames.last().unwrap();
    let mut weights = Vec::new();
    let mut start = 0u32;
    while start + SAMPLE_FRAMES <= last + 1 {
        let sample: Vec<SaliencyMap> = (start..start + SAMPLE_FRAMES)
            .filter_map(|f| maps.get(&f).cloned())
            .collect();
        let weight = tasklab::sample_weight(&sample, &mean, &metric_cfg)?;
        weights.push(SampleWeight { video_id: video_id.to_string(), start_frame: start, weight });
        start += SAMPLE_STRIDE;
    }
    tasklab::write_weights(out, &weights)?;
    Ok(())
}

fn cmd_stats(timelines: &[PathBuf], annotations: &[PathBuf], out: &Path) -> Result<()> {
    let timelines: Vec<_> =
        timelines.iter().map(|p| read_timeline(p)).collect::<Result<_, _>>()?;
    let annotations: Vec<_> =
        annotations.iter().map(|p| parse_annotations(p)).collect::<Result<_, _>>()?;
    let rows = tasklab::dataset_stats(&timelines, &annotations);
    tasklab::write_stats(out, &rows)?;
    Ok(())
}

fn cmd_eval(
    cfg: &PipelineConfig,
    gt_dir: &Path,
    fix_dir: &Path,
    pred_dir: &Path,
    timeline: &Path,
    annotations: &Path,
    out: &Path,
) -> Result<()> {
    let timeline = read_timeline(timeline)?;
    let ann = parse_annotations(annotations)?;
    let windows = intersection_windows(&ann);
    let metric_cfg = cfg.metrics.resolve()?;
    let run = bench::evaluate(gt_dir, fix_dir, pred_dir, &timeline, &windows, &metric_cfg)?;
    bench::write_run_json(out, &run)?;
    Ok(())
}

fn cmd_report(run: &Path, format: ReportFormatArg, out: &Path) -> Result<()> {
    let run = bench::read_run_json(run)?;
    let tables = bench::aggregate(&run)?;
    let fmt = match format {
        ReportFormatArg::Csv => bench::ReportFormat::Csv,
        ReportFormatArg::Markdown => bench::ReportFormat::Markdown,
    };
    bench::emit_report(&tables, fmt, out)?;
    Ok(())
}
