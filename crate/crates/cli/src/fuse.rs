use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::Context;
use clap::Args;
use petmap_core::config::PipelineConfig;
use petmap_core::pipeline::{fuse_batch, project_frame, store_results, FuseSummary, GroupResult, StreamingFuser};
use petmap_core::store::{detection_files, read_detection_file, CalibrationFile, DetectionRecord, Store};
use petmap_core::sync::DetectionFrame;

use crate::ConfigArgs;

#[derive(Args, Debug)]
pub struct FuseArgs {
    /// Directory of detection files (searched recursively).
    detections: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    /// Keep polling the directory for new files.
    #[arg(long)]
    watch: bool,
    /// Polling period in watch mode.
    #[arg(long, default_value_t = 200)]
    poll_ms: u64,
    /// In watch mode, stop after this long without new files.
    #[arg(long)]
    idle_exit_ms: Option<u64>,
}

pub fn run(args: FuseArgs) -> anyhow::Result<()> {
    let cfg = args.config.resolve()?;
    let calibration = cfg.calibration.as_deref().map(CalibrationFile::load).transpose()?;
    let mut store = Store::open(&cfg.store)?;
    if !args.detections.is_dir() {
        anyhow::bail!("{} is not a directory", args.detections.display());
    }
    let summary = if args.watch {
        watch(&args, &cfg, calibration.as_ref(), &mut store)?
    } else {
        batch(&args.detections, &cfg, calibration.as_ref(), &mut store)?
    };
    report(&summary);
    Ok(())
}

fn batch(
    dir: &Path,
    cfg: &PipelineConfig,
    calibration: Option<&CalibrationFile>,
    store: &mut Store,
) -> anyhow::Result<FuseSummary> {
    let mut records = Vec::new();
    for path in detection_files(dir)? {
        match read_detection_file(&path) {
            Ok(rs) => records.extend(rs),
            Err(e) => log::warn!("skipping {e}"),
        }
    }
    let frames = ingest(records, calibration, store)?;
    let (results, summary) = fuse_batch(frames, cfg);
    store_results(store, &results)?;
    Ok(summary)
}

/// Stores raw detections and returns them as grid-space frames.
fn ingest(
    mut records: Vec<DetectionRecord>,
    calibration: Option<&CalibrationFile>,
    store: &mut Store,
) -> anyhow::Result<Vec<DetectionFrame>> {
    records.sort_by_key(|r| (r.timestamp_ms, r.camera_id));
    let mut kept = Vec::with_capacity(records.len());
    let mut frames = Vec::with_capacity(records.len());
    for r in records {
        let frame = match r.to_frame() {
            Ok(f) => f,
            Err(e) => {
                log::warn!("skipping camera {} frame at {}: {e}", r.camera_id, r.timestamp_ms);
                continue;
            }
        };
        let frame = match calibration {
            Some(cal) => match project_frame(&frame, cal) {
                Ok(f) => f,
                Err(e) => {
                    log::warn!("skipping frame: {e}");
                    continue;
                }
            },
            None => frame,
        };
        kept.push(r);
        frames.push(frame);
    }
    store.append_detections(&kept)?;
    Ok(frames)
}

fn watch(
    args: &FuseArgs,
    cfg: &PipelineConfig,
    calibration: Option<&CalibrationFile>,
    store: &mut Store,
) -> anyhow::Result<FuseSummary> {
    let mut fuser = StreamingFuser::new(cfg.clone());
    // Size at the last attempt; a file is retried when it grows, in case it
    // was caught mid-write.
    let mut seen: HashMap<PathBuf, (u64, bool)> = HashMap::new();
    let mut last_new = Instant::now();
    let idle = args.idle_exit_ms.map(Duration::from_millis);
    loop {
        let mut records = Vec::new();
        for path in detection_files(&args.detections)? {
            let len = std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0);
            if let Some(&(prev, done)) = seen.get(&path) {
                if done || prev == len {
                    continue;
                }
            }
            match read_detection_file(&path) {
                Ok(rs) => {
                    records.extend(rs);
                    seen.insert(path, (len, true));
                }
                Err(e) => {
                    log::debug!("not yet readable: {e}");
                    seen.insert(path, (len, false));
                }
            }
        }
        if !records.is_empty() {
            last_new = Instant::now();
            let mut results = Vec::new();
            for frame in ingest(records, calibration, store)? {
                match fuser.push(frame) {
                    Ok(rs) => results.extend(rs),
                    Err(e) => log::warn!("dropping frame: {e}"),
                }
            }
            emit(store, &results)?;
        }
        if idle.is_some_and(|d| last_new.elapsed() >= d) {
            break;
        }
        std::thread::sleep(Duration::from_millis(args.poll_ms));
    }
    let rest = fuser.flush();
    emit(store, &rest)?;
    Ok(fuser.summary())
}

fn emit(store: &mut Store, results: &[GroupResult]) -> anyhow::Result<()> {
    store_results(store, results).context("storing fused rectangles")?;
    for r in results {
        log::info!("group {} ({} cameras): {} rectangles", r.timestamp_ms, r.camera_support, r.rectangles.len());
    }
    Ok(())
}

fn report(s: &FuseSummary) {
    println!(
        "groups: {} ({} with 4 cameras, {} with 3), skipped anchors: {}",
        s.groups, s.sync.full_groups, s.sync.fallback_groups, s.sync.skipped_anchors
    );
    if s.sync.out_of_order > 0 || s.sync.overflow_drops > 0 {
        println!("out of order: {}, queue overflow: {}", s.sync.out_of_order, s.sync.overflow_drops);
    }
    println!("rectangles: {}", s.rectangles);
    println!("mean latency: {:.2} ms/group", s.mean_latency().as_secs_f64() * 1000.0);
}
