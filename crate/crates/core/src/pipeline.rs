//! End-to-end wiring: detections → sync → fusion → store, and stored
//! rectangles → PET.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use thiserror::Error;

use crate::config::PipelineConfig;
use crate::fusion::{fuse_group, FittedRectangle};
use crate::geometry::{project_polygon, GeometryError, RotatedRect};
use crate::pet::{PetError, PetEvent, PetGrid};
use crate::store::{CalibrationFile, GroupRecord, RectangleRecord, Store, StoreError};
use crate::sync::{DetectionFrame, FrameGroup, SyncBuffer, SyncConfig, SyncError, SyncStats};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Pet(#[from] PetError),
    #[error(transparent)]
    Sync(#[from] SyncError),
    #[error("camera {0} has no calibration")]
    MissingCalibration(u8),
    #[error("projecting camera {camera} frame at {timestamp_ms}: {source}")]
    Projection { camera: u8, timestamp_ms: i64, source: GeometryError },
}

impl PipelineConfig {
    pub fn sync_config(&self) -> SyncConfig {
        SyncConfig { window_ms: self.window_ms, ..SyncConfig::default() }
    }
}

/// Maps camera-pixel polygons onto the grid with each camera's homography.
pub fn project_frame(frame: &DetectionFrame, calibration: &CalibrationFile) -> Result<DetectionFrame, PipelineError> {
    let cam = calibration
        .camera(frame.camera_id)
        .ok_or(PipelineError::MissingCalibration(frame.camera_id))?;
    let polygons = frame
        .polygons
        .iter()
        .map(|p| project_polygon(&cam.homography, p))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|source| PipelineError::Projection {
            camera: frame.camera_id,
            timestamp_ms: frame.timestamp_ms,
            source,
        })?;
    Ok(DetectionFrame { polygons, ..frame.clone() })
}

/// Rectangles fused from one frame group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupResult {
    pub timestamp_ms: i64,
    pub camera_support: usize,
    pub rectangles: Vec<FittedRectangle>,
    pub latency: Duration,
}

impl GroupResult {
    pub fn record(&self) -> GroupRecord {
        GroupRecord {
            timestamp_ms: self.timestamp_ms,
            camera_support: self.camera_support as u8,
            rectangles: self.rectangles.len() as u32,
        }
    }
}

pub fn fuse_one(group: &FrameGroup, cfg: &PipelineConfig) -> GroupResult {
    let start = Instant::now();
    let rectangles = fuse_group(group, cfg.grid_width, cfg.grid_height, &cfg.fusion);
    GroupResult {
        timestamp_ms: group.timestamp_ms(),
        camera_support: group.camera_support(),
        rectangles,
        latency: start.elapsed(),
    }
}

/// Fuses groups in parallel; results keep the input order.
pub fn fuse_groups(groups: &[FrameGroup], cfg: &PipelineConfig) -> Vec<GroupResult> {
    groups.par_iter().map(|g| fuse_one(g, cfg)).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FuseSummary {
    pub sync: SyncStats,
    pub groups: usize,
    pub rectangles: usize,
    pub total_latency: Duration,
}

impl FuseSummary {
    pub fn mean_latency(&self) -> Duration {
        if self.groups == 0 {
            Duration::ZERO
        } else {
            self.total_latency / self.groups as u32
        }
    }

    fn add(&mut self, results: &[GroupResult]) {
        self.groups += results.len();
        self.rectangles += results.iter().map(|r| r.rectangles.len()).sum::<usize>();
        self.total_latency += results.iter().map(|r| r.latency).sum::<Duration>();
    }
}

/// Synchronizes and fuses a complete batch of frames.
pub fn fuse_batch(frames: Vec<DetectionFrame>, cfg: &PipelineConfig) -> (Vec<GroupResult>, FuseSummary) {
    let (groups, stats) = crate::sync::synchronize(frames, cfg.sync_config());
    let results = fuse_groups(&groups, cfg);
    let mut summary = FuseSummary { sync: stats, ..Default::default() };
    summary.add(&results);
    (results, summary)
}

pub fn store_results(store: &mut Store, results: &[GroupResult]) -> Result<(), StoreError> {
    let rects: Vec<RectangleRecord> = results.iter().flat_map(|r| r.rectangles.iter().map(RectangleRecord::from)).collect();
    let groups: Vec<GroupRecord> = results.iter().map(GroupResult::record).collect();
    store.append_rectangles(&rects)?;
    store.append_groups(&groups)
}

/// Incremental sync and fusion for frames that arrive over time.
#[derive(Debug)]
pub struct StreamingFuser {
    cfg: PipelineConfig,
    buffer: SyncBuffer,
    watermark_ms: Option<i64>,
    summary: FuseSummary,
}

impl StreamingFuser {
    pub fn new(cfg: PipelineConfig) -> Self {
        let buffer = SyncBuffer::new(cfg.sync_config());
        Self { cfg, buffer, watermark_ms: None, summary: FuseSummary::default() }
    }

    /// Adds a frame and fuses every group whose window has closed.
    pub fn push(&mut self, frame: DetectionFrame) -> Result<Vec<GroupResult>, SyncError> {
        let ts = frame.timestamp_ms;
        self.buffer.ingest(frame)?;
        self.watermark_ms = Some(self.watermark_ms.map_or(ts, |w| w.max(ts)));
        Ok(self.fuse(self.watermark_ms))
    }

    /// Matches everything still buffered.
    pub fn flush(&mut self) -> Vec<GroupResult> {
        self.fuse(None)
    }

    fn fuse(&mut self, watermark: Option<i64>) -> Vec<GroupResult> {
        let groups = self.buffer.drain(watermark);
        let results = fuse_groups(&groups, &self.cfg);
        self.summary.add(&results);
        self.summary.sync = self.buffer.stats();
        results
    }

    pub fn summary(&self) -> FuseSummary {
        self.summary
    }
}

/// Feeds timestamped occupancy to a [`PetGrid`], merging consecutive inputs
/// that share a timestamp into one update.
#[derive(Debug)]
pub struct PetAccumulator {
    grid: PetGrid,
    pending: Option<(i64, Vec<RotatedRect>)>,
}

impl PetAccumulator {
    pub fn new(grid: PetGrid) -> Self {
        Self { grid, pending: None }
    }

    pub fn push(&mut self, timestamp_ms: i64, rects: impl IntoIterator<Item = RotatedRect>) -> Result<Vec<PetEvent>, PetError> {
        if let Some((ts, pending)) = &mut self.pending {
            if *ts == timestamp_ms {
                pending.extend(rects);
                return Ok(Vec::new());
            }
        }
        let events = self.flush_pending()?;
        self.pending = Some((timestamp_ms, rects.into_iter().collect()));
        Ok(events)
    }

    fn flush_pending(&mut self) -> Result<Vec<PetEvent>, PetError> {
        match self.pending.take() {
            Some((ts, rects)) => self.grid.update_occupancy(&rects, ts),
            None => Ok(Vec::new()),
        }
    }

    pub fn finish(mut self) -> Result<(PetGrid, Vec<PetEvent>), PetError> {
        let events = self.flush_pending()?;
        Ok((self.grid, events))
    }
}

pub fn new_pet_grid(cfg: &PipelineConfig) -> Result<PetGrid, PetError> {
    PetGrid::new(cfg.roi, cfg.grid_width, cfg.grid_height)
}

/// PET over fused results, in timestamp order.
pub fn pet_from_results(results: &[GroupResult], cfg: &PipelineConfig) -> Result<PetGrid, PetError> {
    let mut order: Vec<&GroupResult> = results.iter().collect();
    order.sort_by_key(|r| r.timestamp_ms);
    let mut acc = PetAccumulator::new(new_pet_grid(cfg)?);
    for r in order {
        acc.push(r.timestamp_ms, r.rectangles.iter().map(|f| f.rect))?;
    }
    Ok(acc.finish()?.0)
}

/// Replays stored groups and rectangles with `t0 <= timestamp < t1` into a
/// fresh grid.
pub fn replay_pet(store: &mut Store, t0: i64, t1: i64, cfg: &PipelineConfig) -> Result<PetGrid, PipelineError> {
    let groups = store.query_groups(t0, t1)?;
    let rects = store.query_rectangles(t0, t1)?;
    let mut by_ts: BTreeMap<i64, Vec<RotatedRect>> = groups.iter().map(|g| (g.timestamp_ms, Vec::new())).collect();
    for r in &rects {
        match r.rect() {
            Some(rect) => by_ts.entry(r.timestamp_ms).or_default().push(rect),
            None => log::warn!("skipping malformed rectangle at {}", r.timestamp_ms),
        }
    }
    let mut acc = PetAccumulator::new(new_pet_grid(cfg)?);
    for (ts, rects) in by_ts {
        acc.push(ts, rects)?;
    }
    Ok(acc.finish()?.0)
}
