//! Time alignment of per-camera detection frames.
//!
//! Frames are buffered per camera. Matching is greedy and earliest-first: the
//! oldest buffered frame anchors a group, every other camera contributes its
//! oldest frame if that frame lies within the disparity window of the anchor,
//! and the group is emitted when enough cameras matched. Otherwise only the
//! anchor is dropped. Frames that have been grouped or dropped are consumed and
//! never reconsidered.

use std::collections::VecDeque;

use thiserror::Error;

use crate::geometry::Polygon;

pub const MAX_CAMERAS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SyncError {
    #[error("camera {camera}: frame at {timestamp_ms} ms is not newer than consumed frame at {last_consumed_ms} ms")]
    StaleFrame { camera: u8, timestamp_ms: i64, last_consumed_ms: i64 },
    #[error("camera id {0} out of range")]
    InvalidCamera(u8),
    #[error("timestamp must be positive, got {0}")]
    InvalidTimestamp(i64),
}

/// One camera's detections at one instant, in global grid coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionFrame {
    pub camera_id: u8,
    pub timestamp_ms: i64,
    pub polygons: Vec<Polygon>,
}

impl DetectionFrame {
    pub fn new(camera_id: u8, timestamp_ms: i64, polygons: Vec<Polygon>) -> Result<Self, SyncError> {
        if camera_id as usize >= MAX_CAMERAS {
            return Err(SyncError::InvalidCamera(camera_id));
        }
        if timestamp_ms <= 0 {
            return Err(SyncError::InvalidTimestamp(timestamp_ms));
        }
        Ok(Self { camera_id, timestamp_ms, polygons })
    }
}

/// Frames judged simultaneous, at most one per camera.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameGroup {
    frames: Vec<DetectionFrame>,
    group_timestamp_ms: i64,
}

impl FrameGroup {
    /// Frames sorted by camera id.
    pub fn frames(&self) -> &[DetectionFrame] {
        &self.frames
    }

    pub fn timestamp_ms(&self) -> i64 {
        self.group_timestamp_ms
    }

    pub fn camera_support(&self) -> usize {
        self.frames.len()
    }

    /// Largest minus smallest member timestamp.
    pub fn disparity_ms(&self) -> i64 {
        let ts = self.frames.iter().map(|f| f.timestamp_ms);
        ts.clone().max().unwrap_or(0) - ts.min().unwrap_or(0)
    }

    /// Builds a group directly, bypassing the buffer. Frames must come from
    /// distinct cameras.
    pub fn from_frames(mut frames: Vec<DetectionFrame>) -> Option<Self> {
        frames.sort_by_key(|f| f.camera_id);
        if frames.is_empty() || frames.windows(2).any(|w| w[0].camera_id == w[1].camera_id) {
            return None;
        }
        let group_timestamp_ms = group_timestamp(&frames);
        Some(Self { frames, group_timestamp_ms })
    }
}

/// Mean member timestamp rounded to the nearest millisecond, halves away from zero.
pub fn group_timestamp(frames: &[DetectionFrame]) -> i64 {
    let ts: Vec<i64> = frames.iter().map(|f| f.timestamp_ms).collect();
    rounded_mean(&ts)
}

pub(crate) fn rounded_mean(values: &[i64]) -> i64 {
    if values.is_empty() {
        return 0;
    }
    let n = values.len() as i128;
    let sum: i128 = values.iter().map(|&v| v as i128).sum();
    let mag = (2 * sum.abs() + n) / (2 * n);
    (if sum < 0 { -mag } else { mag }) as i64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyncConfig {
    /// Maximum spread between the earliest and latest frame of a group.
    pub window_ms: i64,
    pub camera_count: usize,
    /// Fewest cameras that still form a group.
    pub min_cameras: usize,
    /// Per-camera queue bound; the oldest frame is dropped on overflow.
    pub max_queue: usize,
}

impl Default for SyncConfig {
    fn default() -> Self {
        Self { window_ms: 350, camera_count: MAX_CAMERAS, min_cameras: 3, max_queue: 256 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SyncStats {
    pub full_groups: u64,
    pub fallback_groups: u64,
    pub skipped_anchors: u64,
    pub overflow_drops: u64,
    /// Matches rejected because their timestamp would precede the previous group.
    pub out_of_order: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MatchOutcome {
    Group(FrameGroup),
    /// Too few cameras matched; the anchor frame was discarded.
    Skipped(DetectionFrame),
    /// The anchor's window may still receive frames.
    NotReady,
    Empty,
}

#[derive(Debug, Clone)]
pub struct SyncBuffer {
    cfg: SyncConfig,
    queues: Vec<VecDeque<DetectionFrame>>,
    last_consumed: Vec<Option<i64>>,
    last_group_ms: Option<i64>,
    stats: SyncStats,
}

impl Default for SyncBuffer {
    fn default() -> Self {
        Self::new(SyncConfig::default())
    }
}

impl SyncBuffer {
    pub fn new(cfg: SyncConfig) -> Self {
        let cameras = cfg.camera_count.clamp(1, MAX_CAMERAS);
        let cfg = SyncConfig { camera_count: cameras, ..cfg };
        Self {
            cfg,
            queues: vec![VecDeque::new(); cameras],
            last_consumed: vec![None; cameras],
            last_group_ms: None,
            stats: SyncStats::default(),
        }
    }

    pub fn config(&self) -> &SyncConfig {
        &self.cfg
    }

    pub fn stats(&self) -> SyncStats {
        self.stats
    }

    pub fn len(&self) -> usize {
        self.queues.iter().map(VecDeque::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.queues.iter().all(VecDeque::is_empty)
    }

    pub fn queue(&self, camera: u8) -> impl Iterator<Item = &DetectionFrame> {
        self.queues.get(camera as usize).into_iter().flatten()
    }

    /// Inserts a frame into its camera's queue in timestamp order.
    pub fn ingest(&mut self, frame: DetectionFrame) -> Result<(), SyncError> {
        let cam = frame.camera_id as usize;
        if cam >= self.queues.len() {
            return Err(SyncError::InvalidCamera(frame.camera_id));
        }
        if let Some(last) = self.last_consumed[cam] {
            if frame.timestamp_ms <= last {
                return Err(SyncError::StaleFrame {
                    camera: frame.camera_id,
                    timestamp_ms: frame.timestamp_ms,
                    last_consumed_ms: last,
                });
            }
        }
        let queue = &mut self.queues[cam];
        let pos = queue.partition_point(|f| f.timestamp_ms <= frame.timestamp_ms);
        queue.insert(pos, frame);
        if queue.len() > self.cfg.max_queue {
            if let Some(dropped) = queue.pop_front() {
                self.consume(cam, dropped.timestamp_ms);
                self.stats.overflow_drops += 1;
            }
        }
        Ok(())
    }

    fn consume(&mut self, cam: usize, ts: i64) {
        let last = &mut self.last_consumed[cam];
        *last = Some(last.map_or(ts, |l| l.max(ts)));
    }

    fn anchor(&self) -> Option<usize> {
        // min_by_key keeps the first minimum, i.e. the lowest camera id on ties.
        (0..self.queues.len())
            .filter_map(|c| self.queues[c].front().map(|f| (c, f.timestamp_ms)))
            .min_by_key(|&(_, ts)| ts)
            .map(|(c, _)| c)
    }

    /// One matching attempt. With `watermark_ms`, an anchor is only matched once
    /// a frame later than its window has been seen, so partners that are still
    /// in flight are not missed.
    pub fn try_match(&mut self, watermark_ms: Option<i64>) -> MatchOutcome {
        let Some(anchor_cam) = self.anchor() else {
            return MatchOutcome::Empty;
        };
        let anchor_ts = self.queues[anchor_cam][0].timestamp_ms;
        if let Some(w) = watermark_ms {
            if anchor_ts + self.cfg.window_ms >= w {
                return MatchOutcome::NotReady;
            }
        }
        // Every queued frame is at least as old as the anchor, so the oldest frame of
        // each camera is also its nearest, and ties resolve to the earlier frame.
        let members: Vec<usize> = (0..self.queues.len())
            .filter(|&c| {
                self.queues[c]
                    .front()
                    .is_some_and(|f| f.timestamp_ms - anchor_ts <= self.cfg.window_ms)
            })
            .collect();

        if members.len() >= self.cfg.min_cameras {
            let stamps: Vec<i64> = members.iter().map(|&c| self.queues[c][0].timestamp_ms).collect();
            let ts = rounded_mean(&stamps);
            if self.last_group_ms.is_none_or(|last| ts >= last) {
                let frames: Vec<DetectionFrame> = members
                    .iter()
                    .map(|&c| {
                        let f = self.queues[c].pop_front().expect("member queue is non-empty");
                        self.consume(c, f.timestamp_ms);
                        f
                    })
                    .collect();
                self.last_group_ms = Some(ts);
                if frames.len() == self.queues.len() {
                    self.stats.full_groups += 1;
                } else {
                    self.stats.fallback_groups += 1;
                }
                return MatchOutcome::Group(FrameGroup { frames, group_timestamp_ms: ts });
            }
            self.stats.out_of_order += 1;
        }

        let anchor = self.queues[anchor_cam].pop_front().expect("anchor queue is non-empty");
        self.consume(anchor_cam, anchor.timestamp_ms);
        self.stats.skipped_anchors += 1;
        MatchOutcome::Skipped(anchor)
    }

    /// A single attempt without a watermark; `None` when the buffer is empty or
    /// the anchor had to be discarded.
    pub fn next_group(&mut self) -> Option<FrameGroup> {
        match self.try_match(None) {
            MatchOutcome::Group(g) => Some(g),
            _ => None,
        }
    }

    /// Repeats matching until the buffer is exhausted or the next anchor is not
    /// yet ready under `watermark_ms`.
    pub fn drain(&mut self, watermark_ms: Option<i64>) -> Vec<FrameGroup> {
        let mut out = Vec::new();
        loop {
            match self.try_match(watermark_ms) {
                MatchOutcome::Group(g) => out.push(g),
                MatchOutcome::Skipped(_) => {}
                MatchOutcome::NotReady | MatchOutcome::Empty => return out,
            }
        }
    }
}

/// Runs a complete set of frames through a fresh buffer in timestamp order.
pub fn synchronize(frames: Vec<DetectionFrame>, cfg: SyncConfig) -> (Vec<FrameGroup>, SyncStats) {
    let mut frames = frames;
    frames.sort_by_key(|f| (f.timestamp_ms, f.camera_id));
    let mut buffer = SyncBuffer::new(cfg);
    let mut groups = Vec::new();
    for frame in frames {
        let ts = frame.timestamp_ms;
        if let Err(e) = buffer.ingest(frame) {
            log::warn!("dropping frame: {e}");
            continue;
        }
        groups.extend(buffer.drain(Some(ts)));
    }
    groups.extend(buffer.drain(None));
    (groups, buffer.stats())
}
