//! File-backed record store and the detection/calibration file formats.
//!
//! Records are newline-delimited JSON, one file per UTC day and record kind:
//!
//! ```text
//! <root>/rectangles/2023-11-14.ndjson
//! <root>/detections/2023-11-14.ndjson
//! <root>/groups/2023-11-14.ndjson
//! ```
//!
//! The group series has one record per fused frame group, so a replay also sees
//! the instants at which no vehicle was present.
//!
//! Each segment keeps an in-memory sparse index (every 64th record) built on
//! open and extended as files grow. Appends are written as one buffer per
//! segment and synced before returning. A writer truncates a torn trailing
//! line on open; readers ignore it.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::FittedRectangle;
use crate::geometry::{GeometryError, Homography, Point2, Polygon, RotatedRect};
use crate::sync::{DetectionFrame, SyncError};

const INDEX_STRIDE: u64 = 64;
const SEGMENT_EXT: &str = "ndjson";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage failure at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {msg}")]
    Corrupt { path: PathBuf, line: u64, msg: String },
    #[error("batch not ordered by timestamp at record {0}")]
    Unordered(usize),
    #[error("invalid range [{0}, {1})")]
    InvalidRange(i64, i64),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

pub trait Record: Serialize + DeserializeOwned + Clone {
    const KIND: &'static str;
    fn timestamp_ms(&self) -> i64;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RectangleRecord {
    pub timestamp_ms: i64,
    pub corners: [Point2; 4],
    pub camera_support: u8,
    pub mean_score: f64,
}

impl RectangleRecord {
    pub fn rect(&self) -> Option<RotatedRect> {
        RotatedRect::from_corners(&self.corners, 0.5)
    }
}

impl From<&FittedRectangle> for RectangleRecord {
    fn from(r: &FittedRectangle) -> Self {
        Self {
            timestamp_ms: r.timestamp_ms,
            corners: r.corners(),
            camera_support: r.camera_support as u8,
            mean_score: r.mean_score,
        }
    }
}

impl Record for RectangleRecord {
    const KIND: &'static str = "rectangles";
    fn timestamp_ms(&self) -> i64 {
        self.timestamp_ms
    }
}

/// One camera frame as exchanged on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub camera_id: u8,
    pub timestamp_ms: i64,
    pub polygons: Vec<Vec<Point2>>,
}

#[derive(Debug, Error)]
pub enum DetectionError {
    #[error(transparent)]
    Sync(#[from] SyncError),
    #[error("polygon {index}: {source}")]
    Polygon { index: usize, source: GeometryError },
}

impl DetectionRecord {
    pub fn to_frame(&self) -> Result<DetectionFrame, DetectionError> {
        let polygons = self
            .polygons
            .iter()
            .enumerate()
            .map(|(index, vs)| {
                if vs.iter().any(|p| !p.is_finite()) {
                    return Err(DetectionError::Polygon { index, source: GeometryError::NonFinite });
                }
                Polygon::new(vs.clone()).map_err(|source| DetectionError::Polygon { index, source })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(DetectionFrame::new(self.camera_id, self.timestamp_ms, polygons)?)
    }
}

impl From<&DetectionFrame> for DetectionRecord {
    fn from(f: &DetectionFrame) -> Self {
        Self {
            camera_id: f.camera_id,
            timestamp_ms: f.timestamp_ms,
            polygons: f.polygons.iter().map(|p| p.vertices().to_vec()).collect(),
        }
    }
}

impl Record for DetectionRecord {
    const KIND: &'static str = "detections";
    fn timestamp_ms(&self) -> i64 {
        self.timestamp_ms
    }
}

/// A fused frame group and how many rectangles it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRecord {
    pub timestamp_ms: i64,
    pub camera_support: u8,
    pub rectangles: u32,
}

impl Record for GroupRecord {
    const KIND: &'static str = "groups";
    fn timestamp_ms(&self) -> i64 {
        self.timestamp_ms
    }
}

#[derive(Deserialize)]
struct Stamp {
    timestamp_ms: i64,
}

#[derive(Debug, Clone)]
struct Segment {
    path: PathBuf,
    /// Bytes covered by the index.
    len: u64,
    records: u64,
    index: Vec<(i64, u64)>,
    min_ts: i64,
    max_ts: i64,
    sorted: bool,
}

impl Segment {
    fn new(path: PathBuf) -> Self {
        Self { path, len: 0, records: 0, index: Vec::new(), min_ts: i64::MAX, max_ts: i64::MIN, sorted: true }
    }

    fn push(&mut self, ts: i64, offset: u64) {
        if self.records % INDEX_STRIDE == 0 {
            self.index.push((ts, offset));
        }
        if ts < self.max_ts {
            self.sorted = false;
        }
        self.min_ts = self.min_ts.min(ts);
        self.max_ts = self.max_ts.max(ts);
        self.records += 1;
    }

    /// Indexes complete lines past `self.len`. A torn final line is cut off when
    /// `repair` is set and left alone otherwise.
    fn scan_tail(&mut self, repair: bool) -> Result<(), StoreError> {
        let file = File::open(&self.path).map_err(io_err(&self.path))?;
        let mut reader = BufReader::new(file);
        reader.seek(SeekFrom::Start(self.len)).map_err(io_err(&self.path))?;
        let mut buf = Vec::new();
        loop {
            buf.clear();
            let n = reader.read_until(b'\n', &mut buf).map_err(io_err(&self.path))? as u64;
            if n == 0 {
                return Ok(());
            }
            if buf.last() != Some(&b'\n') {
                if repair {
                    log::warn!("{}: dropping torn record at byte {}", self.path.display(), self.len);
                    let f = OpenOptions::new().write(true).open(&self.path).map_err(io_err(&self.path))?;
                    f.set_len(self.len).map_err(io_err(&self.path))?;
                    f.sync_all().map_err(io_err(&self.path))?;
                }
                return Ok(());
            }
            let stamp: Stamp = serde_json::from_slice(&buf).map_err(|e| StoreError::Corrupt {
                path: self.path.clone(),
                line: self.records + 1,
                msg: e.to_string(),
            })?;
            self.push(stamp.timestamp_ms, self.len);
            self.len += n;
        }
    }

    fn read_range<R: Record>(&self, t0: i64, t1: i64, out: &mut Vec<R>) -> Result<(), StoreError> {
        if self.records == 0 || self.max_ts < t0 || self.min_ts >= t1 {
            return Ok(());
        }
        let start = if self.sorted {
            let i = self.index.partition_point(|&(ts, _)| ts < t0);
            if i == 0 {
                0
            } else {
                self.index[i - 1].1
            }
        } else {
            0
        };
        let file = File::open(&self.path).map_err(io_err(&self.path))?;
        let mut reader = BufReader::new(file);
        reader.seek(SeekFrom::Start(start)).map_err(io_err(&self.path))?;
        let mut pos = start;
        let mut buf = Vec::new();
        while pos < self.len {
            buf.clear();
            let n = reader.read_until(b'\n', &mut buf).map_err(io_err(&self.path))? as u64;
            if n == 0 {
                break;
            }
            pos += n;
            let rec: R = serde_json::from_slice(&buf).map_err(|e| StoreError::Corrupt {
                path: self.path.clone(),
                line: 0,
                msg: e.to_string(),
            })?;
            let ts = rec.timestamp_ms();
            if self.sorted && ts >= t1 {
                break;
            }
            if ts >= t0 && ts < t1 {
                out.push(rec);
            }
        }
        Ok(())
    }
}

fn segment_name(ts: i64) -> Result<String, StoreError> {
    let dt = chrono::DateTime::from_timestamp_millis(ts)
        .ok_or_else(|| StoreError::InvalidRecord(format!("timestamp {ts} out of range")))?;
    Ok(format!("{}.{SEGMENT_EXT}", dt.format("%Y-%m-%d")))
}

/// Append-only time series of one record kind.
#[derive(Debug)]
pub struct Series<R> {
    dir: PathBuf,
    writable: bool,
    segments: BTreeMap<String, Segment>,
    _record: PhantomData<R>,
}

impl<R: Record> Series<R> {
    fn open(root: &Path, writable: bool) -> Result<Self, StoreError> {
        let dir = root.join(R::KIND);
        if writable {
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        let mut s = Self { dir, writable, segments: BTreeMap::new(), _record: PhantomData };
        s.refresh()?;
        Ok(s)
    }

    /// Picks up segments and bytes written since the last look.
    pub fn refresh(&mut self) -> Result<(), StoreError> {
        if !self.dir.exists() {
            return Ok(());
        }
        let entries = fs::read_dir(&self.dir).map_err(io_err(&self.dir))?;
        for entry in entries {
            let entry = entry.map_err(io_err(&self.dir))?;
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some(SEGMENT_EXT) {
                continue;
            }
            let name = entry.file_name().to_string_lossy().into_owned();
            let len = entry.metadata().map_err(io_err(&path))?.len();
            let seg = self.segments.entry(name).or_insert_with(|| Segment::new(path));
            if len > seg.len {
                seg.scan_tail(self.writable)?;
            }
        }
        Ok(())
    }

    pub fn len(&self) -> u64 {
        self.segments.values().map(|s| s.records).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn append(&mut self, records: &[R]) -> Result<(), StoreError> {
        if !self.writable {
            return Err(StoreError::InvalidRecord("store opened read-only".into()));
        }
        if let Some(i) = records.windows(2).position(|w| w[1].timestamp_ms() < w[0].timestamp_ms()) {
            return Err(StoreError::Unordered(i + 1));
        }
        let mut i = 0;
        while i < records.len() {
            let name = segment_name(records[i].timestamp_ms())?;
            let mut j = i + 1;
            while j < records.len() && segment_name(records[j].timestamp_ms())? == name {
                j += 1;
            }
            self.append_segment(&name, &records[i..j])?;
            i = j;
        }
        Ok(())
    }

    fn append_segment(&mut self, name: &str, records: &[R]) -> Result<(), StoreError> {
        let path = self.dir.join(name);
        let seg = self.segments.entry(name.to_string()).or_insert_with(|| Segment::new(path.clone()));
        let mut buf = Vec::new();
        let mut offsets = Vec::with_capacity(records.len());
        for r in records {
            offsets.push((r.timestamp_ms(), seg.len + buf.len() as u64));
            serde_json::to_writer(&mut buf, r).map_err(|e| StoreError::InvalidRecord(e.to_string()))?;
            buf.push(b'\n');
        }
        let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(io_err(&path))?;
        f.write_all(&buf).map_err(io_err(&path))?;
        f.sync_data().map_err(io_err(&path))?;
        for (ts, off) in offsets {
            seg.push(ts, off);
        }
        seg.len += buf.len() as u64;
        Ok(())
    }

    /// Records with `t0 <= timestamp < t1`, by timestamp then insertion order.
    pub fn query(&mut self, t0: i64, t1: i64) -> Result<Vec<R>, StoreError> {
        if t0 > t1 {
            return Err(StoreError::InvalidRange(t0, t1));
        }
        self.refresh()?;
        let mut out: Vec<R> = Vec::new();
        for seg in self.segments.values() {
            seg.read_range(t0, t1, &mut out)?;
        }
        out.sort_by_key(|r| r.timestamp_ms());
        Ok(out)
    }

    /// Smallest and largest stored timestamps.
    pub fn time_span(&self) -> Option<(i64, i64)> {
        let segs = self.segments.values().filter(|s| s.records > 0);
        let lo = segs.clone().map(|s| s.min_ts).min()?;
        let hi = segs.map(|s| s.max_ts).max()?;
        Some((lo, hi))
    }
}

/// Rectangle and detection series under one root directory.
#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    pub rectangles: Series<RectangleRecord>,
    pub detections: Series<DetectionRecord>,
    pub groups: Series<GroupRecord>,
}

impl Store {
    /// Opens for writing, creating directories and repairing torn tails.
    pub fn open(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        Self::open_mode(root.as_ref(), true)
    }

    pub fn open_read_only(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        Self::open_mode(root.as_ref(), false)
    }

    fn open_mode(root: &Path, writable: bool) -> Result<Self, StoreError> {
        Ok(Self {
            root: root.to_path_buf(),
            rectangles: Series::open(root, writable)?,
            detections: Series::open(root, writable)?,
            groups: Series::open(root, writable)?,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn append_rectangles(&mut self, records: &[RectangleRecord]) -> Result<(), StoreError> {
        for r in records {
            if r.rect().is_none() {
                return Err(StoreError::InvalidRecord(format!("corners at {} are not a rectangle", r.timestamp_ms)));
            }
        }
        self.rectangles.append(records)
    }

    pub fn query_rectangles(&mut self, t0: i64, t1: i64) -> Result<Vec<RectangleRecord>, StoreError> {
        self.rectangles.query(t0, t1)
    }

    pub fn append_detections(&mut self, records: &[DetectionRecord]) -> Result<(), StoreError> {
        self.detections.append(records)
    }

    pub fn query_detections(&mut self, t0: i64, t1: i64) -> Result<Vec<DetectionRecord>, StoreError> {
        self.detections.query(t0, t1)
    }

    pub fn append_groups(&mut self, records: &[GroupRecord]) -> Result<(), StoreError> {
        self.groups.append(records)
    }

    pub fn query_groups(&mut self, t0: i64, t1: i64) -> Result<Vec<GroupRecord>, StoreError> {
        self.groups.query(t0, t1)
    }
}

/// Reads every detection record in a per-frame JSON file or an NDJSON batch.
pub fn read_detection_file(path: &Path) -> Result<Vec<DetectionRecord>, StoreError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::Deserializer::from_str(&text)
        .into_iter::<DetectionRecord>()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| StoreError::Corrupt { path: path.to_path_buf(), line: i as u64 + 1, msg: e.to_string() })
        })
        .collect()
}

/// Writes `<dir>/<timestamp_ms>.json`.
pub fn write_detection_file(dir: &Path, record: &DetectionRecord) -> Result<PathBuf, StoreError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(format!("{}.json", record.timestamp_ms));
    let text = serde_json::to_string(record).map_err(|e| StoreError::InvalidRecord(e.to_string()))?;
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    Ok(path)
}

/// Detection files (`.json`, `.ndjson`) below `dir`, in path order.
pub fn detection_files(dir: &Path) -> Result<Vec<PathBuf>, StoreError> {
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| StoreError::Io {
            path: dir.to_path_buf(),
            source: e.into_io_error().unwrap_or_else(|| std::io::Error::other("walk failed")),
        })?;
        let ext = entry.path().extension().and_then(|e| e.to_str());
        if entry.file_type().is_file() && matches!(ext, Some("json") | Some("ndjson")) {
            out.push(entry.into_path());
        }
    }
    Ok(out)
}

/// Camera-to-grid homography for one camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraCalibration {
    pub camera_id: u8,
    pub homography: Homography,
    pub correspondences: usize,
    pub max_reprojection_error_px: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub cameras: Vec<CameraCalibration>,
}

impl CalibrationFile {
    pub fn load(path: &Path) -> Result<Self, StoreError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text)
            .map_err(|e| StoreError::Corrupt { path: path.to_path_buf(), line: e.line() as u64, msg: e.to_string() })
    }

    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| StoreError::InvalidRecord(e.to_string()))?;
        fs::write(path, text + "\n").map_err(io_err(path))
    }

    pub fn camera(&self, id: u8) -> Option<&CameraCalibration> {
        self.cameras.iter().find(|c| c.camera_id == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const DAY: i64 = 86_400_000;
    const T0: i64 = 1_700_000_000_000;

    fn rect_record(ts: i64, x: f64) -> RectangleRecord {
        let r = RotatedRect::new(Point2::new(x, 500.25), 140.125, 55.5, 17.3);
        RectangleRecord { timestamp_ms: ts, corners: r.corners(), camera_support: 4, mean_score: 7.25 }
    }

    #[test]
    fn empty_store_and_batch() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Store::open(dir.path()).unwrap();
        s.append_rectangles(&[]).unwrap();
        assert!(s.query_rectangles(0, i64::MAX).unwrap().is_empty());
        assert!(s.rectangles.time_span().is_none());
    }

    #[test]
    fn three_records_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let recs = vec![rect_record(T0, 1.0), rect_record(T0 + 5, 2.0), rect_record(T0 + 9, 3.0)];
        {
            let mut s = Store::open(dir.path()).unwrap();
            s.append_rectangles(&recs).unwrap();
            assert_eq!(s.query_rectangles(0, i64::MAX).unwrap(), recs);
        }
        let mut s = Store::open_read_only(dir.path()).unwrap();
        assert_eq!(s.query_rectangles(0, i64::MAX).unwrap(), recs);
    }

    #[test]
    fn half_open_range() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Store::open(dir.path()).unwrap();
        s.append_rectangles(&[rect_record(T0, 0.0), rect_record(T0 + 10, 0.0)]).unwrap();
        let got = s.query_rectangles(T0, T0 + 10).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].timestamp_ms, T0);
        assert!(matches!(s.query_rectangles(5, 4), Err(StoreError::InvalidRange(5, 4))));
        assert!(s.query_rectangles(T0, T0).unwrap().is_empty());
    }

    #[test]
    fn unordered_batch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Store::open(dir.path()).unwrap();
        let err = s.append_rectangles(&[rect_record(T0 + 1, 0.0), rect_record(T0, 0.0)]).unwrap_err();
        assert!(matches!(err, StoreError::Unordered(1)));
    }

    #[test]
    fn non_rectangle_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Store::open(dir.path()).unwrap();
        let mut r = rect_record(T0, 0.0);
        r.corners[2].x += 5.0;
        assert!(s.append_rectangles(&[r]).is_err());
    }

    #[test]
    fn random_records_match_scan_oracle() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut all: Vec<RectangleRecord> = Vec::new();
        {
            let mut s = Store::open(dir.path()).unwrap();
            // Batches are internally ordered but may go back in time relative to
            // each other, across day boundaries.
            for _ in 0..40 {
                let mut batch: Vec<RectangleRecord> = (0..rng.random_range(0..200))
                    .map(|_| rect_record(T0 + rng.random_range(0..3 * DAY), rng.random_range(0.0..1600.0)))
                    .collect();
                batch.sort_by_key(|r| r.timestamp_ms);
                s.append_rectangles(&batch).unwrap();
                all.extend(batch);
            }
        }
        let mut s = Store::open(dir.path()).unwrap();
        assert_eq!(s.rectangles.len(), all.len() as u64);
        for _ in 0..50 {
            let a = T0 + rng.random_range(-DAY..4 * DAY);
            let b = a + rng.random_range(0..DAY);
            let mut expect: Vec<RectangleRecord> =
                all.iter().filter(|r| r.timestamp_ms >= a && r.timestamp_ms < b).cloned().collect();
            expect.sort_by_key(|r| r.timestamp_ms);
            assert_eq!(s.query_rectangles(a, b).unwrap(), expect);
        }
    }

    #[test]
    fn sorted_segment_uses_index() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Store::open(dir.path()).unwrap();
        let recs: Vec<_> = (0..1000).map(|i| rect_record(T0 + i * 10, i as f64)).collect();
        s.append_rectangles(&recs).unwrap();
        let seg = s.rectangles.segments.values().next().unwrap();
        assert!(seg.sorted);
        assert_eq!(seg.index.len(), 16);
        assert_eq!(s.query_rectangles(T0 + 5000, T0 + 5030).unwrap(), recs[500..503].to_vec());
    }

    #[test]
    fn torn_tail_is_repaired_by_writer_only() {
        let dir = tempfile::tempdir().unwrap();
        let recs = vec![rect_record(T0, 1.0), rect_record(T0 + 1, 2.0)];
        let seg_path;
        {
            let mut s = Store::open(dir.path()).unwrap();
            s.append_rectangles(&recs).unwrap();
            seg_path = s.rectangles.segments.values().next().unwrap().path.clone();
        }
        let full = fs::metadata(&seg_path).unwrap().len();
        let mut f = OpenOptions::new().append(true).open(&seg_path).unwrap();
        f.write_all(b"{\"timestamp_ms\":17000000").unwrap();
        drop(f);

        let mut reader = Store::open_read_only(dir.path()).unwrap();
        assert_eq!(reader.query_rectangles(0, i64::MAX).unwrap(), recs);
        assert!(fs::metadata(&seg_path).unwrap().len() > full);

        let mut writer = Store::open(dir.path()).unwrap();
        assert_eq!(fs::metadata(&seg_path).unwrap().len(), full);
        writer.append_rectangles(&[rect_record(T0 + 2, 3.0)]).unwrap();
        assert_eq!(writer.query_rectangles(0, i64::MAX).unwrap().len(), 3);
        // The reader catches up on the next query.
        assert_eq!(reader.query_rectangles(0, i64::MAX).unwrap().len(), 3);
    }

    #[test]
    fn corrupt_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let rect_dir = dir.path().join("rectangles");
        fs::create_dir_all(&rect_dir).unwrap();
        fs::write(rect_dir.join("2023-11-14.ndjson"), "not json\n").unwrap();
        assert!(matches!(Store::open(dir.path()), Err(StoreError::Corrupt { .. })));
    }

    fn det(cam: u8, ts: i64) -> DetectionRecord {
        DetectionRecord {
            camera_id: cam,
            timestamp_ms: ts,
            polygons: vec![vec![Point2::new(0.1, 0.2), Point2::new(10.123456789, 0.0), Point2::new(5.0, 7.5)]],
        }
    }

    #[test]
    fn detections_mirror_rectangles() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Store::open(dir.path()).unwrap();
        assert!(s.query_detections(0, i64::MAX).unwrap().is_empty());
        let recs = vec![det(0, T0), det(1, T0 + 3), det(2, T0 + 3)];
        s.append_detections(&recs).unwrap();
        assert_eq!(s.query_detections(T0, T0 + 4).unwrap(), recs);
        assert_eq!(s.query_detections(T0 + 3, T0 + 4).unwrap(), recs[1..].to_vec());

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut more: Vec<_> = (0..500).map(|_| det(rng.random_range(0..4), T0 + rng.random_range(0..DAY * 2))).collect();
        more.sort_by_key(|r| r.timestamp_ms);
        s.append_detections(&more).unwrap();
        let mut all = recs;
        all.extend(more);
        all.sort_by_key(|r| r.timestamp_ms);
        let mut s = Store::open(dir.path()).unwrap();
        assert_eq!(s.query_detections(i64::MIN, i64::MAX).unwrap(), all);
    }

    #[test]
    fn detection_record_format() {
        let text = r#"{"camera_id":2,"timestamp_ms":1700000000123,"polygons":[[[1,2],[3.5,2],[3,4]]]}"#;
        let rec: DetectionRecord = serde_json::from_str(text).unwrap();
        assert_eq!(serde_json::to_string(&rec).unwrap(), r#"{"camera_id":2,"timestamp_ms":1700000000123,"polygons":[[[1.0,2.0],[3.5,2.0],[3.0,4.0]]]}"#);
        let frame = rec.to_frame().unwrap();
        assert_eq!(frame.polygons[0].len(), 3);
        assert_eq!(DetectionRecord::from(&frame), rec);
        let bad = DetectionRecord { polygons: vec![vec![Point2::new(0.0, 0.0), Point2::new(1.0, 1.0)]], ..rec.clone() };
        assert!(bad.to_frame().is_err());
    }

    #[test]
    fn detection_files_per_frame_and_batch() {
        let dir = tempfile::tempdir().unwrap();
        let cam0 = dir.path().join("cam0");
        let p = write_detection_file(&cam0, &det(0, T0)).unwrap();
        assert_eq!(p.file_name().unwrap().to_str().unwrap(), format!("{T0}.json"));
        assert_eq!(read_detection_file(&p).unwrap(), vec![det(0, T0)]);

        let batch = dir.path().join("batch.ndjson");
        let text: String = [det(1, T0), det(2, T0 + 1)].iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect();
        fs::write(&batch, text).unwrap();
        assert_eq!(read_detection_file(&batch).unwrap().len(), 2);
        fs::write(dir.path().join("notes.txt"), "x").unwrap();
        assert_eq!(detection_files(dir.path()).unwrap(), vec![batch, p]);
    }

    #[test]
    fn calibration_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("calibration.json");
        let cal = CalibrationFile {
            cameras: vec![CameraCalibration {
                camera_id: 1,
                homography: Homography::from_rows([[2.0, 0.0, 1.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]]).unwrap(),
                correspondences: 4,
                max_reprojection_error_px: 0.0,
            }],
        };
        cal.save(&path).unwrap();
        assert_eq!(CalibrationFile::load(&path).unwrap(), cal);
        assert!(cal.camera(1).is_some() && cal.camera(0).is_none());
    }
}
