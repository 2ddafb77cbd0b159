//! Synthetic intersection scenes with known ground truth.
//!
//! Vehicles move along straight or circular lanes. Every camera sees the part
//! of each vehicle footprint inside its view polygon and reports it at a
//! possibly jittered timestamp, with vertex noise applied in camera pixels.
//! The oracle computes PET straight from the ground-truth footprints.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Roi;
use crate::geometry::{estimate_homography, project_point, Homography, Point2, Polygon, RotatedRect};
use crate::matrix::Matrix;
use crate::sync::{DetectionFrame, MAX_CAMERAS};

pub const DEFAULT_START_MS: i64 = 1_700_000_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimCamera {
    pub camera_id: u8,
    /// Grid pixels to camera pixels.
    pub world_to_camera: Homography,
    /// Convex region of the grid this camera sees.
    pub view: Vec<Point2>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Lane {
    Straight { from: Point2, to: Point2 },
    /// Circular arc; positive sweep turns toward increasing angle.
    Turn { center: Point2, radius_px: f64, start_deg: f64, sweep_deg: f64 },
}

impl Lane {
    pub fn length_px(&self) -> f64 {
        match self {
            Lane::Straight { from, to } => from.dist(*to),
            Lane::Turn { radius_px, sweep_deg, .. } => radius_px * sweep_deg.abs().to_radians(),
        }
    }

    /// Position and heading (degrees) after `s` pixels of travel.
    pub fn at(&self, s: f64) -> (Point2, f64) {
        match self {
            Lane::Straight { from, to } => {
                let len = from.dist(*to);
                let (dx, dy) = ((to.x - from.x) / len, (to.y - from.y) / len);
                (Point2::new(from.x + s * dx, from.y + s * dy), dy.atan2(dx).to_degrees())
            }
            Lane::Turn { center, radius_px, start_deg, sweep_deg } => {
                let sign = sweep_deg.signum();
                let theta = start_deg.to_radians() + sign * s / radius_px;
                let p = Point2::new(center.x + radius_px * theta.cos(), center.y + radius_px * theta.sin());
                (p, theta.to_degrees() + sign * 90.0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleSpawn {
    pub lane: usize,
    pub entry_s: f64,
    #[serde(default = "default_length")]
    pub length_m: f64,
    #[serde(default = "default_width")]
    pub width_m: f64,
    pub speed_mps: f64,
    #[serde(default)]
    pub accel_mps2: f64,
}

fn default_length() -> f64 {
    4.6
}

fn default_width() -> f64 {
    1.8
}

impl VehicleSpawn {
    /// Distance travelled in meters `tau` seconds after entry.
    pub fn distance_m(&self, tau: f64) -> f64 {
        let (v, a) = (self.speed_mps, self.accel_mps2);
        let tau = if a < 0.0 { tau.min(-v / a) } else { tau };
        v * tau + 0.5 * a * tau * tau
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub vertex_sigma_px: f64,
    pub timestamp_sigma_ms: f64,
    /// Probability that a camera drops a frame, by camera position in `cameras`.
    pub dropout: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    #[serde(default = "default_start")]
    pub start_ms: i64,
    pub duration_s: f64,
    #[serde(default = "default_interval")]
    pub frame_interval_ms: i64,
    #[serde(default = "default_grid")]
    pub grid_width: usize,
    #[serde(default = "default_grid")]
    pub grid_height: usize,
    #[serde(default = "default_mpp")]
    pub meters_per_pixel: f64,
    pub cameras: Vec<SimCamera>,
    pub lanes: Vec<Lane>,
    #[serde(default)]
    pub vehicles: Vec<VehicleSpawn>,
    #[serde(default)]
    pub noise: NoiseConfig,
}

fn default_start() -> i64 {
    DEFAULT_START_MS
}

fn default_interval() -> i64 {
    350
}

fn default_grid() -> usize {
    crate::config::DEFAULT_GRID
}

fn default_mpp() -> f64 {
    crate::config::DEFAULT_ROI_EXTENT_M / crate::config::DEFAULT_ROI_SIZE as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthVehicle {
    pub id: usize,
    pub rect: RotatedRect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthFrame {
    pub timestamp_ms: i64,
    pub vehicles: Vec<GroundTruthVehicle>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub ground_truth: Vec<GroundTruthFrame>,
    /// Frames per camera, in the order of `SimConfig::cameras`.
    pub detections: Vec<Vec<DetectionFrame>>,
}

impl SimOutput {
    pub fn all_frames(&self) -> Vec<DetectionFrame> {
        self.detections.iter().flatten().cloned().collect()
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if self.frame_interval_ms <= 0 {
            return bad("frame_interval_ms must be positive".into());
        }
        if !(self.duration_s.is_finite() && self.duration_s >= 0.0) {
            return bad("duration_s must be a non-negative number".into());
        }
        if self.start_ms <= 0 {
            return bad("start_ms must be positive".into());
        }
        if !(self.meters_per_pixel > 0.0) || self.grid_width == 0 || self.grid_height == 0 {
            return bad("grid and scale must be positive".into());
        }
        if self.cameras.len() > MAX_CAMERAS {
            return bad(format!("at most {MAX_CAMERAS} cameras"));
        }
        for (i, c) in self.cameras.iter().enumerate() {
            if c.camera_id as usize >= MAX_CAMERAS || self.cameras[..i].iter().any(|o| o.camera_id == c.camera_id) {
                return bad(format!("camera id {} invalid or repeated", c.camera_id));
            }
            if !is_convex(&c.view) {
                return bad(format!("camera {} view must be a convex polygon", c.camera_id));
            }
            if c.world_to_camera.inverse().is_err() {
                return bad(format!("camera {} homography is singular", c.camera_id));
            }
        }
        for (i, lane) in self.lanes.iter().enumerate() {
            let ok = match lane {
                Lane::Straight { from, to } => from.is_finite() && to.is_finite() && from.dist(*to) > 0.0,
                Lane::Turn { center, radius_px, start_deg, sweep_deg } => {
                    center.is_finite() && *radius_px > 0.0 && start_deg.is_finite() && sweep_deg.is_finite() && *sweep_deg != 0.0
                }
            };
            if !ok {
                return bad(format!("lane {i} is degenerate"));
            }
        }
        for (i, v) in self.vehicles.iter().enumerate() {
            if v.lane >= self.lanes.len() {
                return bad(format!("vehicle {i} references missing lane {}", v.lane));
            }
            let ok = v.length_m > 0.0 && v.width_m > 0.0 && v.speed_mps >= 0.0 && v.entry_s.is_finite() && v.accel_mps2.is_finite();
            if !ok {
                return bad(format!("vehicle {i} has invalid dimensions or motion"));
            }
        }
        let n = &self.noise;
        if !(n.vertex_sigma_px >= 0.0 && n.timestamp_sigma_ms >= 0.0) {
            return bad("noise sigmas must be non-negative".into());
        }
        if n.dropout.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("dropout probabilities must lie in [0, 1]".into());
        }
        Ok(())
    }

    pub fn frame_timestamps(&self) -> Vec<i64> {
        let total = (self.duration_s * 1000.0).round() as i64;
        (0..).map(|k| k * self.frame_interval_ms).take_while(|&t| t < total).map(|t| self.start_ms + t).collect()
    }

    /// Footprint of vehicle `i` at absolute time `t_ms`, if it is on its lane.
    pub fn vehicle_rect(&self, i: usize, t_ms: i64) -> Option<RotatedRect> {
        let v = &self.vehicles[i];
        let lane = &self.lanes[v.lane];
        let tau = (t_ms - self.start_ms) as f64 / 1000.0 - v.entry_s;
        if tau < 0.0 {
            return None;
        }
        let s = v.distance_m(tau) / self.meters_per_pixel;
        if s > lane.length_px() {
            return None;
        }
        let (center, heading) = lane.at(s);
        let mpp = self.meters_per_pixel;
        Some(RotatedRect::new(center, v.length_m / mpp, v.width_m / mpp, heading))
    }

    /// Four cameras seeing the whole grid through distinct perspective mappings.
    pub fn full_coverage_cameras(width: usize, height: usize) -> Vec<SimCamera> {
        let (w, h) = (width as f64, height as f64);
        let grid = [Point2::new(0.0, 0.0), Point2::new(w, 0.0), Point2::new(w, h), Point2::new(0.0, h)];
        // Image quads for a 1920x1080 sensor looking at the plane from each side.
        let quads = [
            [(300.0, 200.0), (1620.0, 200.0), (1900.0, 1060.0), (20.0, 1060.0)],
            [(1700.0, 150.0), (1850.0, 1000.0), (80.0, 1040.0), (250.0, 120.0)],
            [(1600.0, 1000.0), (200.0, 950.0), (400.0, 100.0), (1500.0, 80.0)],
            [(100.0, 900.0), (150.0, 60.0), (1800.0, 180.0), (1750.0, 1020.0)],
        ];
        quads
            .iter()
            .enumerate()
            .map(|(k, q)| {
                let pairs: Vec<(Point2, Point2)> =
                    grid.iter().zip(q).map(|(g, &(x, y))| (*g, Point2::new(x, y))).collect();
                SimCamera {
                    camera_id: k as u8,
                    world_to_camera: estimate_homography(&pairs).expect("fixed quads are non-degenerate"),
                    view: grid.to_vec(),
                }
            })
            .collect()
    }

    /// A four-way intersection on the default grid: one straight lane per
    /// direction through the center, four full-coverage cameras and `vehicles`
    /// cars with random entry times and speeds, placed so that no two cars ever
    /// touch.
    pub fn intersection(seed: u64, vehicles: usize, duration_s: f64) -> Self {
        let (w, h) = (default_grid(), default_grid());
        let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
        let (near, far) = (100.0, w as f64 - 100.0);
        let lanes = vec![
            Lane::Straight { from: Point2::new(near, cy + 30.0), to: Point2::new(far, cy + 30.0) },
            Lane::Straight { from: Point2::new(far, cy - 30.0), to: Point2::new(near, cy - 30.0) },
            Lane::Straight { from: Point2::new(cx - 30.0, near), to: Point2::new(cx - 30.0, far) },
            Lane::Straight { from: Point2::new(cx + 30.0, far), to: Point2::new(cx + 30.0, near) },
        ];
        let mut cfg = SimConfig {
            seed,
            start_ms: DEFAULT_START_MS,
            duration_s,
            frame_interval_ms: default_interval(),
            grid_width: w,
            grid_height: h,
            meters_per_pixel: default_mpp(),
            cameras: Self::full_coverage_cameras(w, h),
            lanes,
            vehicles: Vec::new(),
            noise: NoiseConfig::default(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_1a4e);
        let times = cfg.frame_timestamps();
        let latest_entry = (duration_s - 5.0).max(0.0);
        for _ in 0..vehicles {
            for _attempt in 0..1000 {
                let spawn = VehicleSpawn {
                    lane: rng.random_range(0..cfg.lanes.len()),
                    entry_s: if latest_entry > 0.0 { rng.random_range(0.0..latest_entry) } else { 0.0 },
                    length_m: rng.random_range(4.2..5.0),
                    width_m: 1.8,
                    speed_mps: rng.random_range(6.0..11.0),
                    accel_mps2: 0.0,
                };
                cfg.vehicles.push(spawn);
                let new = cfg.vehicles.len() - 1;
                let clash = times.iter().any(|&t| {
                    cfg.vehicle_rect(new, t).is_some_and(|a| {
                        (0..new).any(|j| cfg.vehicle_rect(j, t).is_some_and(|b| rects_within(&a, &b, 4.0)))
                    })
                });
                if !clash {
                    break;
                }
                cfg.vehicles.pop();
            }
        }
        if cfg.vehicles.len() < vehicles {
            log::warn!("placed {} of {} vehicles without contact", cfg.vehicles.len(), vehicles);
        }
        cfg
    }
}

fn is_convex(vs: &[Point2]) -> bool {
    let n = vs.len();
    if n < 3 || vs.iter().any(|p| !p.is_finite()) {
        return false;
    }
    let mut sign = 0.0;
    for i in 0..n {
        let c = crate::geometry::cross(vs[i], vs[(i + 1) % n], vs[(i + 2) % n]);
        if c.abs() < 1e-12 {
            continue;
        }
        if sign == 0.0 {
            sign = c.signum();
        } else if c.signum() != sign {
            return false;
        }
    }
    sign != 0.0
}

/// Whether two rectangles come within `gap` pixels of each other (separating axes).
pub fn rects_within(a: &RotatedRect, b: &RotatedRect, gap: f64) -> bool {
    let (ca, cb) = (a.corners(), b.corners());
    let (ua, va) = a.axes();
    let (ub, vb) = b.axes();
    for axis in [ua, va, ub, vb] {
        let proj = |cs: &[Point2; 4]| {
            cs.iter().map(|p| p.x * axis.x + p.y * axis.y).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
        };
        let (alo, ahi) = proj(&ca);
        let (blo, bhi) = proj(&cb);
        if alo > bhi + gap || blo > ahi + gap {
            return false;
        }
    }
    true
}

/// Sutherland-Hodgman clip of `subject` against the convex polygon `clip`.
pub fn clip_convex(subject: &[Point2], clip: &[Point2]) -> Vec<Point2> {
    let n = clip.len();
    let orientation: f64 = (0..n)
        .map(|i| {
            let (a, b) = (clip[i], clip[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
        .signum();
    let mut out = subject.to_vec();
    for i in 0..n {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % n]);
        let side = |p: Point2| orientation * ((b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x));
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let (sc, sp) = (side(cur), side(prev));
            if sc >= 0.0 {
                if sp < 0.0 {
                    out.push(intersect(prev, cur, sp, sc));
                }
                out.push(cur);
            } else if sp >= 0.0 {
                out.push(intersect(prev, cur, sp, sc));
            }
        }
    }
    out
}

fn intersect(p: Point2, q: Point2, sp: f64, sq: f64) -> Point2 {
    let t = sp / (sp - sq);
    Point2::new(p.x + t * (q.x - p.x), p.y + t * (q.y - p.y))
}

pub fn simulate(cfg: &SimConfig) -> Result<SimOutput, SimError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let vertex_noise = Normal::new(0.0, cfg.noise.vertex_sigma_px).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    let time_noise = Normal::new(0.0, cfg.noise.timestamp_sigma_ms).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    let inverses: Vec<Homography> = cfg
        .cameras
        .iter()
        .map(|c| c.world_to_camera.inverse().expect("validated"))
        .collect();

    let mut ground_truth = Vec::new();
    let mut detections: Vec<Vec<DetectionFrame>> = vec![Vec::new(); cfg.cameras.len()];
    let mut last_ts: Vec<i64> = vec![0; cfg.cameras.len()];
    for t in cfg.frame_timestamps() {
        let vehicles: Vec<GroundTruthVehicle> = (0..cfg.vehicles.len())
            .filter_map(|id| cfg.vehicle_rect(id, t).map(|rect| GroundTruthVehicle { id, rect }))
            .collect();
        for (k, cam) in cfg.cameras.iter().enumerate() {
            let dropout = cfg.noise.dropout.get(k).copied().unwrap_or(0.0);
            if dropout > 0.0 && rng.random::<f64>() < dropout {
                continue;
            }
            let jitter = if cfg.noise.timestamp_sigma_ms > 0.0 { time_noise.sample(&mut rng).round() as i64 } else { 0 };
            let ts = (t + jitter).max(last_ts[k] + 1);
            last_ts[k] = ts;
            let mut polygons = Vec::new();
            for v in &vehicles {
                let clipped = clip_convex(&v.rect.corners(), &cam.view);
                if clipped.len() < 3 {
                    continue;
                }
                let observed: Option<Vec<Point2>> = if cfg.noise.vertex_sigma_px > 0.0 {
                    clipped
                        .iter()
                        .map(|&p| {
                            let c = project_point(&cam.world_to_camera, p).ok()?;
                            let noisy = Point2::new(
                                c.x + vertex_noise.sample(&mut rng),
                                c.y + vertex_noise.sample(&mut rng),
                            );
                            project_point(&inverses[k], noisy).ok()
                        })
                        .collect()
                } else {
                    Some(clipped)
                };
                if let Some(poly) = observed.and_then(|vs| Polygon::new(vs).ok()) {
                    polygons.push(poly);
                }
            }
            let frame = DetectionFrame::new(cam.camera_id, ts, polygons)
                .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
            detections[k].push(frame);
        }
        ground_truth.push(GroundTruthFrame { timestamp_ms: t, vehicles });
    }
    Ok(SimOutput { ground_truth, detections })
}

/// The same scene as seen in camera pixels: every polygon mapped through its
/// camera's homography.
pub fn to_camera_space(cfg: &SimConfig, out: &SimOutput) -> Vec<Vec<DetectionFrame>> {
    cfg.cameras
        .iter()
        .zip(&out.detections)
        .map(|(cam, frames)| {
            frames
                .iter()
                .map(|f| {
                    let polygons = f
                        .polygons
                        .iter()
                        .filter_map(|p| crate::geometry::project_polygon(&cam.world_to_camera, p).ok())
                        .collect();
                    DetectionFrame { polygons, ..f.clone() }
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OraclePet {
    pub mean: Matrix<Option<f64>>,
    pub counts: Matrix<u32>,
}

/// PET from ground-truth timelines. A pixel's interval runs from the last frame
/// in which it was covered to the last frame in which it was still vacant, and
/// counts only if the pixel had been covered before and the interval is at
/// least `min_interval_ms`.
pub fn oracle_pet(frames: &[GroundTruthFrame], roi: Roi, min_interval_ms: i64) -> OraclePet {
    let n = roi.pixel_count();
    let mut last_covered: Vec<Option<i64>> = vec![None; n];
    let mut last_vacant: Vec<Option<i64>> = vec![None; n];
    let mut sum: Vec<i64> = vec![0; n];
    let mut count: Vec<u32> = vec![0; n];
    let mut covered = vec![false; n];
    for frame in frames {
        covered.fill(false);
        for v in &frame.vehicles {
            mark_covered(&v.rect, roi, &mut covered);
        }
        for i in 0..n {
            if covered[i] {
                if let (Some(lc), Some(lv)) = (last_covered[i], last_vacant[i]) {
                    let gap = lv - lc;
                    if gap >= min_interval_ms {
                        sum[i] += gap;
                        count[i] += 1;
                    }
                }
                last_covered[i] = Some(frame.timestamp_ms);
                last_vacant[i] = None;
            } else if last_covered[i].is_some() {
                last_vacant[i] = Some(frame.timestamp_ms);
            }
        }
    }
    let mean = sum
        .iter()
        .zip(&count)
        .map(|(&s, &c)| (c > 0).then(|| s as f64 / c as f64 / 1000.0))
        .collect();
    OraclePet {
        mean: Matrix::from_vec(roi.width, roi.height, mean).expect("dimensions match"),
        counts: Matrix::from_vec(roi.width, roi.height, count).expect("dimensions match"),
    }
}

/// Marks ROI pixels whose centers fall in `rect`, testing each center in the
/// rectangle's own frame: `[-w/2, w/2) x [-h/2, h/2)`.
fn mark_covered(rect: &RotatedRect, roi: Roi, covered: &mut [bool]) {
    let (lo, hi) = rect.to_polygon().bounds();
    let c0 = (lo.x.floor() as i64 - roi.x as i64).max(0) as usize;
    let r0 = (lo.y.floor() as i64 - roi.y as i64).max(0) as usize;
    let c1 = ((hi.x.ceil() as i64 - roi.x as i64 + 1).max(0) as usize).min(roi.width);
    let r1 = ((hi.y.ceil() as i64 - roi.y as i64 + 1).max(0) as usize).min(roi.height);
    let (hw, hh) = (0.5 * rect.width, 0.5 * rect.height);
    for row in r0..r1 {
        for col in c0..c1 {
            let p = Point2::new((roi.x + col) as f64 + 0.5, (roi.y + row) as f64 + 0.5);
            let (a, b) = rect.local(p);
            if -hw <= a && a < hw && -hh <= b && b < hh {
                covered[row * roi.width + col] = true;
            }
        }
    }
}
