//! Fusion of a synchronized frame group into vehicle rectangles.
//!
//! Each camera's polygons are rasterized onto the global grid and summed into
//! a per-pixel camera count. Counts are scored with the point-value table,
//! pixels seen by enough cameras form the high-overlap mask, and each outer
//! contour of that mask yields one minimum-area rectangle. The rectangles then
//! pass through the snap, extend and split safeguards.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{extract_contours, fill_spans, min_area_rect, BinaryMask, Point2, Polygon, RotatedRect, Window};
use crate::matrix::Matrix;
use crate::sync::FrameGroup;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("invalid fusion config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    /// Score for a pixel seen by 1, 2, 3 and 4 cameras.
    pub point_values: [f64; 4],
    pub high_overlap_min: u8,
    pub snap_angle_tol_deg: f64,
    pub snap_aspect_min: f64,
    pub edge_margin_px: f64,
    pub edge_extend_px: f64,
    pub split_area_px: f64,
    pub split_valley_ratio: f64,
    pub min_rect_area_px: f64,
    pub min_mean_score: f64,
}

/// 4.6 m x 1.8 m car footprint at the default 3.275 cm/px, in px².
const CAR_FOOTPRINT_PX: f64 = (4.6 / 0.03275) * (1.8 / 0.03275);

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            point_values: [1.0, 2.0, 6.0, 8.0],
            high_overlap_min: 3,
            snap_angle_tol_deg: 5.0,
            snap_aspect_min: 1.5,
            edge_margin_px: 10.0,
            edge_extend_px: 60.0,
            split_area_px: (2.2 * CAR_FOOTPRINT_PX).round(),
            split_valley_ratio: 0.5,
            min_rect_area_px: 1500.0,
            min_mean_score: 4.0,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        let bad = |msg: &str| Err(FusionError::InvalidConfig(msg.to_string()));
        if !(2..=4).contains(&self.high_overlap_min) {
            return bad("high_overlap_min must be 2, 3 or 4");
        }
        if self.point_values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("point_values must be finite and non-negative");
        }
        let positive = [
            ("snap_angle_tol_deg", self.snap_angle_tol_deg),
            ("snap_aspect_min", self.snap_aspect_min),
            ("edge_margin_px", self.edge_margin_px),
            ("edge_extend_px", self.edge_extend_px),
            ("split_area_px", self.split_area_px),
            ("split_valley_ratio", self.split_valley_ratio),
            ("min_rect_area_px", self.min_rect_area_px),
            ("min_mean_score", self.min_mean_score),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(FusionError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.snap_angle_tol_deg >= 45.0 {
            return bad("snap_angle_tol_deg must be below 45");
        }
        // An extended rectangle must end up beyond the margin band, or a second pass
        // would extend it again.
        if self.edge_extend_px * std::f64::consts::FRAC_1_SQRT_2 <= 2.0 * self.edge_margin_px {
            return bad("edge_extend_px must exceed 2*sqrt(2) * edge_margin_px");
        }
        Ok(())
    }

    fn score_table(&self) -> [f64; 5] {
        let [a, b, c, d] = self.point_values;
        [0.0, a, b, c, d]
    }
}

/// Per-pixel camera counts for one frame group.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapGrid {
    width: usize,
    height: usize,
    counts: Vec<u8>,
    table: [f64; 5],
    timestamp_ms: i64,
    camera_support: usize,
}

impl OverlapGrid {
    pub fn new(width: usize, height: usize, point_values: [f64; 4]) -> Self {
        let [a, b, c, d] = point_values;
        Self {
            width,
            height,
            counts: vec![0; width * height],
            table: [0.0, a, b, c, d],
            timestamp_ms: 0,
            camera_support: 0,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn timestamp_ms(&self) -> i64 {
        self.timestamp_ms
    }

    pub fn camera_support(&self) -> usize {
        self.camera_support
    }

    pub fn count(&self, col: usize, row: usize) -> u8 {
        self.counts[row * self.width + col]
    }

    pub fn score(&self, col: usize, row: usize) -> f64 {
        self.table[self.count(col, row) as usize]
    }

    pub fn point_value(&self, count: u8) -> f64 {
        self.table[count.min(4) as usize]
    }

    pub fn counts(&self) -> &[u8] {
        &self.counts
    }

    pub fn scores(&self) -> Matrix<f64> {
        let data = self.counts.iter().map(|&c| self.table[c as usize]).collect();
        Matrix::from_vec(self.width, self.height, data).expect("dimensions match")
    }

    /// Adds one camera's coverage. Pixels covered by several of its polygons
    /// still count once.
    pub fn add_camera(&mut self, polygons: &[Polygon]) {
        let mut spans: Vec<(usize, usize, usize)> = Vec::new();
        let win = Window::grid(self.width, self.height);
        for poly in polygons {
            fill_spans(poly.vertices(), win, |row, c0, c1| spans.push((row, c0, c1)));
        }
        spans.sort_unstable();
        let mut i = 0;
        while i < spans.len() {
            let (row, start, mut end) = spans[i];
            i += 1;
            while i < spans.len() && spans[i].0 == row && spans[i].1 <= end {
                end = end.max(spans[i].2);
                i += 1;
            }
            let base = row * self.width;
            for c in &mut self.counts[base + start..base + end] {
                *c = c.saturating_add(1).min(4);
            }
        }
    }

    /// Mean score over the grid pixels whose centers fall inside `rect`, with
    /// the number of such pixels.
    pub fn mean_score_in(&self, rect: &RotatedRect) -> (f64, usize) {
        let mut sum = 0.0;
        let mut n = 0usize;
        fill_spans(&rect.corners(), Window::grid(self.width, self.height), |row, c0, c1| {
            let base = row * self.width;
            for &c in &self.counts[base + c0..base + c1] {
                sum += self.table[c as usize];
            }
            n += c1 - c0;
        });
        if n == 0 {
            (0.0, 0)
        } else {
            (sum / n as f64, n)
        }
    }
}

/// A fused vehicle footprint at one group timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FittedRectangle {
    pub rect: RotatedRect,
    pub timestamp_ms: i64,
    pub camera_support: usize,
    pub mean_score: f64,
}

impl FittedRectangle {
    pub fn corners(&self) -> [Point2; 4] {
        self.rect.corners()
    }
}

pub fn build_overlap_grid(group: &FrameGroup, width: usize, height: usize, cfg: &FusionConfig) -> OverlapGrid {
    let mut grid = OverlapGrid::new(width, height, cfg.point_values);
    debug_assert_eq!(grid.table, cfg.score_table());
    for frame in group.frames() {
        grid.add_camera(&frame.polygons);
    }
    grid.timestamp_ms = group.timestamp_ms();
    grid.camera_support = group.camera_support();
    grid
}

pub fn high_overlap_mask(grid: &OverlapGrid, min_count: u8) -> BinaryMask {
    let bits = grid.counts.iter().map(|&c| c >= min_count).collect();
    BinaryMask::from_bits(grid.width, grid.height, bits).expect("dimensions match")
}

/// Rectangles for every high-overlap component that survives the safeguards and
/// the area and mean-score acceptance, largest first.
pub fn fit_rectangles(grid: &OverlapGrid, cfg: &FusionConfig) -> Vec<FittedRectangle> {
    let mask = high_overlap_mask(grid, cfg.high_overlap_min);
    let mut out = Vec::new();
    for contour in extract_contours(&mask) {
        let Ok(rect) = min_area_rect(contour.vertices()) else {
            continue;
        };
        if !accepted(grid, &rect, cfg).is_some() {
            continue;
        }
        for r in apply_safeguards(&rect, grid, cfg) {
            if let Some(mean_score) = accepted(grid, &r, cfg) {
                out.push(FittedRectangle {
                    rect: r,
                    timestamp_ms: grid.timestamp_ms,
                    camera_support: grid.camera_support,
                    mean_score,
                });
            }
        }
    }
    out.sort_by(|a, b| {
        b.rect
            .area()
            .total_cmp(&a.rect.area())
            .then(a.rect.center.x.total_cmp(&b.rect.center.x))
            .then(a.rect.center.y.total_cmp(&b.rect.center.y))
    });
    out
}

fn accepted(grid: &OverlapGrid, rect: &RotatedRect, cfg: &FusionConfig) -> Option<f64> {
    if rect.area() < cfg.min_rect_area_px {
        return None;
    }
    let (mean, n) = grid.mean_score_in(rect);
    (n > 0 && mean >= cfg.min_mean_score).then_some(mean)
}

/// Overlap grid and rectangle fitting for one group.
pub fn fuse_group(group: &FrameGroup, width: usize, height: usize, cfg: &FusionConfig) -> Vec<FittedRectangle> {
    let grid = build_overlap_grid(group, width, height, cfg);
    fit_rectangles(&grid, cfg)
}

/// Snap, extend, snap again on the extended shape, then split.
pub fn apply_safeguards(rect: &RotatedRect, grid: &OverlapGrid, cfg: &FusionConfig) -> Vec<RotatedRect> {
    safeguard(*rect, grid, cfg, 0)
}

fn safeguard(rect: RotatedRect, grid: &OverlapGrid, cfg: &FusionConfig, depth: u32) -> Vec<RotatedRect> {
    let rect = snap(rect, cfg);
    let rect = snap(extend(rect, grid.width as f64, grid.height as f64, cfg), cfg);
    if depth == 0 && rect.area() > cfg.split_area_px {
        if let Some(children) = split(&rect, grid, cfg) {
            return children.into_iter().flat_map(|c| safeguard(c, grid, cfg, depth + 1)).collect();
        }
    }
    vec![rect]
}

pub fn snap(rect: RotatedRect, cfg: &FusionConfig) -> RotatedRect {
    let a = rect.angle_deg;
    let near_zero = a <= cfg.snap_angle_tol_deg;
    let near_ninety = 90.0 - a <= cfg.snap_angle_tol_deg;
    if !(near_zero || near_ninety) || rect.aspect_ratio() < cfg.snap_aspect_min || rect.area() < cfg.min_rect_area_px {
        return rect;
    }
    let target = if near_zero { 0.0 } else { 90.0 };
    RotatedRect::new(rect.center, rect.width, rect.height, target)
}

/// Lengthens a rectangle that reaches the grid border by `edge_extend_px`
/// along its long axis, toward the border.
pub fn extend(rect: RotatedRect, width: f64, height: f64, cfg: &FusionConfig) -> RotatedRect {
    let corners = rect.corners();
    // Signed distance of the nearest corner to each border, positive inside,
    // with that border's outward normal.
    let borders = [
        (corners.iter().map(|c| c.x).fold(f64::INFINITY, f64::min), Point2::new(-1.0, 0.0)),
        (corners.iter().map(|c| width - c.x).fold(f64::INFINITY, f64::min), Point2::new(1.0, 0.0)),
        (corners.iter().map(|c| c.y).fold(f64::INFINITY, f64::min), Point2::new(0.0, -1.0)),
        (corners.iter().map(|c| height - c.y).fold(f64::INFINITY, f64::min), Point2::new(0.0, 1.0)),
    ];
    let (d, normal) = borders
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("four borders");
    if d <= -cfg.edge_margin_px || d >= cfg.edge_margin_px {
        return rect;
    }
    let axis = rect.long_axis();
    let along = axis.dot(normal);
    if along.abs() < std::f64::consts::FRAC_1_SQRT_2 - 1e-12 {
        return rect;
    }
    let dir = if along > 0.0 { axis } else { Point2::new(-axis.x, -axis.y) };
    let shift = 0.5 * cfg.edge_extend_px;
    let center = Point2::new(rect.center.x + shift * dir.x, rect.center.y + shift * dir.y);
    let (w, h) = if rect.width >= rect.height {
        (rect.width + cfg.edge_extend_px, rect.height)
    } else {
        (rect.width, rect.height + cfg.edge_extend_px)
    };
    RotatedRect::new(center, w, h, rect.angle_deg)
}

struct Valley {
    along_width: bool,
    cut: f64,
    depth: f64,
}

/// Per-bin mean score along one rectangle axis, 1 px per bin.
fn score_profile(rect: &RotatedRect, grid: &OverlapGrid, along_width: bool) -> Option<Valley> {
    let extent = if along_width { rect.width } else { rect.height };
    let bins = extent.ceil().max(1.0) as usize;
    let mut sums = vec![0.0; bins];
    let mut counts = vec![0usize; bins];
    let (mut total, mut n) = (0.0, 0usize);
    for_pixels_in(rect, grid, |col, row, local| {
        let coord = if along_width { local.0 } else { local.1 };
        let bin = ((coord + 0.5 * extent).floor().max(0.0) as usize).min(bins - 1);
        let s = grid.score(col, row);
        sums[bin] += s;
        counts[bin] += 1;
        total += s;
        n += 1;
    });
    if n == 0 || total <= 0.0 {
        return None;
    }
    let overall = total / n as f64;
    let (lo, hi) = (0.25 * extent, 0.75 * extent);
    let mut best: Option<(usize, f64)> = None;
    for i in 0..bins {
        let mid = i as f64 + 0.5;
        if mid < lo || mid > hi || counts[i] == 0 {
            continue;
        }
        let mean = sums[i] / counts[i] as f64;
        if best.is_none_or(|(_, m)| mean < m) {
            best = Some((i, mean));
        }
    }
    let (bin, mean) = best?;
    Some(Valley { along_width, cut: bin as f64 + 0.5 - 0.5 * extent, depth: mean / overall })
}

fn for_pixels_in(rect: &RotatedRect, grid: &OverlapGrid, mut f: impl FnMut(usize, usize, (f64, f64))) {
    fill_spans(&rect.corners(), Window::grid(grid.width, grid.height), |row, c0, c1| {
        for col in c0..c1 {
            let p = Point2::new(col as f64 + 0.5, row as f64 + 0.5);
            f(col, row, rect.local(p));
        }
    });
}

/// Splits at the deepest score valley of either axis, re-fitting each half to
/// its high-overlap pixels.
fn split(rect: &RotatedRect, grid: &OverlapGrid, cfg: &FusionConfig) -> Option<Vec<RotatedRect>> {
    let valley = [score_profile(rect, grid, true), score_profile(rect, grid, false)]
        .into_iter()
        .flatten()
        .filter(|v| v.depth < cfg.split_valley_ratio)
        .min_by(|a, b| a.depth.total_cmp(&b.depth))?;
    let mut halves: [Vec<Point2>; 2] = [Vec::new(), Vec::new()];
    for_pixels_in(rect, grid, |col, row, local| {
        if grid.count(col, row) < cfg.high_overlap_min {
            return;
        }
        let coord = if valley.along_width { local.0 } else { local.1 };
        let side = usize::from(coord >= valley.cut);
        let (x, y) = (col as f64, row as f64);
        halves[side].extend([
            Point2::new(x, y),
            Point2::new(x + 1.0, y),
            Point2::new(x + 1.0, y + 1.0),
            Point2::new(x, y + 1.0),
        ]);
    });
    let children: Vec<RotatedRect> = halves.iter().filter_map(|pts| min_area_rect(pts).ok()).collect();
    (children.len() == 2).then_some(children)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::point_in_polygon;
    use crate::sync::DetectionFrame;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rect_poly(x0: f64, y0: f64, x1: f64, y1: f64) -> Polygon {
        RotatedRect::axis_aligned(x0, y0, x1, y1).to_polygon()
    }

    fn group(per_camera: Vec<Vec<Polygon>>) -> FrameGroup {
        let frames = per_camera
            .into_iter()
            .enumerate()
            .map(|(i, polys)| DetectionFrame::new(i as u8, 1000 + i as i64, polys).unwrap())
            .collect();
        FrameGroup::from_frames(frames).unwrap()
    }

    fn grid_from_counts(width: usize, height: usize, cells: &[(usize, usize, usize, usize, u8)]) -> OverlapGrid {
        let mut g = OverlapGrid::new(width, height, FusionConfig::default().point_values);
        for &(x0, y0, x1, y1, c) in cells {
            for r in y0..y1 {
                for col in x0..x1 {
                    g.counts[r * width + col] = c;
                }
            }
        }
        g.camera_support = 4;
        g
    }

    #[test]
    fn default_config_is_valid() {
        let cfg = FusionConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.split_area_px, 16984.0);
        let bad = FusionConfig { edge_extend_px: 20.0, ..Default::default() };
        assert!(bad.validate().is_err());
        assert!(FusionConfig { high_overlap_min: 1, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn no_polygons_gives_zero_grid() {
        let g = build_overlap_grid(&group(vec![vec![], vec![], vec![]]), 50, 40, &FusionConfig::default());
        assert!(g.counts().iter().all(|&c| c == 0));
        assert!(g.scores().data().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn four_cameras_same_square_score_eight() {
        let sq = rect_poly(10.0, 10.0, 20.0, 20.0);
        let g = build_overlap_grid(&group(vec![vec![sq.clone()]; 4]), 40, 40, &FusionConfig::default());
        let fours = g.counts().iter().filter(|&&c| c == 4).count();
        assert_eq!(fours, 100);
        assert_eq!(g.counts().iter().filter(|&&c| c > 0).count(), 100);
        assert_eq!(g.score(15, 15), 8.0);
    }

    #[test]
    fn point_values_exact() {
        let g = OverlapGrid::new(1, 1, FusionConfig::default().point_values);
        let got: Vec<f64> = (0..=4).map(|c| g.point_value(c)).collect();
        assert_eq!(got, vec![0.0, 1.0, 2.0, 6.0, 8.0]);
        let custom = OverlapGrid::new(1, 1, [3.0, 5.0, 7.0, 11.0]);
        assert_eq!(custom.point_value(3), 7.0);
    }

    #[test]
    fn own_overlaps_count_once() {
        let a = rect_poly(0.0, 0.0, 10.0, 10.0);
        let b = rect_poly(5.0, 5.0, 15.0, 15.0);
        let g = build_overlap_grid(&group(vec![vec![a, b]]), 20, 20, &FusionConfig::default());
        assert_eq!(g.count(7, 7), 1);
        assert_eq!(g.counts().iter().filter(|&&c| c == 1).count(), 175);
    }

    fn random_polygons(rng: &mut ChaCha8Rng, n: usize) -> Vec<Polygon> {
        (0..n)
            .map(|_| {
                let (cx, cy) = (rng.random_range(-5.0..65.0), rng.random_range(-5.0..55.0));
                let pts: Vec<Point2> = (0..6)
                    .map(|_| Point2::new(cx + rng.random_range(-12.0..12.0), cy + rng.random_range(-12.0..12.0)))
                    .collect();
                crate::geometry::convex_hull(&pts).unwrap()
            })
            .collect()
    }

    #[test]
    fn counts_match_per_pixel_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let cams: Vec<Vec<Polygon>> = (0..4).map(|_| random_polygons(&mut rng, 3)).collect();
            let g = build_overlap_grid(&group(cams.clone()), 60, 50, &FusionConfig::default());
            for row in 0..50 {
                for col in 0..60 {
                    let c = Point2::new(col as f64 + 0.5, row as f64 + 0.5);
                    let expect = cams
                        .iter()
                        .filter(|polys| polys.iter().any(|p| point_in_polygon(p.vertices(), c)))
                        .count() as u8;
                    assert_eq!(g.count(col, row), expect);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn camera_order_does_not_matter(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cams: Vec<Vec<Polygon>> = (0..4).map(|_| random_polygons(&mut rng, 2)).collect();
            let a = build_overlap_grid(&group(cams.clone()), 60, 50, &FusionConfig::default());
            let mut shuffled = cams;
            shuffled.shuffle(&mut rng);
            let b = build_overlap_grid(&group(shuffled), 60, 50, &FusionConfig::default());
            prop_assert_eq!(a.counts(), b.counts());
        }
    }

    #[test]
    fn high_overlap_threshold() {
        let g = grid_from_counts(30, 10, &[(0, 0, 10, 10, 2), (10, 0, 20, 10, 3), (20, 0, 30, 10, 4)]);
        let m = high_overlap_mask(&g, 3);
        assert_eq!(m.count_ones(), 200);
        assert!(!m.get(5, 5) && m.get(15, 5) && m.get(25, 5));
        assert!(high_overlap_mask(&grid_from_counts(5, 5, &[]), 3).is_empty());

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut g = OverlapGrid::new(40, 40, [1.0, 2.0, 6.0, 8.0]);
        for c in g.counts.iter_mut() {
            *c = rng.random_range(0..=4);
        }
        for k in 1..=4 {
            let m = high_overlap_mask(&g, k);
            assert!(m.bits().iter().zip(g.counts()).all(|(&b, &c)| b == (c >= k)));
        }
    }

    fn small_cfg() -> FusionConfig {
        FusionConfig { min_rect_area_px: 100.0, ..Default::default() }
    }

    #[test]
    fn single_blob_gives_one_rectangle() {
        let g = grid_from_counts(100, 100, &[(30, 40, 70, 60, 4)]);
        let rects = fit_rectangles(&g, &small_cfg());
        assert_eq!(rects.len(), 1);
        let r = rects[0].rect;
        assert!((r.width - 40.0).abs() < 1e-6 && (r.height - 20.0).abs() < 1e-6);
        assert_eq!(r.angle_deg, 0.0);
        assert!((rects[0].mean_score - 8.0).abs() < 1e-9);
        let covered = (30..70).flat_map(|c| (40..60).map(move |r| (c, r)))
            .filter(|&(c, rr)| r.contains(Point2::new(c as f64 + 0.5, rr as f64 + 0.5), 1e-9))
            .count();
        assert!(covered as f64 >= 0.95 * 800.0);
        assert!(r.area() <= 1.1 * 800.0);
    }

    #[test]
    fn low_overlap_blob_is_ignored() {
        let g = grid_from_counts(100, 100, &[(30, 40, 70, 60, 2)]);
        assert!(fit_rectangles(&g, &small_cfg()).is_empty());
    }

    #[test]
    fn disjoint_blobs_give_one_rectangle_each() {
        let g = grid_from_counts(120, 100, &[(20, 20, 60, 40, 4), (70, 50, 100, 90, 3)]);
        let rects = fit_rectangles(&g, &small_cfg());
        assert_eq!(rects.len(), 2);
        // Largest first.
        assert!(rects[0].rect.area() >= rects[1].rect.area());
        assert!((rects[0].rect.center.x - 85.0).abs() < 1e-6);
    }

    #[test]
    fn small_rectangles_rejected() {
        let g = grid_from_counts(100, 100, &[(30, 40, 50, 50, 4)]);
        assert!(fit_rectangles(&g, &FusionConfig::default()).is_empty());
    }

    #[test]
    fn snap_to_axis() {
        let cfg = FusionConfig { snap_angle_tol_deg: 3.0, ..Default::default() };
        let r = RotatedRect::new(Point2::new(500.0, 500.0), 150.0, 60.0, 1.5);
        assert_eq!(snap(r, &cfg).angle_deg, 0.0);
        let r = RotatedRect::new(Point2::new(500.0, 500.0), 150.0, 60.0, 88.0);
        let s = snap(r, &cfg);
        assert_eq!(s.angle_deg, 0.0);
        assert_eq!((s.width, s.height), (60.0, 150.0));
        let square = RotatedRect::new(Point2::new(500.0, 500.0), 100.0, 100.0, 1.0);
        assert_eq!(snap(square, &cfg), square);
        let tilted = RotatedRect::new(Point2::new(500.0, 500.0), 150.0, 60.0, 10.0);
        assert_eq!(snap(tilted, &cfg), tilted);
    }

    #[test]
    fn interior_rectangle_unchanged() {
        let g = OverlapGrid::new(1600, 1600, [1.0, 2.0, 6.0, 8.0]);
        let r = RotatedRect::new(Point2::new(800.0, 800.0), 140.0, 55.0, 30.0);
        assert_eq!(apply_safeguards(&r, &g, &FusionConfig::default()), vec![r]);
    }

    #[test]
    fn border_rectangle_extends_outward() {
        let cfg = FusionConfig::default();
        let r = RotatedRect::axis_aligned(5.0, 100.0, 105.0, 140.0);
        let e = extend(r, 1600.0, 1600.0, &cfg);
        assert_eq!(e.width, 160.0);
        assert_eq!(e.center, Point2::new(25.0, 120.0));
        assert_eq!(extend(e, 1600.0, 1600.0, &cfg), e);
        // Long axis parallel to the border: nothing to infer.
        let along = RotatedRect::axis_aligned(100.0, 3.0, 200.0, 40.0);
        assert_eq!(extend(along, 1600.0, 1600.0, &cfg), along);
    }

    fn two_merged_vehicles() -> OverlapGrid {
        // Two 140x55 cars end to end with a thin 3-camera bridge across the 1 px gap.
        grid_from_counts(
            600,
            400,
            &[(100, 100, 240, 155, 4), (241, 100, 381, 155, 4), (240, 126, 241, 129, 3)],
        )
    }

    #[test]
    fn merged_vehicles_split_at_valley() {
        let g = two_merged_vehicles();
        let cfg = FusionConfig { split_area_px: 12_000.0, ..Default::default() };
        let rects = fit_rectangles(&g, &cfg);
        assert_eq!(rects.len(), 2);
        let mut centers: Vec<Point2> = rects.iter().map(|r| r.rect.center).collect();
        centers.sort_by(|a, b| a.x.total_cmp(&b.x));
        assert!(centers[0].dist(Point2::new(170.0, 127.5)) < 10.0);
        assert!(centers[1].dist(Point2::new(311.0, 127.5)) < 10.0);
        // Default threshold keeps the pair whole.
        assert_eq!(fit_rectangles(&g, &FusionConfig::default()).len(), 1);
    }

    #[test]
    fn accepted_rectangles_have_high_mean_count() {
        let g = two_merged_vehicles();
        for cfg in [FusionConfig::default(), FusionConfig { split_area_px: 12_000.0, ..Default::default() }] {
            for r in fit_rectangles(&g, &cfg) {
                let mut sum = 0.0;
                let mut n = 0.0;
                for_pixels_in(&r.rect, &g, |c, row, _| {
                    sum += g.count(c, row) as f64;
                    n += 1.0;
                });
                assert!(sum / n >= (cfg.high_overlap_min - 1) as f64);
            }
        }
    }

    proptest! {
        #[test]
        fn safeguards_idempotent(
            cx in 0.0f64..1600.0, cy in 0.0f64..1600.0,
            w in 40.0f64..200.0, h in 20.0f64..120.0, angle in 0.0f64..180.0,
        ) {
            let g = OverlapGrid::new(1600, 1600, [1.0, 2.0, 6.0, 8.0]);
            let cfg = FusionConfig::default();
            let r = RotatedRect::new(Point2::new(cx, cy), w, h, angle);
            let once = apply_safeguards(&r, &g, &cfg);
            let twice: Vec<RotatedRect> = once.iter().flat_map(|x| apply_safeguards(x, &g, &cfg)).collect();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn safeguards_idempotent_on_merged_pairs(gap_row in 105usize..150) {
            let mut g = two_merged_vehicles();
            g.counts[gap_row * 600 + 240] = 3;
            let cfg = FusionConfig { split_area_px: 12_000.0, ..Default::default() };
            let rects: Vec<RotatedRect> = fit_rectangles(&g, &cfg).into_iter().map(|r| r.rect).collect();
            for r in &rects {
                prop_assert_eq!(apply_safeguards(r, &g, &cfg), vec![*r]);
            }
        }
    }
}
