//! Shared fixtures for the benchmarks.

use petmap_core::geometry::Point2;
use petmap_core::simulator::{simulate, SimConfig};
use petmap_core::store::RectangleRecord;
use petmap_core::sync::{synchronize, FrameGroup};
use petmap_core::{PipelineConfig, RotatedRect};

/// Synchronized groups from a ten-vehicle simulated intersection.
pub fn intersection_groups(seconds: f64) -> Vec<FrameGroup> {
    let sim = SimConfig::intersection(7, 10, seconds);
    let out = simulate(&sim).expect("default scenario is valid");
    let cfg = PipelineConfig::default();
    synchronize(out.all_frames(), cfg.sync_config()).0
}

/// The busiest four-camera group, by total polygon count.
pub fn busiest_group(groups: &[FrameGroup]) -> &FrameGroup {
    groups
        .iter()
        .filter(|g| g.camera_support() == 4)
        .max_by_key(|g| g.frames().iter().map(|f| f.polygons.len()).sum::<usize>())
        .expect("at least one full group")
}

/// `n` points scattered inside a rotated 180 x 80 box, deterministic.
pub fn point_cloud(n: usize) -> Vec<Point2> {
    let rect = RotatedRect::new(Point2::new(400.0, 300.0), 180.0, 80.0, 27.0);
    let (u, v) = rect.axes();
    (0..n)
        .map(|i| {
            // Low-discrepancy offsets in [-0.5, 0.5).
            let a = (i as f64 * 0.618_033_988_75).fract() - 0.5;
            let b = (i as f64 * 0.754_877_666_2).fract() - 0.5;
            Point2::new(
                rect.center.x + a * rect.width * u.x + b * rect.height * v.x,
                rect.center.y + a * rect.width * u.y + b * rect.height * v.y,
            )
        })
        .collect()
}

/// `n` rectangle records 350 ms apart starting at `t0`.
pub fn rectangle_records(t0: i64, n: usize) -> Vec<RectangleRecord> {
    (0..n)
        .map(|i| {
            let rect = RotatedRect::new(Point2::new(200.0 + (i % 500) as f64, 400.0), 160.0, 70.0, 0.0);
            RectangleRecord { timestamp_ms: t0 + 350 * i as i64, corners: rect.corners(), camera_support: 4, mean_score: 7.5 }
        })
        .collect()
}
