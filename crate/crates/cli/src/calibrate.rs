use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Args;
use petmap_core::geometry::{estimate_homography, reprojection_errors, Point2};
use petmap_core::store::{CalibrationFile, CameraCalibration};
use serde::Deserialize;

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    /// CSV with columns camera_id,image_x,image_y,grid_x,grid_y.
    correspondences: PathBuf,
    /// Output calibration file.
    #[arg(long, default_value = "calibration.json")]
    out: PathBuf,
}

#[derive(Debug, Deserialize)]
struct Row {
    camera_id: u8,
    image_x: f64,
    image_y: f64,
    grid_x: f64,
    grid_y: f64,
}

pub fn run(args: CalibrateArgs) -> anyhow::Result<()> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(&args.correspondences)
        .with_context(|| format!("opening {}", args.correspondences.display()))?;
    let mut by_camera: BTreeMap<u8, Vec<(Point2, Point2)>> = BTreeMap::new();
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        let row = row.with_context(|| format!("{}: row {}", args.correspondences.display(), i + 1))?;
        by_camera
            .entry(row.camera_id)
            .or_default()
            .push((Point2::new(row.image_x, row.image_y), Point2::new(row.grid_x, row.grid_y)));
    }
    if by_camera.is_empty() {
        bail!("{} has no correspondences", args.correspondences.display());
    }

    let mut file = CalibrationFile::default();
    for (camera_id, pairs) in by_camera {
        let h = estimate_homography(&pairs).with_context(|| format!("camera {camera_id}"))?;
        let max = reprojection_errors(&h, &pairs)?.into_iter().fold(0.0, f64::max);
        println!("camera {camera_id}: {} points, max reprojection error {max:.4} px", pairs.len());
        file.cameras.push(CameraCalibration {
            camera_id,
            homography: h,
            correspondences: pairs.len(),
            max_reprojection_error_px: max,
        });
    }
    file.save(&args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}
