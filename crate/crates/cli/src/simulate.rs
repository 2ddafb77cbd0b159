use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use petmap_core::simulator::{simulate, to_camera_space, SimConfig};
use petmap_core::store::{write_detection_file, CalibrationFile, CameraCalibration, DetectionRecord};
use serde::Serialize;

use crate::{usage, write_file};

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Scenario file (JSON, SimConfig keys). Without one, a four-way
    /// intersection is generated from --vehicles and --duration-s.
    scenario: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "sim")]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 10)]
    vehicles: usize,
    #[arg(long, default_value_t = 60.0)]
    duration_s: f64,
    /// Write polygons in camera pixels plus the matching calibration file.
    #[arg(long)]
    camera_space: bool,
}

#[derive(Serialize)]
struct GroundTruthHeader {
    seed: u64,
    start_ms: i64,
    frame_interval_ms: i64,
    frames: usize,
    vehicles: usize,
}

pub fn run(args: SimulateArgs) -> anyhow::Result<()> {
    let cfg = match &args.scenario {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut cfg: SimConfig =
                serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            cfg
        }
        None => SimConfig::intersection(args.seed.unwrap_or(0), args.vehicles, args.duration_s),
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let out = simulate(&cfg)?;

    let detections = if args.camera_space { to_camera_space(&cfg, &out) } else { out.detections.clone() };
    let mut files = 0;
    for (cam, frames) in cfg.cameras.iter().zip(&detections) {
        let dir = args.out.join("detections").join(format!("cam{}", cam.camera_id));
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        for frame in frames {
            write_detection_file(&dir, &DetectionRecord::from(frame))?;
            files += 1;
        }
    }
    if args.camera_space {
        write_calibration(&cfg, &args.out.join("calibration.json"))?;
    }

    let header = GroundTruthHeader {
        seed: cfg.seed,
        start_ms: cfg.start_ms,
        frame_interval_ms: cfg.frame_interval_ms,
        frames: out.ground_truth.len(),
        vehicles: cfg.vehicles.len(),
    };
    let mut gt = Vec::new();
    serde_json::to_writer(&mut gt, &header)?;
    gt.push(b'\n');
    for frame in &out.ground_truth {
        serde_json::to_writer(&mut gt, frame)?;
        gt.push(b'\n');
    }
    write_file(&args.out.join("ground_truth.ndjson"), &gt)?;
    write_file(&args.out.join("scenario.json"), serde_json::to_string_pretty(&cfg)? + "\n")?;

    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "frames: {} ({} vehicles, seed {})", out.ground_truth.len(), cfg.vehicles.len(), cfg.seed)?;
    writeln!(stdout, "detection files: {files}")?;
    writeln!(stdout, "output: {}", args.out.display())?;
    Ok(())
}

/// Camera-to-grid homographies that undo the simulator's projection.
fn write_calibration(cfg: &SimConfig, path: &Path) -> anyhow::Result<()> {
    let cameras = cfg
        .cameras
        .iter()
        .map(|c| {
            Ok(CameraCalibration {
                camera_id: c.camera_id,
                homography: c.world_to_camera.inverse()?,
                correspondences: 0,
                max_reprojection_error_px: 0.0,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    CalibrationFile { cameras }.save(path)?;
    Ok(())
}
