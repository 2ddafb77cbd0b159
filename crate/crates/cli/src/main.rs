use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use petmap_core::config::{PipelineConfig, Roi};

mod calibrate;
mod fuse;
mod heatmap;
mod pet;
mod query;
mod simulate;

#[derive(Parser, Debug)]
#[command(name = "petmap", version, about = "Multi-camera vehicle fusion and post-encroachment time maps")]
struct Cli {
    /// Log more (repeat for debug output).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate per-camera homographies from a correspondence CSV.
    Calibrate(calibrate::CalibrateArgs),
    /// Generate a synthetic intersection: detection files plus ground truth.
    Simulate(simulate::SimulateArgs),
    /// Synchronize and fuse detection files into rectangles in the store.
    Fuse(fuse::FuseArgs),
    /// Replay stored rectangles into PET maps and heatmaps.
    Pet(pet::PetArgs),
    /// Render a PET or count export as a PNG heatmap.
    Heatmap(heatmap::HeatmapArgs),
    /// Print stored records in a time range as NDJSON.
    Query(query::QueryArgs),
}

/// Bad arguments or configuration, as opposed to a failure while running.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Configuration flags shared by the pipeline commands; flags override the file.
#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// JSON pipeline configuration; missing keys take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Grid size as WIDTHxHEIGHT.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<(usize, usize)>,
    /// Region of interest as X,Y,WIDTH,HEIGHT in grid pixels.
    #[arg(long, value_parser = parse_roi)]
    roi: Option<Roi>,
    /// Synchronization window in milliseconds.
    #[arg(long)]
    window_ms: Option<i64>,
    /// Store directory.
    #[arg(long)]
    store: Option<PathBuf>,
    /// Camera calibration; detections are then read as camera pixels.
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Override any configuration key, e.g. `fusion.split_area_px=12000`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> anyhow::Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path).map_err(|e| usage(e.to_string()))?,
            None => PipelineConfig::default(),
        };
        if let Some((w, h)) = self.grid {
            cfg.grid_width = w;
            cfg.grid_height = h;
            if self.roi.is_none() {
                cfg.roi = Roi::centered(w, h, cfg.roi.width.min(w), cfg.roi.height.min(h));
            }
        }
        if let Some(roi) = self.roi {
            cfg.roi = roi;
        }
        if let Some(w) = self.window_ms {
            cfg.window_ms = w;
        }
        if let Some(s) = &self.store {
            cfg.store = s.clone();
        }
        if let Some(c) = &self.calibration {
            cfg.calibration = Some(c.clone());
        }
        if !self.set.is_empty() {
            cfg = apply_overrides(cfg, &self.set)?;
        }
        cfg.validate().map_err(|e| usage(e.to_string()))?;
        Ok(cfg)
    }
}

fn apply_overrides(cfg: PipelineConfig, sets: &[String]) -> anyhow::Result<PipelineConfig> {
    let mut root = serde_json::to_value(&cfg)?;
    for s in sets {
        let (key, raw) = s.split_once('=').ok_or_else(|| usage(format!("--set expects KEY=VALUE, got {s:?}")))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
        let mut slot = &mut root;
        for part in key.split('.') {
            slot = slot
                .as_object_mut()
                .and_then(|m| m.get_mut(part))
                .ok_or_else(|| usage(format!("unknown configuration key {key:?}")))?;
        }
        *slot = value;
    }
    serde_json::from_value(root).map_err(|e| usage(format!("--set: {e}")))
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WIDTHxHEIGHT")?;
    let w = w.trim().parse().map_err(|_| format!("bad width {w:?}"))?;
    let h = h.trim().parse().map_err(|_| format!("bad height {h:?}"))?;
    Ok((w, h))
}

fn parse_roi(s: &str) -> Result<Roi, String> {
    let v: Vec<usize> = s.split(',').map(|p| p.trim().parse().map_err(|_| format!("bad number {p:?}"))).collect::<Result<_, _>>()?;
    match v[..] {
        [x, y, width, height] => Ok(Roi { x, y, width, height }),
        _ => Err("expected X,Y,WIDTH,HEIGHT".into()),
    }
}

/// Half-open millisecond range from optional bounds.
pub fn time_range(from: Option<i64>, to: Option<i64>) -> anyhow::Result<(i64, i64)> {
    let (t0, t1) = (from.unwrap_or(i64::MIN), to.unwrap_or(i64::MAX));
    if t0 > t1 {
        bail!(UsageError(format!("--from-ms {t0} is after --to-ms {t1}")));
    }
    Ok((t0, t1))
}

pub fn write_file(path: &std::path::Path, bytes: impl AsRef<[u8]>) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Calibrate(a) => calibrate::run(a),
        Command::Simulate(a) => simulate::run(a),
        Command::Fuse(a) => fuse::run(a),
        Command::Pet(a) => pet::run(a),
        Command::Heatmap(a) => heatmap::run(a),
        Command::Query(a) => query::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
