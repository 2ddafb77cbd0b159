//! Pipeline-wide configuration and the grid/ROI conventions.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::FusionConfig;
use crate::render::ColorMapSpec;

pub const DEFAULT_GRID: usize = 1600;
pub const DEFAULT_ROI_SIZE: usize = 800;
pub const DEFAULT_WINDOW_MS: i64 = 350;
/// Ground extent covered by the default 800 px ROI side.
pub const DEFAULT_ROI_EXTENT_M: f64 = 26.2;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
}

/// Pixel rectangle on the global grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roi {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Roi {
    /// A `size x size` region centered in a `grid x grid` grid.
    pub fn centered(grid_width: usize, grid_height: usize, width: usize, height: usize) -> Self {
        Self { x: (grid_width.saturating_sub(width)) / 2, y: (grid_height.saturating_sub(height)) / 2, width, height }
    }

    pub fn fits_in(&self, grid_width: usize, grid_height: usize) -> bool {
        self.width > 0 && self.height > 0 && self.x + self.width <= grid_width && self.y + self.height <= grid_height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

impl Default for Roi {
    fn default() -> Self {
        Roi::centered(DEFAULT_GRID, DEFAULT_GRID, DEFAULT_ROI_SIZE, DEFAULT_ROI_SIZE)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Per-camera homographies; when set, detection polygons are taken to be in
    /// camera pixels and projected before fusion.
    pub calibration: Option<PathBuf>,
    pub grid_width: usize,
    pub grid_height: usize,
    pub roi: Roi,
    /// Real-world length of the ROI's horizontal side, in meters.
    pub roi_extent_m: f64,
    pub fusion: FusionConfig,
    pub window_ms: i64,
    pub store: PathBuf,
    pub pet_colormap: Option<ColorMapSpec>,
    pub count_colormap: Option<ColorMapSpec>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            calibration: None,
            grid_width: DEFAULT_GRID,
            grid_height: DEFAULT_GRID,
            roi: Roi::default(),
            roi_extent_m: DEFAULT_ROI_EXTENT_M,
            fusion: FusionConfig::default(),
            window_ms: DEFAULT_WINDOW_MS,
            store: PathBuf::from("store"),
            pet_colormap: None,
            count_colormap: None,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let cfg: Self =
            serde_json::from_str(&text).map_err(|source| ConfigError::Parse { path: path.into(), source })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.grid_width == 0 || self.grid_height == 0 {
            return Err(ConfigError::Invalid("grid dimensions must be positive".into()));
        }
        if !self.roi.fits_in(self.grid_width, self.grid_height) {
            return Err(ConfigError::Invalid(format!("roi {:?} outside {}x{} grid", self.roi, self.grid_width, self.grid_height)));
        }
        if self.window_ms <= 0 {
            return Err(ConfigError::Invalid("window_ms must be positive".into()));
        }
        if !(self.roi_extent_m > 0.0) {
            return Err(ConfigError::Invalid("roi_extent_m must be positive".into()));
        }
        if let Some(path) = &self.calibration {
            if !path.exists() {
                return Err(ConfigError::Invalid(format!("calibration file {} does not exist", path.display())));
            }
        }
        for spec in self.pet_colormap.iter().chain(&self.count_colormap) {
            spec.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        self.fusion.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn meters_per_pixel(&self) -> f64 {
        self.roi_extent_m / self.roi.width as f64
    }

    /// One-line summary of the ground sampling distance.
    pub fn scale_report(&self) -> String {
        format!(
            "scale: {:.3} cm/px ({} px = {:.2} m)",
            self.meters_per_pixel() * 100.0,
            self.roi.width,
            self.roi_extent_m
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_roi_is_centered() {
        let roi = Roi::default();
        assert_eq!((roi.x, roi.y, roi.width, roi.height), (400, 400, 800, 800));
    }

    #[test]
    fn default_scale() {
        let cfg = PipelineConfig::default();
        assert!((cfg.meters_per_pixel() - 0.03275).abs() < 1e-12);
        assert_eq!(cfg.scale_report(), "scale: 3.275 cm/px (800 px = 26.20 m)");
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg: PipelineConfig = serde_json::from_str(r#"{"window_ms": 300}"#).unwrap();
        assert_eq!(cfg.window_ms, 300);
        assert_eq!(cfg.grid_width, 1600);
        cfg.validate().unwrap();
        let bad = PipelineConfig { roi: Roi { x: 1000, y: 0, width: 800, height: 10 }, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
