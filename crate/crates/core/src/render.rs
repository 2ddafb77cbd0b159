//! Colormapped rendering of PET and count matrices.

use std::io::Cursor;

use image::{ImageEncoder, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;
use crate::pet::MIN_INTERVAL_MS;

pub type Rgb = [u8; 3];

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("invalid colormap domain [{0}, {1}]")]
    InvalidDomain(f64, f64),
    #[error("image dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("empty matrix")]
    Empty,
    #[error("image codec: {0}")]
    Codec(#[from] image::ImageError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorMapKind {
    #[serde(alias = "logarithmic")]
    Log,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorMapSpec {
    pub kind: ColorMapKind,
    pub low_color: Rgb,
    pub high_color: Rgb,
    pub absent_color: Rgb,
    /// `[min, max]` in data units; derived from the data when absent.
    #[serde(default)]
    pub domain: Option<[f64; 2]>,
}

impl ColorMapSpec {
    /// Red for short (hazardous) intervals fading to white for long ones.
    pub fn pet_default() -> Self {
        Self {
            kind: ColorMapKind::Log,
            low_color: [255, 0, 0],
            high_color: [255, 255, 255],
            absent_color: [0, 0, 0],
            domain: None,
        }
    }

    /// White for few events, red for many.
    pub fn count_default() -> Self {
        Self {
            kind: ColorMapKind::Linear,
            low_color: [255, 255, 255],
            high_color: [255, 0, 0],
            absent_color: [0, 0, 0],
            domain: None,
        }
    }

    pub fn validate(&self) -> Result<(), RenderError> {
        match self.domain {
            Some([lo, hi]) => check_domain(self.kind, lo, hi),
            None => Ok(()),
        }
    }

    /// This spec with its domain fixed, deriving it from `values` if unset.
    pub fn resolved<'a>(&self, values: impl IntoIterator<Item = &'a Option<f64>>) -> Result<Self, RenderError> {
        let [lo, hi] = match self.domain {
            Some(d) => d,
            None => auto_domain(self.kind, values),
        };
        check_domain(self.kind, lo, hi)?;
        Ok(Self { domain: Some([lo, hi]), ..self.clone() })
    }

    /// Interpolation parameter in `[0, 1]` for a present value. The domain must be set.
    pub fn param(&self, v: f64) -> f64 {
        let [lo, hi] = self.domain.expect("resolved colormap");
        let v = v.clamp(lo, hi);
        let t = match self.kind {
            ColorMapKind::Linear => (v - lo) / (hi - lo),
            ColorMapKind::Log => (v.ln() - lo.ln()) / (hi.ln() - lo.ln()),
        };
        t.clamp(0.0, 1.0)
    }

    pub fn color(&self, v: Option<f64>) -> Rgb {
        match v {
            Some(v) if !v.is_nan() => lerp(self.low_color, self.high_color, self.param(v)),
            _ => self.absent_color,
        }
    }
}

fn check_domain(kind: ColorMapKind, lo: f64, hi: f64) -> Result<(), RenderError> {
    let ok = lo.is_finite() && hi.is_finite() && lo < hi && (kind == ColorMapKind::Linear || lo > 0.0);
    if ok {
        Ok(())
    } else {
        Err(RenderError::InvalidDomain(lo, hi))
    }
}

fn lerp(a: Rgb, b: Rgb, t: f64) -> Rgb {
    std::array::from_fn(|i| (a[i] as f64 + t * (b[i] as f64 - a[i] as f64)).round() as u8)
}

/// Log maps span the minimum loggable interval up to the 99th percentile;
/// linear maps start at the smallest value.
pub fn auto_domain<'a>(kind: ColorMapKind, values: impl IntoIterator<Item = &'a Option<f64>>) -> [f64; 2] {
    let mut present: Vec<f64> = values.into_iter().flatten().copied().filter(|v| v.is_finite()).collect();
    present.sort_by(f64::total_cmp);
    let lo = match kind {
        ColorMapKind::Log => MIN_INTERVAL_MS as f64 / 1000.0,
        ColorMapKind::Linear => present.first().copied().unwrap_or(0.0),
    };
    let p99 = if present.is_empty() {
        lo
    } else {
        let rank = ((0.99 * present.len() as f64).ceil() as usize).clamp(1, present.len());
        present[rank - 1]
    };
    let hi = if p99 > lo {
        p99
    } else {
        match kind {
            ColorMapKind::Log => lo * 10.0,
            ColorMapKind::Linear => lo + 1.0,
        }
    };
    [lo, hi]
}

/// Row-major RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Rgb>,
    /// Pixels of exactly this color are skipped when compositing.
    pub transparent_key: Option<Rgb>,
}

impl RasterImage {
    pub fn filled(width: usize, height: usize, color: Rgb) -> Self {
        Self { width, height, pixels: vec![color; width * height], transparent_key: None }
    }

    pub fn get(&self, col: usize, row: usize) -> Rgb {
        self.pixels[row * self.width + col]
    }

    pub fn to_png(&self) -> Result<Vec<u8>, RenderError> {
        let raw: Vec<u8> = self.pixels.iter().flatten().copied().collect();
        let mut out = Vec::new();
        image::codecs::png::PngEncoder::new(Cursor::new(&mut out)).write_image(
            &raw,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::Rgb8,
        )?;
        Ok(out)
    }

    pub fn from_png(bytes: &[u8]) -> Result<Self, RenderError> {
        let img: RgbImage = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?.to_rgb8();
        let (w, h) = img.dimensions();
        let pixels = img.pixels().map(|p| p.0).collect();
        Ok(Self { width: w as usize, height: h as usize, pixels, transparent_key: None })
    }

    /// Plain-text PPM (P3).
    pub fn to_ppm(&self) -> String {
        let mut out = format!("P3\n{} {}\n255\n", self.width, self.height);
        for row in self.pixels.chunks(self.width.max(1)) {
            let line: Vec<String> = row.iter().map(|[r, g, b]| format!("{r} {g} {b}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

pub fn render_heatmap(values: &Matrix<Option<f64>>, spec: &ColorMapSpec) -> Result<RasterImage, RenderError> {
    if values.width() == 0 || values.height() == 0 {
        return Err(RenderError::Empty);
    }
    let spec = spec.resolved(values.data())?;
    let pixels = values.data().iter().map(|&v| spec.color(v)).collect();
    Ok(RasterImage {
        width: values.width(),
        height: values.height(),
        pixels,
        transparent_key: Some(spec.absent_color),
    })
}

/// Alpha-blends `heatmap` over `background`, rounding each channel.
pub fn composite_over_background(
    heatmap: &RasterImage,
    background: &RasterImage,
    alpha: f64,
) -> Result<RasterImage, RenderError> {
    if (heatmap.width, heatmap.height) != (background.width, background.height) {
        return Err(RenderError::DimensionMismatch(heatmap.width, heatmap.height, background.width, background.height));
    }
    let alpha = alpha.clamp(0.0, 1.0);
    let pixels = heatmap
        .pixels
        .iter()
        .zip(&background.pixels)
        .map(|(&h, &b)| {
            if heatmap.transparent_key == Some(h) {
                b
            } else {
                std::array::from_fn(|i| (alpha * h[i] as f64 + (1.0 - alpha) * b[i] as f64).round() as u8)
            }
        })
        .collect();
    Ok(RasterImage { width: background.width, height: background.height, pixels, transparent_key: None })
}

/// Cuts the `(x, y, width, height)` window out of a larger image, e.g. the ROI
/// out of a full-grid background.
pub fn crop(img: &RasterImage, x: usize, y: usize, width: usize, height: usize) -> Option<RasterImage> {
    if x + width > img.width || y + height > img.height {
        return None;
    }
    let mut pixels = Vec::with_capacity(width * height);
    for row in y..y + height {
        pixels.extend_from_slice(&img.pixels[row * img.width + x..row * img.width + x + width]);
    }
    Some(RasterImage { width, height, pixels, transparent_key: img.transparent_key })
}
