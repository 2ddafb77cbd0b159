use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, ValueEnum};
use petmap_core::matrix::Matrix;
use petmap_core::pet::parse_export;
use petmap_core::render::{composite_over_background, crop, render_heatmap, ColorMapKind, ColorMapSpec, RasterImage};

use crate::{usage, write_file, ConfigArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scale {
    Log,
    Linear,
}

/// Rendering flags shared with `pet`.
#[derive(Args, Debug, Clone, Default)]
pub struct RenderArgs {
    /// Color scale; defaults to log for PET and linear for counts.
    #[arg(long, value_enum)]
    colormap: Option<Scale>,
    /// Shorthand for `--colormap log`.
    #[arg(long, conflicts_with = "colormap")]
    log_colormap: bool,
    /// Fixed color domain as LOW,HIGH instead of one derived from the data.
    #[arg(long, value_parser = parse_domain)]
    domain: Option<[f64; 2]>,
    /// PNG to blend the heatmap over; pixels with no data stay transparent.
    #[arg(long)]
    background: Option<PathBuf>,
    /// Heatmap opacity over the background.
    #[arg(long, default_value_t = 0.6)]
    alpha: f64,
}

#[derive(Args, Debug)]
pub struct HeatmapArgs {
    /// A `pet-mean` or `pet-count` export.
    export: PathBuf,
    /// Output image; a `.ppm` extension writes plain-text PPM instead of PNG.
    #[arg(long, default_value = "heatmap.png")]
    out: PathBuf,
    /// Crop window as X,Y,WIDTH,HEIGHT within the map.
    #[arg(long, value_parser = crate::parse_roi)]
    crop: Option<petmap_core::config::Roi>,
    #[command(flatten)]
    render: RenderArgs,
    #[command(flatten)]
    config: ConfigArgs,
}

fn parse_domain(s: &str) -> Result<[f64; 2], String> {
    let (a, b) = s.split_once(',').ok_or("expected LOW,HIGH")?;
    let a: f64 = a.trim().parse().map_err(|_| format!("bad number {a:?}"))?;
    let b: f64 = b.trim().parse().map_err(|_| format!("bad number {b:?}"))?;
    Ok([a, b])
}

pub fn run(args: HeatmapArgs) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&args.export).with_context(|| format!("reading {}", args.export.display()))?;
    let (kind, values) = parse_export(&text).map_err(|e| usage(format!("{}: {e}", args.export.display())))?;
    let cfg = args.config.resolve()?;
    let mut img = render_export(&kind, &values, &cfg, &args.render)?;
    if let Some(c) = args.crop {
        img = crop(&img, c.x, c.y, c.width, c.height)
            .ok_or_else(|| usage(format!("crop window {c:?} outside {}x{} map", img.width, img.height)))?;
    }
    save_image(&img, &args.out)?;
    println!("wrote {} ({}x{})", args.out.display(), img.width, img.height);
    Ok(())
}

/// Colors an export according to its kind, the configuration and the flags.
pub fn render_export(
    kind: &str,
    values: &Matrix<Option<f64>>,
    cfg: &petmap_core::config::PipelineConfig,
    flags: &RenderArgs,
) -> anyhow::Result<RasterImage> {
    let (mut spec, values) = match kind {
        "pet-mean" => (cfg.pet_colormap.clone().unwrap_or_else(ColorMapSpec::pet_default), values.clone()),
        // A zero count means no interval was seen there.
        "pet-count" => (
            cfg.count_colormap.clone().unwrap_or_else(ColorMapSpec::count_default),
            values.map(|v| v.filter(|&c| c > 0.0)),
        ),
        other => return Err(usage(format!("unknown export kind {other:?}"))),
    };
    let scale = if flags.log_colormap { Some(Scale::Log) } else { flags.colormap };
    match scale {
        Some(Scale::Log) => spec.kind = ColorMapKind::Log,
        Some(Scale::Linear) => spec.kind = ColorMapKind::Linear,
        None => {}
    }
    if flags.domain.is_some() {
        spec.domain = flags.domain;
    }
    spec.validate().map_err(|e| usage(e.to_string()))?;
    let heat = render_heatmap(&values, &spec)?;
    match &flags.background {
        Some(path) => {
            let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
            let mut bg = RasterImage::from_png(&bytes)?;
            // A full-grid background is cut down to the ROI the map covers.
            let r = cfg.roi;
            if (bg.width, bg.height) == (cfg.grid_width, cfg.grid_height) && (heat.width, heat.height) == (r.width, r.height) {
                bg = crop(&bg, r.x, r.y, r.width, r.height).expect("roi fits the grid");
            }
            Ok(composite_over_background(&heat, &bg, flags.alpha)?)
        }
        None => Ok(heat),
    }
}

pub fn save_image(img: &RasterImage, path: &std::path::Path) -> anyhow::Result<()> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("ppm")) {
        write_file(path, img.to_ppm())
    } else {
        write_file(path, img.to_png()?)
    }
}
