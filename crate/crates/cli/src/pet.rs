use std::path::PathBuf;

use clap::Args;
use petmap_core::pet::{export_counts, export_mean, parse_export};
use petmap_core::pipeline::replay_pet;
use petmap_core::store::Store;

use crate::heatmap::{render_export, save_image, RenderArgs};
use crate::{time_range, write_file, ConfigArgs};

#[derive(Args, Debug)]
pub struct PetArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Start of the replayed range (inclusive), epoch milliseconds.
    #[arg(long)]
    from_ms: Option<i64>,
    /// End of the replayed range (exclusive), epoch milliseconds.
    #[arg(long)]
    to_ms: Option<i64>,
    /// Output directory for exports and images.
    #[arg(long, default_value = "pet")]
    out: PathBuf,
    /// Also render pet_mean.png and pet_count.png.
    #[arg(long)]
    heatmap: bool,
    #[command(flatten)]
    render: RenderArgs,
}

pub fn run(args: PetArgs) -> anyhow::Result<()> {
    let cfg = args.config.resolve()?;
    let (t0, t1) = time_range(args.from_ms, args.to_ms)?;
    if !cfg.store.exists() {
        log::warn!("store {} does not exist; exporting an empty map", cfg.store.display());
    }
    let mut store = Store::open_read_only(&cfg.store)?;
    let grid = replay_pet(&mut store, t0, t1, &cfg)?;

    let mean = export_mean(&grid);
    let counts = export_counts(&grid);
    write_file(&args.out.join("pet_mean.txt"), &mean)?;
    write_file(&args.out.join("pet_count.txt"), &counts)?;

    let total: u64 = grid.update_counts().data().iter().map(|&c| u64::from(c)).sum();
    let pixels = grid.update_counts().data().iter().filter(|&&c| c > 0).count();
    println!("{}", cfg.scale_report());
    println!("intervals: {total} over {pixels} pixels");
    if let Some(ts) = grid.last_update_ms() {
        println!("last update: {ts}");
    }

    if args.heatmap {
        for (name, text) in [("pet_mean.png", &mean), ("pet_count.png", &counts)] {
            let (kind, values) = parse_export(text)?;
            if values.data().iter().all(Option::is_none) && kind == "pet-mean" {
                log::warn!("no intervals in range; {name} shows only the absent color");
            }
            let img = render_export(&kind, &values, &cfg, &args.render)?;
            save_image(&img, &args.out.join(name))?;
        }
    }
    println!("output: {}", args.out.display());
    Ok(())
}
