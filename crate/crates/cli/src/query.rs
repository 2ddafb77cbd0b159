use std::io::{BufWriter, Write};

use clap::{Args, ValueEnum};
use petmap_core::store::Store;
use serde::Serialize;

use crate::{time_range, ConfigArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    Rectangles,
    Detections,
    Groups,
}

#[derive(Args, Debug)]
pub struct QueryArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, value_enum, default_value = "rectangles")]
    kind: Kind,
    #[arg(long)]
    from_ms: Option<i64>,
    #[arg(long)]
    to_ms: Option<i64>,
    /// Print only the number of matching records.
    #[arg(long)]
    count: bool,
}

pub fn run(args: QueryArgs) -> anyhow::Result<()> {
    let cfg = args.config.resolve()?;
    let (t0, t1) = time_range(args.from_ms, args.to_ms)?;
    let mut store = Store::open_read_only(&cfg.store)?;
    match args.kind {
        Kind::Rectangles => print(store.query_rectangles(t0, t1)?, args.count),
        Kind::Detections => print(store.query_detections(t0, t1)?, args.count),
        Kind::Groups => print(store.query_groups(t0, t1)?, args.count),
    }
}

fn print<R: Serialize>(records: Vec<R>, count_only: bool) -> anyhow::Result<()> {
    let mut out = BufWriter::new(std::io::stdout().lock());
    if count_only {
        writeln!(out, "{}", records.len())?;
    } else {
        for r in &records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}
