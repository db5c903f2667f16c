//! Manifest summary: image counts per split and per-label positives.

use std::path::PathBuf;

use crate::util::{announce, render_aligned};
use crate::{input, Ctx, Failure};
use cxrlab::dataset::{compute_stats, load_manifest};

#[derive(clap::Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Also write the tables as machine-readable TSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: &StatsArgs, ctx: &Ctx) -> Result<(), Failure> {
    let parts = [
        ("manifest", args.manifest.display().to_string()),
        ("schema", ctx.schema_source.clone()),
    ];
    let header = announce("stats", None, &parts);

    let records = load_manifest(&args.manifest, &ctx.schema).map_err(input)?;
    let stats = compute_stats(&records, &ctx.schema);
    let tables = stats.to_tables('\t');
    println!("samples: {}", stats.sample_count);
    print!("{}", render_aligned(&tables));
    if let Some(out) = &args.out {
        std::fs::write(out, format!("{header}{tables}")).map_err(input)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}
