//! Raw-table cleaning: normalization rules plus age parsing, with rejects
//! split into their own table.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::util::{announce, parse_delimiter, prepend_header};
use crate::{input, Ctx, Failure};
use cxrlab::normalizer::{clean_batch, read_report_table, write_clean_table, write_rejects_table};

#[derive(clap::Args)]
pub struct CleanArgs {
    /// Raw report table with the canonical seven columns.
    #[arg(long)]
    pub input: PathBuf,
    /// Receives clean.tsv and rejects.tsv.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Table delimiter: "tab", "comma", or one ASCII character.
    #[arg(long, default_value = "tab", value_parser = parse_delimiter)]
    pub delimiter: u8,
}

pub fn run(args: &CleanArgs, _ctx: &Ctx) -> Result<(), Failure> {
    let parts = [
        ("input", args.input.display().to_string()),
        ("out_dir", args.out_dir.display().to_string()),
        ("delimiter", (args.delimiter as char).to_string()),
    ];
    let header = announce("clean", None, &parts);

    let raws = read_report_table(&args.input, args.delimiter).map_err(input)?;
    let (cleaned, rejects) = clean_batch(&raws);
    std::fs::create_dir_all(&args.out_dir).map_err(input)?;

    let clean_path = args.out_dir.join("clean.tsv");
    let rejects_path = args.out_dir.join("rejects.tsv");
    write_clean_table(&clean_path, &cleaned, args.delimiter).map_err(input)?;
    write_rejects_table(&rejects_path, &rejects, args.delimiter).map_err(input)?;
    prepend_header(&clean_path, &header).map_err(input)?;
    prepend_header(&rejects_path, &header).map_err(input)?;

    println!("read {} raw report(s)", raws.len());
    println!("cleaned {} -> {}", cleaned.len(), clean_path.display());
    println!("rejected {} -> {}", rejects.len(), rejects_path.display());
    let mut by_reason: BTreeMap<&str, usize> = BTreeMap::new();
    for reject in &rejects {
        *by_reason.entry(reject.reason.as_str()).or_default() += 1;
    }
    for (reason, count) in by_reason {
        println!("  {reason}: {count}");
    }
    Ok(())
}
