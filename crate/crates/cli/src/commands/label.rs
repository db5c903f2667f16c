//! Batch labeling with a trained checkpoint or the rule lexicon. The
//! per-report work is independent, so it parallelizes under --jobs without
//! changing the output.

use std::path::PathBuf;

use anyhow::anyhow;
use rayon::prelude::*;

use crate::util::{announce, parse_delimiter, with_jobs, write_label_table, LabelRow};
use crate::{input, labeler_failure, Ctx, Failure};
use cxrlab::labeler::{load_checkpoint, predict, rule_label, Lexicon};
use cxrlab::normalizer::{clean_batch, read_report_table, CleanReport};
use cxrlab::taxonomy::SECONDARY_COUNT;

#[derive(clap::Args)]
pub struct LabelArgs {
    /// Cleaned report table to label.
    #[arg(long)]
    pub input: PathBuf,
    /// Label-table output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Checkpoint from `cxrlab train`.
    #[arg(long, required_unless_present = "rule", conflicts_with = "rule")]
    pub model: Option<PathBuf>,
    /// Label with the trigger/negation lexicon instead of a model.
    #[arg(long)]
    pub rule: bool,
    /// Lexicon file; the built-in lexicon is used when omitted.
    #[arg(long, requires = "rule")]
    pub lexicon: Option<PathBuf>,
    /// Also write per-label probabilities (model labeling only).
    #[arg(long, conflicts_with = "rule")]
    pub probs: Option<PathBuf>,
    /// Worker threads; 0 means one per core.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, default_value = "tab", value_parser = parse_delimiter)]
    pub delimiter: u8,
}

fn load_reports(args: &LabelArgs) -> Result<Vec<CleanReport>, Failure> {
    let raws = read_report_table(&args.input, args.delimiter).map_err(input)?;
    let (reports, rejects) = clean_batch(&raws);
    if !rejects.is_empty() {
        return Err(input(anyhow!(
            "{} report(s) failed cleaning (first: {} {}); run `cxrlab clean` first",
            rejects.len(),
            rejects[0].acc,
            rejects[0].reason
        )));
    }
    Ok(reports)
}

pub fn run(args: &LabelArgs, ctx: &Ctx) -> Result<(), Failure> {
    let parts = [
        ("input", args.input.display().to_string()),
        ("out", args.out.display().to_string()),
        (
            "labeler",
            match &args.model {
                Some(path) => format!("model:{}", path.display()),
                None => format!(
                    "rule:{}",
                    args.lexicon
                        .as_ref()
                        .map_or("builtin".to_string(), |p| p.display().to_string())
                ),
            },
        ),
        ("schema", ctx.schema_source.clone()),
    ];
    let header = announce("label", None, &parts);

    let reports = load_reports(args)?;
    let schema = &ctx.schema;

    let mut probs_rows: Vec<[f64; SECONDARY_COUNT]> = Vec::new();
    let rows: Vec<LabelRow> = match &args.model {
        Some(model_path) => {
            let params = load_checkpoint(model_path).map_err(labeler_failure)?;
            let predictions = with_jobs(args.jobs, || {
                reports
                    .par_iter()
                    .map(|report| predict(&params, report, schema))
                    .collect::<Vec<_>>()
            })?;
            if args.probs.is_some() {
                probs_rows = predictions.iter().map(|p| p.secondary_probs).collect();
            }
            reports
                .iter()
                .zip(predictions)
                .map(|(report, prediction)| LabelRow {
                    acc: report.acc.clone(),
                    secondary: prediction.secondary_labels,
                    primary: prediction.primary_labels,
                })
                .collect()
        }
        None => {
            let lexicon = match &args.lexicon {
                Some(path) => Lexicon::load(path, schema).map_err(labeler_failure)?,
                None => Lexicon::default_lexicon(schema).map_err(labeler_failure)?,
            };
            with_jobs(args.jobs, || {
                reports
                    .par_iter()
                    .map(|report| {
                        LabelRow::from_secondary(
                            report.acc.clone(),
                            rule_label(report, schema, &lexicon),
                            schema,
                        )
                    })
                    .collect()
            })?
        }
    };

    write_label_table(&args.out, &header, &rows, schema).map_err(input)?;
    if let Some(probs_path) = &args.probs {
        let mut out = String::from(header.as_str());
        out.push_str("ACC");
        for name in schema.secondary_labels() {
            out.push('\t');
            out.push_str(name);
        }
        out.push('\n');
        for (row, probs) in rows.iter().zip(&probs_rows) {
            out.push_str(&row.acc);
            for p in probs {
                out.push_str(&format!("\t{p:.6}"));
            }
            out.push('\n');
        }
        std::fs::write(probs_path, out).map_err(input)?;
    }

    let mut positives = vec![0usize; SECONDARY_COUNT];
    for row in &rows {
        for (i, count) in positives.iter_mut().enumerate() {
            if row.secondary.get(i) {
                *count += 1;
            }
        }
    }
    println!("labeled {} report(s) -> {}", rows.len(), args.out.display());
    for (name, count) in schema.secondary_labels().iter().zip(positives) {
        if count > 0 {
            println!("  {name}: {count}");
        }
    }
    if let Some(probs_path) = &args.probs {
        println!("wrote {}", probs_path.display());
    }
    Ok(())
}
