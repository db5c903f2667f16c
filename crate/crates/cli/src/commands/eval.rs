//! Scoring: join gold and predicted label tables by ACC and report
//! per-label and aggregate agreement.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::anyhow;

use crate::util::{announce, read_label_table, render_aligned};
use crate::{input, Ctx, Failure};
use cxrlab::dataset::load_manifest;
use cxrlab::metrics::evaluate;
use cxrlab::taxonomy::{LabelSchema, SecondaryLabelVector};

#[derive(clap::Args)]
pub struct EvalArgs {
    /// Gold labels: a label table, or a dataset manifest when the path
    /// ends in .jsonl.
    #[arg(long)]
    pub gold: PathBuf,
    /// Predicted labels as a label table.
    #[arg(long)]
    pub pred: PathBuf,
    /// Also write the metrics as machine-readable TSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn read_gold(
    path: &Path,
    schema: &LabelSchema,
) -> Result<Vec<(String, SecondaryLabelVector)>, Failure> {
    if path.extension().is_some_and(|e| e == "jsonl") {
        let records = load_manifest(path, schema).map_err(input)?;
        Ok(records
            .into_iter()
            .map(|r| (r.report.acc, r.labels))
            .collect())
    } else {
        read_label_table(path, schema).map_err(input)
    }
}

pub fn run(args: &EvalArgs, ctx: &Ctx) -> Result<(), Failure> {
    let parts = [
        ("gold", args.gold.display().to_string()),
        ("pred", args.pred.display().to_string()),
        ("schema", ctx.schema_source.clone()),
    ];
    let header = announce("eval", None, &parts);

    let gold_rows = read_gold(&args.gold, &ctx.schema)?;
    let pred_rows = read_label_table(&args.pred, &ctx.schema).map_err(input)?;
    let gold_by_acc: HashMap<&str, &SecondaryLabelVector> =
        gold_rows.iter().map(|(acc, v)| (acc.as_str(), v)).collect();
    if gold_by_acc.len() != gold_rows.len() {
        return Err(input(anyhow!("gold table repeats an ACC")));
    }

    let mut gold = Vec::with_capacity(pred_rows.len());
    let mut pred = Vec::with_capacity(pred_rows.len());
    let mut missing = Vec::new();
    for (acc, labels) in &pred_rows {
        match gold_by_acc.get(acc.as_str()) {
            Some(g) => {
                gold.push(**g);
                pred.push(*labels);
            }
            None => missing.push(acc.as_str()),
        }
    }
    if !missing.is_empty() {
        return Err(input(anyhow!(
            "{} predicted ACC(s) absent from gold (first: {:?})",
            missing.len(),
            missing[0]
        )));
    }
    if pred_rows.len() < gold_rows.len() {
        eprintln!(
            "warning: gold has {} record(s) without predictions",
            gold_rows.len() - pred_rows.len()
        );
    }

    let report = evaluate(ctx.schema.secondary_labels(), &gold, &pred).map_err(input)?;
    let table = report.to_table('\t');
    println!("samples: {}", report.sample_count);
    print!("{}", render_aligned(&table));
    if let Some(out) = &args.out {
        std::fs::write(out, format!("{header}{table}")).map_err(input)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}
