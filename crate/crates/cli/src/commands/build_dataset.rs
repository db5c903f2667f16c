//! Dataset assembly: label every cleaned report, apply the study-selection
//! predicates, shuffle into splits, and emit the manifest.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use anyhow::anyhow;

use crate::util::{announce, parse_delimiter, prepend_header, read_label_table, render_aligned};
use crate::{input, labeler_failure, Ctx, Failure};
use cxrlab::dataset::{
    apply_exclusions, compute_stats, emit_manifest, split, DatasetError, ExclusionConfig,
    SampleRecord, Split, SplitSpec,
};
use cxrlab::labeler::Lexicon;
use cxrlab::normalizer::{clean_batch, read_report_table, CleanReport};
use cxrlab::taxonomy::SecondaryLabelVector;

#[derive(clap::Args)]
pub struct BuildDatasetArgs {
    /// Cleaned report table (a raw table is cleaned again on the fly).
    #[arg(long)]
    pub input: PathBuf,
    /// Receives manifest.jsonl, excluded.tsv, and stats.tsv.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Shuffle seed for the split assignment.
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.8)]
    pub train_ratio: f64,
    #[arg(long, default_value_t = 0.1)]
    pub val_ratio: f64,
    #[arg(long, default_value_t = 0.1)]
    pub test_ratio: f64,
    /// Label table joined by ACC; without it every report is labeled with
    /// the rule lexicon.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Lexicon file for rule labeling.
    #[arg(long, conflicts_with = "labels")]
    pub lexicon: Option<PathBuf>,
    /// Directory holding <ACC>_pa.png and optional <ACC>_la.png images.
    #[arg(long)]
    pub images_dir: Option<PathBuf>,
    /// Metadata table of ACC<TAB>key<TAB>value rows (e.g. a bedside flag).
    #[arg(long)]
    pub metadata: Option<PathBuf>,
    /// Minimum age kept, in years.
    #[arg(long, default_value_t = 18)]
    pub min_age: u32,
    /// Minimum findings-plus-impression length kept, in characters.
    #[arg(long, default_value_t = 6)]
    pub min_chars: usize,
    #[arg(long, default_value = "tab", value_parser = parse_delimiter)]
    pub delimiter: u8,
}

fn read_metadata(path: &PathBuf) -> anyhow::Result<HashMap<String, BTreeMap<String, String>>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow!("reading metadata {}: {e}", path.display()))?;
    let mut map: HashMap<String, BTreeMap<String, String>> = HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let mut cells = line.split('\t');
        let (Some(acc), Some(key), Some(value), None) =
            (cells.next(), cells.next(), cells.next(), cells.next())
        else {
            return Err(anyhow!(
                "{}:{}: expected ACC<TAB>key<TAB>value",
                path.display(),
                idx + 1
            ));
        };
        map.entry(acc.to_string())
            .or_default()
            .insert(key.to_string(), value.to_string());
    }
    Ok(map)
}

fn label_reports(
    args: &BuildDatasetArgs,
    ctx: &Ctx,
    reports: &[CleanReport],
) -> Result<Vec<SecondaryLabelVector>, Failure> {
    if let Some(labels_path) = &args.labels {
        let rows = read_label_table(labels_path, &ctx.schema).map_err(input)?;
        let by_acc: HashMap<&str, &SecondaryLabelVector> =
            rows.iter().map(|(acc, v)| (acc.as_str(), v)).collect();
        reports
            .iter()
            .map(|r| {
                by_acc.get(r.acc.as_str()).copied().copied().ok_or_else(|| {
                    input(anyhow!(
                        "{}: no labels for ACC {:?}",
                        labels_path.display(),
                        r.acc
                    ))
                })
            })
            .collect()
    } else {
        let lexicon = match &args.lexicon {
            Some(path) => Lexicon::load(path, &ctx.schema).map_err(labeler_failure)?,
            None => Lexicon::default_lexicon(&ctx.schema).map_err(labeler_failure)?,
        };
        Ok(reports
            .iter()
            .map(|r| cxrlab::labeler::rule_label(r, &ctx.schema, &lexicon))
            .collect())
    }
}

fn dataset_failure(e: DatasetError) -> Failure {
    match e {
        DatasetError::BadRatios { .. } => Failure::Usage(e.to_string()),
        _ => input(e),
    }
}

pub fn run(args: &BuildDatasetArgs, ctx: &Ctx) -> Result<(), Failure> {
    let parts = [
        ("input", args.input.display().to_string()),
        ("out_dir", args.out_dir.display().to_string()),
        ("seed", args.seed.to_string()),
        ("train_ratio", args.train_ratio.to_string()),
        ("val_ratio", args.val_ratio.to_string()),
        ("test_ratio", args.test_ratio.to_string()),
        (
            "labels",
            args.labels
                .as_ref()
                .map_or("rule".to_string(), |p| p.display().to_string()),
        ),
        (
            "lexicon",
            args.lexicon
                .as_ref()
                .map_or("builtin".to_string(), |p| p.display().to_string()),
        ),
        (
            "images_dir",
            args.images_dir
                .as_ref()
                .map_or("-".to_string(), |p| p.display().to_string()),
        ),
        ("min_age", args.min_age.to_string()),
        ("min_chars", args.min_chars.to_string()),
        ("schema", ctx.schema_source.clone()),
    ];
    let header = announce("build-dataset", Some(args.seed), &parts);

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
    let labels = label_reports(args, ctx, &reports)?;
    let metadata = match &args.metadata {
        Some(path) => read_metadata(path).map_err(input)?,
        None => HashMap::new(),
    };

    let records: Vec<SampleRecord> = reports
        .into_iter()
        .zip(labels)
        .map(|(report, labels)| {
            let pa_name = format!("{}_pa.png", report.acc);
            let la_name = format!("{}_la.png", report.acc);
            let (pa_image_path, la_image_path) = match &args.images_dir {
                Some(dir) => {
                    let la = dir.join(&la_name);
                    (
                        dir.join(&pa_name).display().to_string(),
                        la.exists().then(|| la.display().to_string()),
                    )
                }
                None => (pa_name, None),
            };
            let metadata = metadata.get(&report.acc).cloned().unwrap_or_default();
            SampleRecord {
                pa_image_path,
                la_image_path,
                report,
                labels,
                split: Split::Unassigned,
                metadata,
            }
        })
        .collect();

    let exclusion_config = ExclusionConfig {
        min_age_years: args.min_age,
        min_report_chars: args.min_chars,
        ..ExclusionConfig::default()
    };
    let (kept, excluded, warnings) = apply_exclusions(records, &exclusion_config);
    for warning in &warnings {
        eprintln!("warning: {warning}");
    }
    std::fs::create_dir_all(&args.out_dir).map_err(input)?;
    let excluded_path = args.out_dir.join("excluded.tsv");
    let mut excluded_table = format!("{header}ACC\treason\n");
    for e in &excluded {
        excluded_table.push_str(&format!("{}\t{}\n", e.sample_id, e.reason));
    }
    std::fs::write(&excluded_path, excluded_table).map_err(input)?;

    let spec = SplitSpec::new(args.train_ratio, args.val_ratio, args.test_ratio, args.seed)
        .map_err(dataset_failure)?;
    let assigned = split(kept, &spec).map_err(dataset_failure)?;

    let manifest_path = args.out_dir.join("manifest.jsonl");
    emit_manifest(&assigned, &ctx.schema, &manifest_path).map_err(dataset_failure)?;
    prepend_header(&manifest_path, &header).map_err(input)?;

    let stats = compute_stats(&assigned, &ctx.schema);
    let stats_path = args.out_dir.join("stats.tsv");
    let tables = stats.to_tables('\t');
    std::fs::write(&stats_path, format!("{header}{tables}")).map_err(input)?;

    println!(
        "kept {} record(s), excluded {} -> {}",
        assigned.len(),
        excluded.len(),
        manifest_path.display()
    );
    print!("{}", render_aligned(&tables));
    Ok(())
}
