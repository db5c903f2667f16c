//! Architecture ablations: the full model, the model without the auxiliary
//! coarse-label head, and the model without the second encoder, trained
//! under one seed and scored on held-out reports.

use std::path::PathBuf;

use anyhow::anyhow;

use crate::commands::train::{manifest_pairs, SplitArg};
use crate::util::{announce, render_aligned};
use crate::{input, labeler_failure, Ctx, Failure};
use cxrlab::labeler::{
    predict, synthetic_corpus, train, EncoderConfig, Pooling, TrainConfig, TrainSample,
};
use cxrlab::metrics::evaluate;
use cxrlab::normalizer::CleanReport;
use cxrlab::taxonomy::SecondaryLabelVector;

#[derive(clap::Args)]
pub struct AblateArgs {
    /// Receives ablation.tsv.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Train on this manifest's train split and score on its test split;
    /// without it a generated corpus is used.
    #[arg(long, conflicts_with = "samples")]
    pub manifest: Option<PathBuf>,
    /// Size of the generated corpus.
    #[arg(long, default_value_t = 60)]
    pub samples: usize,
    /// Leading fraction of the generated corpus used for training; the
    /// rest is scored.
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 32)]
    pub embedding_dim: usize,
    #[arg(long, default_value_t = 96)]
    pub max_seq_len: usize,
}

struct Variant {
    name: &'static str,
    use_dual_encoder: bool,
    use_hierarchy_head: bool,
}

const VARIANTS: [Variant; 3] = [
    Variant {
        name: "full",
        use_dual_encoder: true,
        use_hierarchy_head: true,
    },
    Variant {
        name: "no_hierarchy_head",
        use_dual_encoder: true,
        use_hierarchy_head: false,
    },
    Variant {
        name: "no_dual_encoder",
        use_dual_encoder: false,
        use_hierarchy_head: true,
    },
];

type Pairs = Vec<(CleanReport, SecondaryLabelVector)>;

fn data(args: &AblateArgs, ctx: &Ctx) -> Result<(Pairs, Pairs), Failure> {
    match &args.manifest {
        Some(path) => Ok((
            manifest_pairs(path, &ctx.schema, SplitArg::Train)?,
            manifest_pairs(path, &ctx.schema, SplitArg::Test)?,
        )),
        None => {
            if !(args.train_fraction.is_finite()
                && args.train_fraction > 0.0
                && args.train_fraction < 1.0)
            {
                return Err(Failure::Usage(format!(
                    "--train-fraction {} must lie strictly between 0 and 1",
                    args.train_fraction
                )));
            }
            let corpus = synthetic_corpus(args.samples, args.seed, &ctx.schema);
            let n_train = (args.train_fraction * corpus.len() as f64).floor() as usize;
            if n_train == 0 || n_train == corpus.len() {
                return Err(input(anyhow!(
                    "--samples {} leaves an empty train or test portion",
                    args.samples
                )));
            }
            let mut corpus = corpus;
            let eval_pairs = corpus.split_off(n_train);
            Ok((corpus, eval_pairs))
        }
    }
}

pub fn run(args: &AblateArgs, ctx: &Ctx) -> Result<(), Failure> {
    let parts = [
        (
            "data",
            args.manifest
                .as_ref()
                .map_or(format!("synthetic:{}", args.samples), |p| {
                    format!("manifest:{}", p.display())
                }),
        ),
        ("out_dir", args.out_dir.display().to_string()),
        ("seed", args.seed.to_string()),
        ("epochs", args.epochs.to_string()),
        ("learning_rate", args.learning_rate.to_string()),
        ("batch_size", args.batch_size.to_string()),
        ("embedding_dim", args.embedding_dim.to_string()),
        ("max_seq_len", args.max_seq_len.to_string()),
        ("train_fraction", args.train_fraction.to_string()),
        ("schema", ctx.schema_source.clone()),
    ];
    let header = announce("ablate", Some(args.seed), &parts);

    let (train_pairs, eval_pairs) = data(args, ctx)?;
    let samples: Vec<TrainSample> = train_pairs
        .iter()
        .map(|(report, labels)| TrainSample::from_report(report, *labels))
        .collect();
    let gold: Vec<SecondaryLabelVector> = eval_pairs.iter().map(|(_, g)| *g).collect();

    let mut table = String::from("config\tmicro_f1\tmacro_f1\tweighted_f1\tfinal_train_loss\n");
    for variant in &VARIANTS {
        let cfg = TrainConfig {
            encoder: EncoderConfig {
                embedding_dim: args.embedding_dim,
                max_seq_len: args.max_seq_len,
                pooling: Pooling::Mean,
                dropout_rate: 0.1,
            },
            learning_rate: args.learning_rate,
            epochs: args.epochs,
            batch_size: args.batch_size,
            use_dual_encoder: variant.use_dual_encoder,
            use_hierarchy_head: variant.use_hierarchy_head,
            seed: args.seed,
            ..TrainConfig::default()
        };
        let started = std::time::Instant::now();
        let out = train(&samples, &ctx.schema, &cfg).map_err(labeler_failure)?;
        eprintln!(
            "{}: trained in {:.1}s",
            variant.name,
            started.elapsed().as_secs_f64()
        );
        let pred: Vec<SecondaryLabelVector> = eval_pairs
            .iter()
            .map(|(report, _)| predict(&out.params, report, &ctx.schema).secondary_labels)
            .collect();
        let report = evaluate(ctx.schema.secondary_labels(), &gold, &pred).map_err(input)?;
        let final_loss = out.loss_trace.last().copied().unwrap_or(f64::NAN);
        table.push_str(&format!(
            "{}\t{:.4}\t{:.4}\t{:.4}\t{:.6}\n",
            variant.name,
            report.micro_f1,
            report.aggregates.macro_f1,
            report.aggregates.weighted_f1,
            final_loss
        ));
    }

    std::fs::create_dir_all(&args.out_dir).map_err(input)?;
    let table_path = args.out_dir.join("ablation.tsv");
    std::fs::write(&table_path, format!("{header}{table}")).map_err(input)?;
    println!(
        "train: {} sample(s), eval: {} sample(s)",
        samples.len(),
        gold.len()
    );
    print!("{}", render_aligned(&table));
    println!("wrote {}", table_path.display());
    Ok(())
}
