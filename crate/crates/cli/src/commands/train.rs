//! Checkpoint training. Single-worker on purpose: the update order is part
//! of the reproducibility contract, so --jobs does not apply here.

use std::path::{Path, PathBuf};

use anyhow::anyhow;
use clap::ValueEnum;

use crate::util::announce;
use crate::{input, labeler_failure, Ctx, Failure};
use cxrlab::dataset::{load_manifest, Split};
use cxrlab::labeler::{
    save_checkpoint, synthetic_corpus, train, EncoderConfig, Pooling, TrainConfig, TrainSample,
};
use cxrlab::normalizer::CleanReport;
use cxrlab::taxonomy::{LabelSchema, SecondaryLabelVector};

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

impl SplitArg {
    fn as_str(self) -> &'static str {
        match self {
            SplitArg::Train => "train",
            SplitArg::Val => "val",
            SplitArg::Test => "test",
            SplitArg::All => "all",
        }
    }

    fn keeps(self, split: Split) -> bool {
        match self {
            SplitArg::Train => split == Split::Train,
            SplitArg::Val => split == Split::Val,
            SplitArg::Test => split == Split::Test,
            SplitArg::All => true,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PoolingArg {
    Mean,
    Attention,
}

impl PoolingArg {
    pub fn as_str(self) -> &'static str {
        match self {
            PoolingArg::Mean => "mean",
            PoolingArg::Attention => "attention",
        }
    }

    pub fn to_pooling(self) -> Pooling {
        match self {
            PoolingArg::Mean => Pooling::Mean,
            PoolingArg::Attention => Pooling::SingleAttention,
        }
    }
}

#[derive(clap::Args)]
pub struct TrainArgs {
    /// Dataset manifest to train from.
    #[arg(long, required_unless_present = "synthetic")]
    pub manifest: Option<PathBuf>,
    /// Train on a generated corpus of this size instead of a manifest;
    /// the corpus is derived from --seed.
    #[arg(long, conflicts_with = "manifest")]
    pub synthetic: Option<usize>,
    /// Checkpoint output path.
    #[arg(long)]
    pub model: PathBuf,
    /// Write the per-epoch mean loss trace here as TSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Which manifest split to train on.
    #[arg(long, value_enum, default_value_t = SplitArg::Train)]
    pub split: SplitArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 64)]
    pub embedding_dim: usize,
    #[arg(long, default_value_t = 128)]
    pub max_seq_len: usize,
    #[arg(long, value_enum, default_value_t = PoolingArg::Mean)]
    pub pooling: PoolingArg,
    /// Dropout rate on the concatenated feature vector during training.
    #[arg(long, default_value_t = 0.1)]
    pub dropout: f64,
    #[arg(long, default_value_t = 2.0)]
    pub focal_gamma: f64,
    #[arg(long, default_value_t = 0.25)]
    pub focal_alpha: f64,
    /// Weight of the auxiliary coarse-label head in the training loss.
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Decision threshold stored in the checkpoint.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Feed the clinical text into the report encoder instead of a second
    /// encoder.
    #[arg(long)]
    pub single_encoder: bool,
    /// Drop the auxiliary coarse-label head from the loss.
    #[arg(long)]
    pub no_hierarchy_head: bool,
}

impl TrainArgs {
    pub fn to_config(&self) -> TrainConfig {
        TrainConfig {
            encoder: EncoderConfig {
                embedding_dim: self.embedding_dim,
                max_seq_len: self.max_seq_len,
                pooling: self.pooling.to_pooling(),
                dropout_rate: self.dropout,
            },
            learning_rate: self.learning_rate,
            focal_gamma: self.focal_gamma,
            focal_alpha: self.focal_alpha,
            lambda_hierarchy: self.lambda,
            epochs: self.epochs,
            batch_size: self.batch_size,
            use_dual_encoder: !self.single_encoder,
            use_hierarchy_head: !self.no_hierarchy_head,
            threshold: self.threshold,
            seed: self.seed,
        }
    }
}

/// Report/label pairs from a manifest, restricted to one split.
pub fn manifest_pairs(
    path: &Path,
    schema: &LabelSchema,
    split: SplitArg,
) -> Result<Vec<(CleanReport, SecondaryLabelVector)>, Failure> {
    let records = load_manifest(path, schema).map_err(input)?;
    let pairs: Vec<(CleanReport, SecondaryLabelVector)> = records
        .into_iter()
        .filter(|r| split.keeps(r.split))
        .map(|r| (r.report, r.labels))
        .collect();
    if pairs.is_empty() {
        return Err(input(anyhow!(
            "manifest {} has no records in split {:?}",
            path.display(),
            split.as_str()
        )));
    }
    Ok(pairs)
}

pub fn write_trace(path: &Path, header: &str, trace: &[f64]) -> std::io::Result<()> {
    let mut out = format!("{header}epoch\tmean_loss\n");
    for (i, loss) in trace.iter().enumerate() {
        out.push_str(&format!("{}\t{loss}\n", i + 1));
    }
    std::fs::write(path, out)
}

pub fn run(args: &TrainArgs, ctx: &Ctx) -> Result<(), Failure> {
    let cfg = args.to_config();
    let parts = [
        (
            "data",
            match (&args.manifest, args.synthetic) {
                (Some(path), _) => format!("manifest:{}:{}", path.display(), args.split.as_str()),
                (None, Some(n)) => format!("synthetic:{n}"),
                (None, None) => unreachable!("clap enforces manifest xor synthetic"),
            },
        ),
        ("model", args.model.display().to_string()),
        ("seed", args.seed.to_string()),
        ("epochs", args.epochs.to_string()),
        ("learning_rate", args.learning_rate.to_string()),
        ("batch_size", args.batch_size.to_string()),
        ("embedding_dim", args.embedding_dim.to_string()),
        ("max_seq_len", args.max_seq_len.to_string()),
        ("pooling", args.pooling.as_str().to_string()),
        ("dropout", args.dropout.to_string()),
        ("focal_gamma", args.focal_gamma.to_string()),
        ("focal_alpha", args.focal_alpha.to_string()),
        ("lambda", args.lambda.to_string()),
        ("threshold", args.threshold.to_string()),
        ("dual_encoder", cfg.use_dual_encoder.to_string()),
        ("hierarchy_head", cfg.use_hierarchy_head.to_string()),
        ("schema", ctx.schema_source.clone()),
    ];
    let header = announce("train", Some(args.seed), &parts);

    let pairs = match (&args.manifest, args.synthetic) {
        (Some(path), _) => manifest_pairs(path, &ctx.schema, args.split)?,
        (None, Some(n)) => synthetic_corpus(n, args.seed, &ctx.schema),
        (None, None) => unreachable!("clap enforces manifest xor synthetic"),
    };
    let samples: Vec<TrainSample> = pairs
        .iter()
        .map(|(report, labels)| TrainSample::from_report(report, *labels))
        .collect();

    let started = std::time::Instant::now();
    let out = train(&samples, &ctx.schema, &cfg).map_err(labeler_failure)?;
    eprintln!("trained in {:.1}s", started.elapsed().as_secs_f64());

    if let Some(parent) = args.model.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(input)?;
    }
    save_checkpoint(&out.params, &args.model).map_err(labeler_failure)?;
    if let Some(trace_path) = &args.trace {
        write_trace(trace_path, &header, &out.loss_trace).map_err(input)?;
    }

    println!("samples: {}", samples.len());
    println!("vocab: {}", out.params.vocab().len());
    println!("parameters: {}", out.params.param_count());
    println!("truncated: {}", out.truncated_samples);
    if let Some(final_loss) = out.loss_trace.last() {
        println!("final_loss: {final_loss}");
    }
    println!("wrote {}", args.model.display());
    if let Some(trace_path) = &args.trace {
        println!("wrote {}", trace_path.display());
    }
    Ok(())
}
