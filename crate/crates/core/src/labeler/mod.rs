//! The trainable report labeler and its rule-based baseline.
//!
//! The trainable model is a deliberately small stand-in for a pair of BERT
//! encoders: two character-level embedding encoders with mean (or single
//! self-attention) pooling, no weight sharing between them. Encoder A reads
//! the report (findings plus impression); encoder B reads the serialized
//! clinical information. Their pooled vectors are concatenated and fed to
//! two linear heads: head A scores the 14 finding labels, head B the 7
//! body-part labels. Training supervises both heads (head B's loss scaled
//! by lambda); inference uses head A only, then the taxonomy fix-ups.
//!
//! Everything numeric is hand-rolled f64 with a seeded ChaCha stream, so a
//! given (seed, corpus, config) triple reproduces parameters bit for bit.

mod checkpoint;
mod gradcheck;
mod loss;
mod net;
mod rule;
mod synthetic;
mod train;
mod vocab;

pub use checkpoint::{checkpoint_bytes, load_checkpoint, parse_checkpoint, save_checkpoint};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport, GradFault};
pub use loss::{bce_loss, focal_loss, PROB_CLAMP_EPSILON};
pub use rule::{rule_label, Lexicon};
pub use synthetic::synthetic_corpus;
pub use train::{train, TrainOutput, TrainSample};
pub use vocab::{Vocab, CLS_INDEX, PAD_INDEX, UNK_INDEX};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::normalizer::CleanReport;
use crate::taxonomy::{
    LabelSchema, PrimaryLabelVector, SecondaryLabelVector, PRIMARY_COUNT, SECONDARY_COUNT,
};

#[derive(Debug, Error)]
pub enum LabelerError {
    #[error("bad config: {detail}")]
    BadConfig { detail: String },
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("training diverged (non-finite loss) at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },
    #[error("checkpoint: {msg}")]
    Checkpoint { msg: String },
    #[error("lexicon line {line}: {msg}")]
    LexiconParse { line: usize, msg: String },
    #[error("lexicon names unknown label {name:?}")]
    UnknownLabel { name: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// How token embeddings are pooled into one vector per text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pooling {
    Mean,
    /// One self-attention layer, then mean over positions.
    SingleAttention,
}

/// Encoder shape shared by both encoders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub embedding_dim: usize,
    pub max_seq_len: usize,
    pub pooling: Pooling,
    pub dropout_rate: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 64,
            max_seq_len: 128,
            pooling: Pooling::Mean,
            dropout_rate: 0.1,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), LabelerError> {
        if self.embedding_dim == 0 {
            return Err(LabelerError::BadConfig {
                detail: "embedding_dim must be positive".to_string(),
            });
        }
        if self.max_seq_len == 0 {
            return Err(LabelerError::BadConfig {
                detail: "max_seq_len must be positive".to_string(),
            });
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(LabelerError::BadConfig {
                detail: format!("dropout_rate {} outside [0, 1)", self.dropout_rate),
            });
        }
        Ok(())
    }
}

/// Architecture facts a trained model must remember to run inference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    /// Off: clinical text is appended to the report for encoder A and the
    /// v_B half of the feature vector is zeros.
    pub use_dual_encoder: bool,
    /// Decision threshold on head-A probabilities.
    pub threshold: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            use_dual_encoder: true,
            threshold: 0.5,
        }
    }
}

/// Training hyperparameters. The flags mirror the two ablations: turning
/// the hierarchy head off zeroes lambda; turning the dual encoder off
/// collapses to a single encoder over concatenated text.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub encoder: EncoderConfig,
    pub learning_rate: f64,
    pub focal_gamma: f64,
    pub focal_alpha: f64,
    /// Weight on head B's loss.
    pub lambda_hierarchy: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub use_dual_encoder: bool,
    pub use_hierarchy_head: bool,
    pub threshold: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            learning_rate: 1e-3,
            focal_gamma: 2.0,
            focal_alpha: 0.25,
            lambda_hierarchy: 1.0,
            epochs: 50,
            batch_size: 8,
            use_dual_encoder: true,
            use_hierarchy_head: true,
            threshold: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LabelerError> {
        self.encoder.validate()?;
        let bad = |detail: String| Err(LabelerError::BadConfig { detail });
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return bad(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            ));
        }
        if self.focal_gamma < 0.0 {
            return bad(format!("focal_gamma {} must be >= 0", self.focal_gamma));
        }
        if !(self.focal_alpha > 0.0 && self.focal_alpha <= 1.0) {
            return bad(format!("focal_alpha {} outside (0, 1]", self.focal_alpha));
        }
        if self.lambda_hierarchy < 0.0 {
            return bad(format!(
                "lambda_hierarchy {} must be >= 0",
                self.lambda_hierarchy
            ));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive".to_string());
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad(format!("threshold {} outside [0, 1]", self.threshold));
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            encoder: self.encoder,
            use_dual_encoder: self.use_dual_encoder,
            threshold: self.threshold,
        }
    }

    /// The lambda actually used: the hierarchy ablation forces it to 0.
    pub fn effective_lambda(&self) -> f64 {
        if self.use_hierarchy_head {
            self.lambda_hierarchy
        } else {
            0.0
        }
    }
}

/// All trained state: vocabulary, architecture, and parameter tensors for
/// the two encoders and two heads. Encoder tensors never alias.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub(crate) vocab: Vocab,
    pub(crate) config: ModelConfig,
    pub(crate) net: net::NetTensors,
    pub(crate) seed: u64,
}

impl ModelParams {
    /// Freshly initialized parameters: fan-in scaled uniform weights, zero
    /// biases, drawn from a ChaCha stream seeded with `seed`.
    pub fn init(vocab: Vocab, config: ModelConfig, seed: u64) -> Result<Self, LabelerError> {
        config.encoder.validate()?;
        let net = net::NetTensors::init(&config, vocab.len(), seed);
        Ok(Self {
            vocab,
            config,
            net,
            seed,
        })
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Total number of f64 parameter slots.
    pub fn param_count(&self) -> usize {
        self.net.flat_len()
    }

    /// Read one parameter by flat index (tensor order is fixed).
    pub fn get_param(&self, index: usize) -> f64 {
        self.net.get_flat(index)
    }

    /// Overwrite one parameter by flat index.
    pub fn set_param(&mut self, index: usize, value: f64) {
        self.net.set_flat(index, value);
    }

    /// Zero every head-B parameter in place (used to demonstrate that
    /// inference never reads head B).
    pub fn zero_head_b(&mut self) {
        self.net.head_b_w.data.iter_mut().for_each(|v| *v = 0.0);
        self.net.head_b_b.data.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Inference output: head-A probabilities plus taxonomy-consistent labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub secondary_probs: [f64; SECONDARY_COUNT],
    pub secondary_labels: SecondaryLabelVector,
    pub primary_labels: PrimaryLabelVector,
}

/// Serialize the clinical-information fields into encoder B's input text.
pub fn clinical_text(report: &CleanReport) -> String {
    format!(
        "性别：{}。年龄：{}。{}。{}。",
        report.sex, report.age_years, report.clinical_desc, report.clinical_dx
    )
}

/// Serialize the report fields into encoder A's input text.
pub fn report_text(report: &CleanReport) -> String {
    format!("{}{}", report.findings, report.impression)
}

/// The concatenated feature vector v_AB for a pair of texts, in inference
/// mode (no dropout). Always 2 x embedding_dim: with the dual encoder off,
/// the clinical text rides along in the report text and the v_B half is
/// zeros.
pub fn encode(params: &ModelParams, report_text: &str, clinical_text: &str) -> Vec<f64> {
    net::encode_features(params, report_text, clinical_text)
}

/// Threshold head-A probabilities and apply the taxonomy fix-ups. Exposed
/// separately so the label-consistency path can be exercised on arbitrary
/// probability vectors.
pub fn prediction_from_probs(
    probs: [f64; SECONDARY_COUNT],
    schema: &LabelSchema,
    threshold: f64,
) -> Prediction {
    let mut labels = SecondaryLabelVector::all_negative();
    for (i, p) in probs.iter().enumerate() {
        labels.set(i, *p >= threshold);
    }
    let secondary_labels = schema.enforce_exclusion(&labels);
    let primary_labels = schema.propagate(&secondary_labels);
    Prediction {
        secondary_probs: probs,
        secondary_labels,
        primary_labels,
    }
}

/// Label one report: encode, score with head A, threshold, fix up. Head B
/// is never read.
pub fn predict(params: &ModelParams, report: &CleanReport, schema: &LabelSchema) -> Prediction {
    let probs = net::predict_probs(params, &report_text(report), &clinical_text(report));
    prediction_from_probs(probs, schema, params.config.threshold)
}

/// Gold targets for head B: the propagation of the gold secondary labels.
pub fn primary_targets(
    schema: &LabelSchema,
    secondary: &SecondaryLabelVector,
) -> [bool; PRIMARY_COUNT] {
    *schema.propagate(secondary).values()
}
