//! Mini-batch training with Adam on the joint head-A + head-B loss.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::net::{self, Mode, NetTensors};
use super::vocab::Vocab;
use super::{clinical_text, report_text, LabelerError, ModelParams, TrainConfig};
use crate::dataset::uniform_index;
use crate::normalizer::CleanReport;
use crate::taxonomy::{LabelSchema, SecondaryLabelVector, PRIMARY_COUNT, SECONDARY_COUNT};

/// One training example: the two encoder texts plus gold finding labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub report_text: String,
    pub clinical_text: String,
    pub secondary: SecondaryLabelVector,
}

impl TrainSample {
    pub fn from_report(report: &CleanReport, labels: SecondaryLabelVector) -> Self {
        Self {
            report_text: report_text(report),
            clinical_text: clinical_text(report),
            secondary: labels,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: ModelParams,
    /// Mean per-sample loss for each epoch, in epoch order.
    pub loss_trace: Vec<f64>,
    /// Samples whose text was cut at max_seq_len.
    pub truncated_samples: usize,
}

struct Adam {
    m: NetTensors,
    v: NetTensors,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPSILON: f64 = 1e-8;

impl Adam {
    fn new(like: &NetTensors) -> Self {
        Self {
            m: like.zeros_like(),
            v: like.zeros_like(),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut NetTensors, grads: &NetTensors, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - BETA1.powi(self.t);
        let bc2 = 1.0 - BETA2.powi(self.t);
        let p_slices = params.tensor_slices_mut();
        let g_slices = grads.tensor_slices();
        let m_slices = self.m.tensor_slices_mut();
        let v_slices = self.v.tensor_slices_mut();
        for (((ps, gs), ms), vs) in p_slices
            .into_iter()
            .zip(g_slices)
            .zip(m_slices)
            .zip(v_slices)
        {
            for (((p, &g), m), v) in ps
                .iter_mut()
                .zip(gs.iter())
                .zip(ms.iter_mut())
                .zip(vs.iter_mut())
            {
                *m = BETA1 * *m + (1.0 - BETA1) * g;
                *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
            }
        }
    }
}

/// Offset between the init stream and the shuffle/dropout stream, so the
/// two never replay the same ChaCha positions.
const TRAIN_STREAM_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

pub(crate) struct PreparedSample {
    pub tokens_a: Vec<usize>,
    pub tokens_b: Option<Vec<usize>>,
    pub targets_a: [bool; SECONDARY_COUNT],
    pub targets_b: [bool; PRIMARY_COUNT],
}

/// Tokenize a corpus against fixed parameters and derive both heads'
/// targets. Returns the samples plus how many were truncated.
pub(crate) fn prepare_corpus(
    params: &ModelParams,
    schema: &LabelSchema,
    corpus: &[TrainSample],
) -> (Vec<PreparedSample>, usize) {
    let mut truncated_samples = 0;
    let prepared = corpus
        .iter()
        .map(|s| {
            let (tokens_a, tokens_b, truncated) = net::tokenize_pair(
                &params.vocab,
                &params.config,
                &s.report_text,
                &s.clinical_text,
            );
            if truncated {
                truncated_samples += 1;
            }
            PreparedSample {
                tokens_a,
                tokens_b,
                targets_a: *s.secondary.values(),
                targets_b: *schema.propagate(&s.secondary).values(),
            }
        })
        .collect();
    (prepared, truncated_samples)
}

/// Train from scratch: builds the vocabulary from the corpus, initializes
/// from `cfg.seed`, and runs `cfg.epochs` epochs of mini-batch Adam on
/// loss_A + lambda * loss_B. Head-B targets are the taxonomy propagation
/// of each sample's gold labels. Identical (corpus, schema, cfg) inputs
/// reproduce the returned parameters bit for bit.
pub fn train(
    corpus: &[TrainSample],
    schema: &LabelSchema,
    cfg: &TrainConfig,
) -> Result<TrainOutput, LabelerError> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(LabelerError::EmptyCorpus);
    }
    let vocab = Vocab::build(
        corpus
            .iter()
            .flat_map(|s| [s.report_text.as_str(), s.clinical_text.as_str()]),
    );
    let mut params = ModelParams::init(vocab, cfg.model_config(), cfg.seed)?;
    let lambda = cfg.effective_lambda();
    let (prepared, truncated_samples) = prepare_corpus(&params, schema, corpus);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(TRAIN_STREAM_OFFSET));
    let mut adam = Adam::new(&params.net);
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut loss_trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        for i in (1..order.len()).rev() {
            let j = uniform_index(&mut rng, i + 1);
            order.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        for (batch_index, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut grads = params.net.zeros_like();
            let mut batch_loss = 0.0;
            for &idx in batch {
                let p = &prepared[idx];
                let cache = net::forward_sample(
                    &params,
                    &p.tokens_a,
                    p.tokens_b.as_deref(),
                    Mode::Train { rng: &mut rng },
                );
                batch_loss += net::backward_sample(
                    &params,
                    &cache,
                    &p.targets_a,
                    &p.targets_b,
                    cfg.focal_gamma,
                    cfg.focal_alpha,
                    lambda,
                    &mut grads,
                );
            }
            if !batch_loss.is_finite() {
                return Err(LabelerError::Divergence {
                    epoch,
                    batch: batch_index,
                });
            }
            let inv = 1.0 / batch.len() as f64;
            for gs in grads.tensor_slices_mut() {
                for g in gs {
                    *g *= inv;
                }
            }
            adam.step(&mut params.net, &grads, cfg.learning_rate);
            epoch_loss += batch_loss;
        }
        loss_trace.push(epoch_loss / prepared.len() as f64);
    }

    Ok(TrainOutput {
        params,
        loss_trace,
        truncated_samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeler::{EncoderConfig, Pooling};

    fn toy_corpus(schema: &LabelSchema) -> Vec<TrainSample> {
        let mut samples = Vec::new();
        let mut with_label = |name: &str, findings: &str| {
            let mut labels = SecondaryLabelVector::all_negative();
            labels.set(schema.secondary_index(name).unwrap(), true);
            samples.push(TrainSample {
                report_text: findings.to_string(),
                clinical_text: "性别：男。年龄：40。检查。".to_string(),
                secondary: schema.enforce_exclusion(&labels),
            });
        };
        with_label("肺结节", "双肺结节，随诊。");
        with_label("胸腔积液", "右侧胸腔积液。");
        with_label("心影增大", "心影增大。");
        with_label("未见明显异常", "两肺纹理清晰，未见明显异常。");
        samples
    }

    fn toy_config() -> TrainConfig {
        TrainConfig {
            encoder: EncoderConfig {
                embedding_dim: 8,
                max_seq_len: 32,
                pooling: Pooling::Mean,
                dropout_rate: 0.0,
            },
            learning_rate: 0.02,
            epochs: 40,
            batch_size: 2,
            seed: 11,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn loss_decreases_on_a_tiny_corpus() {
        let schema = LabelSchema::default_schema();
        let out = train(&toy_corpus(&schema), &schema, &toy_config()).unwrap();
        let first = out.loss_trace[0];
        let last = *out.loss_trace.last().unwrap();
        assert_eq!(out.loss_trace.len(), 40);
        assert!(
            last < 0.5 * first,
            "loss did not drop: first {first}, last {last}"
        );
        assert_eq!(out.truncated_samples, 0);
    }

    #[test]
    fn training_is_bit_reproducible() {
        let schema = LabelSchema::default_schema();
        let corpus = toy_corpus(&schema);
        let mut cfg = toy_config();
        cfg.encoder.dropout_rate = 0.1; // exercise the dropout stream too
        let a = train(&corpus, &schema, &cfg).unwrap();
        let b = train(&corpus, &schema, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.loss_trace, b.loss_trace);
    }

    #[test]
    fn different_seeds_give_different_parameters() {
        let schema = LabelSchema::default_schema();
        let corpus = toy_corpus(&schema);
        let mut cfg = toy_config();
        let a = train(&corpus, &schema, &cfg).unwrap();
        cfg.seed = 12;
        let b = train(&corpus, &schema, &cfg).unwrap();
        assert_ne!(a.params, b.params);
    }

    #[test]
    fn lambda_zero_never_touches_head_b() {
        let schema = LabelSchema::default_schema();
        let corpus = toy_corpus(&schema);
        let mut cfg = toy_config();
        cfg.use_hierarchy_head = false;
        let ablated = train(&corpus, &schema, &cfg).unwrap();
        // Same vocabulary/seed as the trainer used.
        let vocab = Vocab::build(
            corpus
                .iter()
                .flat_map(|s| [s.report_text.as_str(), s.clinical_text.as_str()]),
        );
        let init = ModelParams::init(vocab, cfg.model_config(), cfg.seed).unwrap();
        assert_eq!(ablated.params.net.head_b_w, init.net.head_b_w);
        assert_eq!(ablated.params.net.head_b_b, init.net.head_b_b);
        assert_ne!(ablated.params.net.head_a_w, init.net.head_a_w);
        assert_ne!(ablated.params.net.emb_a, init.net.emb_a);

        cfg.use_hierarchy_head = true;
        let full = train(&corpus, &schema, &cfg).unwrap();
        assert_ne!(full.params.net.head_b_w, init.net.head_b_w);
        // Both runs start from the identical initialization, so the seed
        // fixes everything except what lambda gates.
        assert_eq!(full.params.seed, ablated.params.seed);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let schema = LabelSchema::default_schema();
        assert!(matches!(
            train(&[], &schema, &toy_config()),
            Err(LabelerError::EmptyCorpus)
        ));
    }

    #[test]
    fn absurd_learning_rate_reports_divergence() {
        let schema = LabelSchema::default_schema();
        let mut cfg = toy_config();
        cfg.learning_rate = 1e300;
        cfg.batch_size = 1;
        cfg.epochs = 3;
        match train(&toy_corpus(&schema), &schema, &cfg) {
            Err(LabelerError::Divergence { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn truncation_is_counted() {
        let schema = LabelSchema::default_schema();
        let mut corpus = toy_corpus(&schema);
        corpus[0].report_text = "双肺结节".repeat(40);
        let mut cfg = toy_config();
        cfg.encoder.max_seq_len = 16;
        cfg.epochs = 1;
        let out = train(&corpus, &schema, &cfg).unwrap();
        // Only sample 0's report exceeds 16 tokens.
        assert_eq!(out.truncated_samples, 1);
        assert_eq!(out.params.config().encoder.max_seq_len, 16);
    }
}
