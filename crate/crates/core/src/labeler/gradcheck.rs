//! Finite-difference validation of the hand-rolled backward pass.
//!
//! The analytic gradient of the eval-mode batch loss is compared against
//! central differences, slot by slot. Head biases are always checked (they
//! receive gradient whenever the loss moves at all); a seeded sample of
//! the remaining slots covers embeddings, attention, and head weights.
//! A deliberate sign-flip fault is available to show the harness actually
//! catches wrong gradients.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::net::{self, Mode};
use super::train::{prepare_corpus, PreparedSample, TrainSample};
use super::{LabelerError, ModelParams, TrainConfig};
use crate::dataset::uniform_index;
use crate::taxonomy::LabelSchema;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradFault {
    None,
    /// Negate every analytic gradient before comparing.
    SignFlip,
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Extra randomly chosen parameter slots beyond the head biases.
    pub random_slots: usize,
    pub seed: u64,
    /// Central-difference step.
    pub step: f64,
    pub fault: GradFault,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            random_slots: 40,
            seed: 0,
            step: 1e-4,
            fault: GradFault::None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Flat index of the slot with the worst error.
    pub worst_slot: usize,
    pub checked_slots: usize,
}

fn batch_eval_loss(
    params: &ModelParams,
    prepared: &[PreparedSample],
    gamma: f64,
    alpha: f64,
    lambda: f64,
) -> f64 {
    let total: f64 = prepared
        .iter()
        .map(|p| {
            let cache = net::forward_sample(params, &p.tokens_a, p.tokens_b.as_deref(), Mode::Eval);
            super::loss::focal_loss(&cache.probs_a, &p.targets_a, gamma, alpha)
                + lambda * super::loss::focal_loss(&cache.probs_b, &p.targets_b, gamma, alpha)
        })
        .sum();
    total / prepared.len() as f64
}

/// Compare analytic and numeric gradients of the eval-mode batch loss at
/// the given parameters. Dropout is never applied, so the loss is a
/// deterministic function of the parameters.
pub fn grad_check(
    params: &ModelParams,
    corpus: &[TrainSample],
    schema: &LabelSchema,
    cfg: &TrainConfig,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport, LabelerError> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(LabelerError::EmptyCorpus);
    }
    if !opts.step.is_finite() || opts.step <= 0.0 {
        return Err(LabelerError::BadConfig {
            detail: format!("grad check step {} must be positive", opts.step),
        });
    }
    let (prepared, _) = prepare_corpus(params, schema, corpus);
    let gamma = cfg.focal_gamma;
    let alpha = cfg.focal_alpha;
    let lambda = cfg.effective_lambda();

    // Analytic gradient of the mean sample loss.
    let mut grads = params.net.zeros_like();
    for p in &prepared {
        let cache = net::forward_sample(params, &p.tokens_a, p.tokens_b.as_deref(), Mode::Eval);
        net::backward_sample(
            params,
            &cache,
            &p.targets_a,
            &p.targets_b,
            gamma,
            alpha,
            lambda,
            &mut grads,
        );
    }
    let inv = 1.0 / prepared.len() as f64;
    for gs in grads.tensor_slices_mut() {
        for g in gs {
            *g *= inv;
        }
    }

    let total = params.param_count();
    let mut slots: BTreeSet<usize> = params.net.head_bias_flat_indices().into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let want = (slots.len() + opts.random_slots).min(total);
    while slots.len() < want {
        slots.insert(uniform_index(&mut rng, total));
    }

    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_slot: 0,
        checked_slots: slots.len(),
    };
    for &slot in &slots {
        let origin = work.get_param(slot);
        work.set_param(slot, origin + opts.step);
        let plus = batch_eval_loss(&work, &prepared, gamma, alpha, lambda);
        work.set_param(slot, origin - opts.step);
        let minus = batch_eval_loss(&work, &prepared, gamma, alpha, lambda);
        work.set_param(slot, origin);
        let numeric = (plus - minus) / (2.0 * opts.step);
        let mut analytic = grads.get_flat(slot);
        if opts.fault == GradFault::SignFlip {
            analytic = -analytic;
        }
        let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8);
        if rel > report.max_relative_error {
            report.max_relative_error = rel;
            report.worst_slot = slot;
        }
    }
    Ok(report)
}
