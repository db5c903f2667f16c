//! Per-label F1 and Cohen's kappa, with macro and prevalence-weighted
//! aggregation, plus the clinical-efficacy evaluation that scores generated
//! report text by labeling it and comparing against reference labels.
//!
//! "Weighted kappa" here means prevalence-weighted averaging of per-label
//! binary kappas. It is NOT the classical ordinal kappa with quadratic
//! weights; the two share a name and nothing else.
//!
//! Degenerate cases are pinned down rather than left to 0/0: F1 is 0 when
//! precision and recall are both 0, and kappa on constant identical vectors
//! is 1 (0 on any other zero-variance configuration) with a flag saying the
//! chance-agreement term was degenerate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taxonomy::SecondaryLabelVector;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("gold and prediction lengths differ: {gold} vs {pred}")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("no samples to evaluate")]
    EmptyInput,
    #[error("all labels have zero positive count; weights are undefined")]
    DegenerateWeights,
}

/// Confusion counts for one binary label.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryCounts {
    pub true_pos: u64,
    pub false_pos: u64,
    pub false_neg: u64,
    pub true_neg: u64,
}

impl BinaryCounts {
    pub fn from_vectors(gold: &[bool], pred: &[bool]) -> Result<Self, MetricsError> {
        if gold.len() != pred.len() {
            return Err(MetricsError::LengthMismatch {
                gold: gold.len(),
                pred: pred.len(),
            });
        }
        let mut c = BinaryCounts::default();
        for (g, p) in gold.iter().zip(pred) {
            match (g, p) {
                (true, true) => c.true_pos += 1,
                (false, true) => c.false_pos += 1,
                (true, false) => c.false_neg += 1,
                (false, false) => c.true_neg += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }

    pub fn merge(&mut self, other: &BinaryCounts) {
        self.true_pos += other.true_pos;
        self.false_pos += other.false_pos;
        self.false_neg += other.false_neg;
        self.true_neg += other.true_neg;
    }
}

/// tp / (tp + fp); 0 when nothing was predicted positive.
pub fn precision(c: &BinaryCounts) -> f64 {
    let denom = c.true_pos + c.false_pos;
    if denom == 0 {
        0.0
    } else {
        c.true_pos as f64 / denom as f64
    }
}

/// tp / (tp + fn); 0 when nothing was actually positive.
pub fn recall(c: &BinaryCounts) -> f64 {
    let denom = c.true_pos + c.false_neg;
    if denom == 0 {
        0.0
    } else {
        c.true_pos as f64 / denom as f64
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1(c: &BinaryCounts) -> f64 {
    let p = precision(c);
    let r = recall(c);
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Cohen's kappa with its degeneracy flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    pub value: f64,
    /// True when chance agreement was exactly 1 (both vectors constant and
    /// identical in the only reachable case) and the formula's 0/0 was
    /// resolved by convention.
    pub degenerate: bool,
}

/// Cohen's kappa: (p_o - p_e) / (1 - p_e) from the two marginals.
pub fn kappa(gold: &[bool], pred: &[bool]) -> Result<Kappa, MetricsError> {
    if gold.len() != pred.len() {
        return Err(MetricsError::LengthMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    if gold.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let n = gold.len() as f64;
    let agree = gold.iter().zip(pred).filter(|(g, p)| g == p).count() as f64;
    let gold_pos = gold.iter().filter(|g| **g).count() as f64;
    let pred_pos = pred.iter().filter(|p| **p).count() as f64;
    let p_o = agree / n;
    let p_e = (gold_pos / n) * (pred_pos / n) + ((n - gold_pos) / n) * ((n - pred_pos) / n);
    if p_e == 1.0 {
        return Ok(Kappa {
            value: if p_o == 1.0 { 1.0 } else { 0.0 },
            degenerate: true,
        });
    }
    Ok(Kappa {
        value: (p_o - p_e) / (1.0 - p_e),
        degenerate: false,
    })
}

/// Everything reported for one label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub label: String,
    pub counts: BinaryCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub kappa: f64,
    pub kappa_degenerate: bool,
    /// Gold positive count / total samples.
    pub prevalence: f64,
}

impl LabelMetrics {
    pub fn from_vectors(label: &str, gold: &[bool], pred: &[bool]) -> Result<Self, MetricsError> {
        let counts = BinaryCounts::from_vectors(gold, pred)?;
        if counts.total() == 0 {
            return Err(MetricsError::EmptyInput);
        }
        let k = kappa(gold, pred)?;
        Ok(LabelMetrics {
            label: label.to_string(),
            counts,
            precision: precision(&counts),
            recall: recall(&counts),
            f1: f1(&counts),
            kappa: k.value,
            kappa_degenerate: k.degenerate,
            prevalence: (counts.true_pos + counts.false_neg) as f64 / counts.total() as f64,
        })
    }

    pub fn gold_positive_count(&self) -> u64 {
        self.counts.true_pos + self.counts.false_neg
    }
}

/// Macro (unweighted) and prevalence-weighted means across labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub macro_kappa: f64,
    pub weighted_kappa: f64,
}

/// Aggregate per-label metrics. Weights are gold positive counts normalized
/// to sum to 1; all-zero positives make the weights undefined and error out.
pub fn aggregate(per_label: &[LabelMetrics]) -> Result<AggregateMetrics, MetricsError> {
    if per_label.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let n = per_label.len() as f64;
    let total_pos: u64 = per_label.iter().map(|m| m.gold_positive_count()).sum();
    if total_pos == 0 {
        return Err(MetricsError::DegenerateWeights);
    }
    let mut macro_f1 = 0.0;
    let mut macro_kappa = 0.0;
    let mut weighted_f1 = 0.0;
    let mut weighted_kappa = 0.0;
    for m in per_label {
        macro_f1 += m.f1 / n;
        macro_kappa += m.kappa / n;
        let w = m.gold_positive_count() as f64 / total_pos as f64;
        weighted_f1 += w * m.f1;
        weighted_kappa += w * m.kappa;
    }
    Ok(AggregateMetrics {
        macro_f1,
        weighted_f1,
        macro_kappa,
        weighted_kappa,
    })
}

/// F1 over counts pooled across every label (micro average).
pub fn micro_f1(per_label: &[LabelMetrics]) -> f64 {
    let mut pooled = BinaryCounts::default();
    for m in per_label {
        pooled.merge(&m.counts);
    }
    f1(&pooled)
}

/// A full evaluation: per-label rows, aggregates, and the micro average
/// (whether a headline F1 means macro or micro varies by convention, so
/// both are always present).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub per_label: Vec<LabelMetrics>,
    pub aggregates: AggregateMetrics,
    pub micro_f1: f64,
    pub sample_count: usize,
}

/// Score predicted label vectors against gold, per label and aggregate.
pub fn evaluate(
    labels: &[String],
    gold: &[SecondaryLabelVector],
    pred: &[SecondaryLabelVector],
) -> Result<EvaluationReport, MetricsError> {
    if gold.len() != pred.len() {
        return Err(MetricsError::LengthMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    if gold.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let per_label: Vec<LabelMetrics> = labels
        .iter()
        .enumerate()
        .map(|(i, label)| {
            let g: Vec<bool> = gold.iter().map(|v| v.get(i)).collect();
            let p: Vec<bool> = pred.iter().map(|v| v.get(i)).collect();
            LabelMetrics::from_vectors(label, &g, &p)
        })
        .collect::<Result<_, _>>()?;
    let aggregates = aggregate(&per_label)?;
    let micro = micro_f1(&per_label);
    Ok(EvaluationReport {
        per_label,
        aggregates,
        micro_f1: micro,
        sample_count: gold.len(),
    })
}

/// Label each generated report with the supplied labeler, then score the
/// resulting vectors against the references.
pub fn clinical_efficacy<F>(
    generated_reports: &[String],
    reference_labels: &[SecondaryLabelVector],
    label_names: &[String],
    mut labeler: F,
) -> Result<EvaluationReport, MetricsError>
where
    F: FnMut(&str) -> SecondaryLabelVector,
{
    if generated_reports.len() != reference_labels.len() {
        return Err(MetricsError::LengthMismatch {
            gold: reference_labels.len(),
            pred: generated_reports.len(),
        });
    }
    if generated_reports.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let pred: Vec<SecondaryLabelVector> = generated_reports.iter().map(|t| labeler(t)).collect();
    evaluate(label_names, reference_labels, &pred)
}

impl EvaluationReport {
    /// Render as a delimited table: one row per label, then an aggregates
    /// row and a micro row. Numbers carry four decimals.
    pub fn to_table(&self, delimiter: char) -> String {
        let d = delimiter;
        let mut out = String::new();
        out.push_str(&format!(
            "label{d}precision{d}recall{d}f1{d}kappa{d}prevalence{d}gold_positives\n"
        ));
        for m in &self.per_label {
            out.push_str(&format!(
                "{}{d}{:.4}{d}{:.4}{d}{:.4}{d}{:.4}{d}{:.4}{d}{}\n",
                m.label,
                m.precision,
                m.recall,
                m.f1,
                m.kappa,
                m.prevalence,
                m.gold_positive_count()
            ));
        }
        out.push_str(&format!(
            "macro{d}{d}{d}{:.4}{d}{:.4}{d}{d}\n",
            self.aggregates.macro_f1, self.aggregates.macro_kappa
        ));
        out.push_str(&format!(
            "weighted{d}{d}{d}{:.4}{d}{:.4}{d}{d}\n",
            self.aggregates.weighted_f1, self.aggregates.weighted_kappa
        ));
        out.push_str(&format!("micro{d}{d}{d}{:.4}{d}{d}{d}\n", self.micro_f1));
        out
    }
}
