//! Toolkit for turning raw chest X-ray studies (DICOM images plus free-text
//! Chinese reports) into a labeled, split, training-ready dataset, and for
//! training and evaluating the disease labelers that run on it.
//!
//! The pieces, roughly in pipeline order:
//!
//! * [`windowing`] — DICOM decoding and window-level conversion to 8-bit PNG.
//! * [`normalizer`] — report text cleaning: template-noise removal,
//!   punctuation normalization, age parsing.
//! * [`taxonomy`] — the two-level label space and its consistency rules.
//! * [`dataset`] — exclusion filtering, shuffled splitting, manifest I/O,
//!   corpus statistics.
//! * [`labeler`] — the trainable dual-encoder labeler, a rule lexicon
//!   labeler, training, checkpoints, and gradient checking.
//! * [`metrics`] — per-label F1 and Cohen's kappa with macro and
//!   prevalence-weighted aggregation.
//! * [`llm`] — prompt construction and response parsing for labeling via an
//!   external chat-completion service, with a mock transport for tests.

pub mod dataset;
pub mod labeler;
pub mod llm;
pub mod metrics;
pub mod normalizer;
pub mod taxonomy;
pub mod windowing;

pub use taxonomy::{LabelSchema, PrimaryLabelVector, SchemaError, SecondaryLabelVector};
